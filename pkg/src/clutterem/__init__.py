"""Joint clutter classification and multi-target detection via latent-variable EM."""

__version__ = "0.1.0"
