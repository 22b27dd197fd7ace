"""Multi-artist style transfer with anisotropic stroke control."""

__version__ = "0.1.0"
