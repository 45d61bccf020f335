"""Privacy-preserving multi-factor authentication for robotic delivery."""

__version__ = "0.1.0"
