"""Elastic wave scattering by boundary and volume integral equations."""

__version__ = "0.1.0"
