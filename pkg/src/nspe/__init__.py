"""Node-specific parameter estimation over diffusion networks."""

__version__ = "0.1.0"
