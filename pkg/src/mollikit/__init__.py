"""Order-k smoothing kernels and numerical checks of their approximation properties."""

__version__ = "0.1.0"
