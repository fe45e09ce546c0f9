"""Gaussian approximation of noisy singular vectors: bounds, Monte Carlo
checks and an MPSK order-detection pipeline built on them."""

__version__ = "0.1.0"
