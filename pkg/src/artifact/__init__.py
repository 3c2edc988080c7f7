"""Products of unitarily invariant random matrices and their limiting line ensemble."""

__version__ = "0.1.0"
