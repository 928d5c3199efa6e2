"""Rate-equation superradiance of N two-level atoms, with and without incoherent loss."""

__version__ = "0.1.0"
