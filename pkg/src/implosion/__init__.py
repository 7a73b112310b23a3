"""Self-similar implosion profiles for compressible Euler and Navier-Stokes."""

__version__ = "0.1.0"
