"""Large-N machinery for radial Dunkl processes and spherical integrals."""

__version__ = "0.1.0"
