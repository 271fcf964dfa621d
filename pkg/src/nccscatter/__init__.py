"""nccscatter package: reactive scattering in natural collision coordinates."""

__version__ = "0.1.0"
