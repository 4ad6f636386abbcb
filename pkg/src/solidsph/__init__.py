"""Solid spherical harmonic invariants for 3D volumes.

Locally rotation invariant image operators built from spherical spectrum and
bispectrum of learned solid spherical harmonic responses, with shallow
classifiers, synthetic data generators and a CLI tying them together.
"""

__version__ = "0.1.0"
