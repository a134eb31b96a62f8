"""Heat current in mass-disordered harmonic chains."""
__version__ = "0.1.0"
