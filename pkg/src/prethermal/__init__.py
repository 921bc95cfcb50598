"""Small-system laboratory for Floquet prethermalization of dipolar nuclear spins."""

__version__ = "0.1.0"
