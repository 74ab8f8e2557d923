"""Real-time dynamics of lattice spin models from a numerical linked cluster expansion."""

__version__ = "0.1.0"
