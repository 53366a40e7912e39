"""cechkit: discrete chains, covers, nerves and cycle detouring on a round-sphere
model of a cusped boundary."""

__version__ = "0.3.0"
