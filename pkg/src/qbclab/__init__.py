"""qbclab: numerics for compound classical-quantum broadcast channels with confidential messages."""

__version__ = "0.1.0"
