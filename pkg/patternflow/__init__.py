"""Gradient-flow simulator for RLVR and SFT on a tabular reasoning-pattern policy."""

__version__ = "1.0.0"
