"""Gossip-augmented coordination for agent populations: a deterministic simulator."""

__version__ = "0.1.0"
