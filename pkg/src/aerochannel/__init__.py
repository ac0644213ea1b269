"""Particle-transmission Monte Carlo and infection-rate analysis on discrete memoryless channels."""

__version__ = "0.1.0"
