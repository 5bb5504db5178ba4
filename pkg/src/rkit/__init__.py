"""Resonance toolkit: lattices, averaging, slow systems, weak KAM and isolating blocks."""

__version__ = "0.1.0"
