"""Symbolic constraint analysis for Hamiltonian BF-type gauge theories."""

from __future__ import annotations

__version__ = "0.1.0"
