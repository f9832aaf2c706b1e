"""Deterministic adaptive assembly-guidance engine.

Builds a digital twin of a tabletop workspace from simulated 2D detections,
issues step-by-step pick/place instructions, classifies hand interactions,
and replans the assembly on deviation via constraint-based graph search with
static stability scoring.
"""

__version__ = "0.1.0"
