"""Deterministic simulation and benchmark suite for flexible human-to-robot
handover: grasp-trajectory tracking by association, future grasp prediction,
and a closed-loop five-phase handover controller over synthetic scenes."""

__version__ = "0.1.0"
