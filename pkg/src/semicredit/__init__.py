"""Semivalue credit assignment for cooperative multiagent continuous control."""

__version__ = "0.1.0"
