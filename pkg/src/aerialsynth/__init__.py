"""Synthetic aerial photogrammetry data: labeled scenes, survey simulation, annotation and evaluation."""

__version__ = "0.1.0"
