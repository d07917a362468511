"""Constrained Bezier reference trajectories for differentially flat systems."""
