"""Simulation and Lyapunov analysis of JSQ/JLLQ queueing networks."""

__version__ = "0.1.0"
