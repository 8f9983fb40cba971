"""Multi-UAV edge-computing simulator with a trained cost-matrix planner and a greedy baseline."""

__version__ = "0.1.0"
