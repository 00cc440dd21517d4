"""Neural-network solvers for the heat equation and semilinear heat equations."""
__version__ = "0.1.0"
