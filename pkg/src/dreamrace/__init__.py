"""Model-based RL for vision-based quadrotor racing at desk scale."""

__version__ = "0.1.0"
