"""Box loco-manipulation at desk scale: reduced-order simulation, reward
calculus, PPO skill training, skill transitions, and teleoperation."""

__version__ = "0.1.0"
