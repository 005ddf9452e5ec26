"""Posterior sampling via autoregressive generation for informed meta-bandits."""
from .core import BanditTask, History, PotentialOutcomesTable, best_action, empirical_mean, episode_regret

__version__ = "0.1.0"
