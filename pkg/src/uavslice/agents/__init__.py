"""Learners (MAPPO, MADDPG, MADQN) and the two reference baselines."""
from .base import ALGORITHMS, Agent, HoverPolicy, RandomPolicy, load_agent, make_agent

__all__ = ["ALGORITHMS", "Agent", "HoverPolicy", "RandomPolicy", "load_agent", "make_agent"]
