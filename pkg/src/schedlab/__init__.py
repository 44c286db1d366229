"""Desk-scale lab for a knowledge-assisted DDPG scheduler for time-sensitive traffic."""

__version__ = "0.1.0"
