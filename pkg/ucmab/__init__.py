"""Uplifted contextual bandits, an uplift-forest baseline with drift detection, and their evaluation"""

__version__ = "1.0.0"
