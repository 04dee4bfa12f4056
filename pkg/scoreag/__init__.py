"""
ScoreAG: score-based generation of unrestricted adversarial examples,
adversarial transformations and adversarial purification.
"""

__version__ = "0.1.0"
