"""
Test package for ScoreAG.
"""
