"""
Correlation structures, divergences and two-sample tests.
"""
