"""
Pretraining, adaptation, voting inference and the experiment drivers.
"""
