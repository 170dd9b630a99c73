"""
Closed-form spectral alignment of Gaussian domains.
"""
