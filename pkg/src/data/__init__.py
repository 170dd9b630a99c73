"""
Synthetic domains, windowing and the MTS1/MTSY file format.
"""
