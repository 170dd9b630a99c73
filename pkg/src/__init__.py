"""Desk-scale laboratory for correlation-shift adaptation of multivariate time series classifiers."""
