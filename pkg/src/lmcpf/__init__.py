"""Localized mixture-coefficients particle filter with LETKF and LAPF references."""

__version__ = "0.1.0"
