"""Multiresolution enhancement of DG data with SIAC filters, and indicator-driven adaptivity."""

__version__ = "0.1.0"
