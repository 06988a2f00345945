"""
Schemas package for puprior.

This package contains the JSON Schemas of the files the CLI writes and the
recommended default grids and tolerances shared by the estimators.
"""

__version__ = "1.0.0"
