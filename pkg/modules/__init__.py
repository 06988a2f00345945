"""
Modules package for puprior.

This package contains the components for class-prior estimation from positive
and unlabeled data: the dataset and Gaussian basis core, the f-divergence
catalog, the divergence estimators and baselines, the density-ratio
classifier, cross-validation, data input/output, experiments and export.
"""

__version__ = "1.0.0"
