"""Upper-limb activity recognition from joint-angle windows.

A self-contained harness: a small reverse-mode autodiff library, window and
spectral features, six model families, Adam training with early stopping,
subject-wise cross-validation and a command-line driver.
"""

__version__ = "0.1.0"
