"""Regularized multi-output regression for voxel-wise encoding models."""
__version__ = '0.1.0'
