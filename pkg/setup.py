"""
voxreg
======

Regularized multi-output regression for voxel-wise fMRI encoding models:
OLS, ridge with per-voxel GCV, elastic net with per-voxel cross-validation,
a hierarchical small-area (SAE) model fitted by Gibbs sampling, and spatial
smoothing of coefficient fields, scored by normalized RSS and zero-shot
classification.

Example
```````
Fit ridge to the bundled toy dataset and evaluate it by nested cross-validation:

.. code:: sh

    voxreg fit --dataset toy:mixed --method ridge --seed 0 --output out/
    voxreg evaluate --dataset toy:mixed --method ridge --seed 0 --output out/eval
"""
from setuptools import setup, find_packages

setup(
    name='voxreg',
    version='0.1.0', packages=find_packages(exclude=['tests']),
    license='MIT',
    long_description=__doc__,
    description='Shrinkage and smoothing estimators for voxel-wise encoding models.',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Natural Language :: English',
        'License :: OSI Approved :: MIT License',
        'Intended Audience :: Science/Research',
        'Framework :: AsyncIO',
        'Operating System :: OS Independent',
        'Topic :: Scientific/Engineering :: Medical Science Apps.'
    ],
    install_requires=['mongoengine', 'numpy>=1.20', 'pandas>=1.5', 'pyparsing>=3.0', 'scipy>=1.7'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['voxreg=voxreg.cli:main']},
    keywords='fmri ridge elastic-net gibbs small-area-estimation smoothing',
    python_requires='>=3.8'
)
