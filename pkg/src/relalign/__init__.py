"""Unsupervised object matching across relational datasets.

Each dataset is embedded with random-walk skip-gram vectors; per-dataset
projection matrices are then fitted so the projected vector distributions
agree under a Gaussian-kernel MMD, and objects are matched by Euclidean
distance in the shared space.
"""

__version__ = "0.1.0"
