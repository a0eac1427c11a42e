import numpy as np
import pytest

from matrix_core import as_row_matrix


@pytest.fixture
def gaussian_matrix():
    """Factory: dense Gaussian n x d as a SparseRowMatrix"""
    def make(n, d, seed=0):
        return as_row_matrix(np.random.default_rng(seed).standard_normal((n, d)))
    return make


@pytest.fixture
def example_3x2():
    return as_row_matrix([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
