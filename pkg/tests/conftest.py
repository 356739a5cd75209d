"""Shared helpers for the test suite."""

import numpy as np
import pytest

from polyfeat import BoxDomain, GradientOracle, PolynomialBasis, orthonormalize


def random_orthonormal(d: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """d x m matrix with orthonormal columns."""
    A = rng.standard_normal((d, m))
    Q, _ = np.linalg.qr(A)
    return Q[:, :m]


def random_feature_map(basis: PolynomialBasis, m: int, rng: np.random.Generator):
    """Random member of the R-orthonormal feature class."""
    return orthonormalize(basis, rng.standard_normal((basis.K, m)))


def coordinate_oracle(d: int, coord: int = 0) -> GradientOracle:
    """Oracle for u(x, y) = x_coord (no y dependence)."""

    def grad(x, y):
        g = np.zeros((x.shape[0], d))
        g[:, coord] = 1.0
        return g

    return GradientOracle(d=d, d_y=1, value=lambda x, y: x[:, coord], gradient_x=grad)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_basis_d8():
    return PolynomialBasis(BoxDomain(8), 2)
