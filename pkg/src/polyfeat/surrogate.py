"""Conditional gradient covariances and the quadratic surrogate eigenproblem.

For a family u(., y), the covariance M(x) = E_y[grad u grad u^T] and its
top-m eigenvectors V(x) define a quadratic surrogate of the projection
loss.  Over the dictionary, the surrogate is trace(G^T H G) for a
symmetric PSD matrix H, so its constrained minimizer is read off the
smallest generalized eigenpairs of the pencil (H, R).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .polybasis import FeatureMap, PolynomialBasis
from .sampling import BoxDomain, TensorizedSample, sample_uniform

# eigenvalues of an estimated covariance below this fraction of the largest
# one are treated as exactly zero in rank-sensitive quantities
EIG_FLOOR_RTOL = 1e-12

WEIGHT_LAMBDA_MAX = "lambda-max"
WEIGHT_LAMBDA_M = "lambda-m"


@dataclass(frozen=True)
class GradientOracle:
    """Scalar family u(x, y) with an analytic x-gradient.

    ``value`` and ``gradient_x`` take batched arguments: x of shape
    (n, d) and y of shape (n, d_y), returning (n,) and (n, d).
    """

    d: int
    d_y: int
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sup_grad_bound: float | None = None

    def check_gradient(
        self,
        x_domain: BoxDomain,
        y_domain: BoxDomain,
        n_points: int = 100,
        seed: int = 0,
        h: float = 1e-5,
        tol: float = 1e-5,
    ) -> float:
        """Max abs deviation between analytic and central-difference gradients.

        Raises AssertionError when the deviation exceeds ``tol``.
        """
        x = sample_uniform(x_domain, n_points, seed)
        y = sample_uniform(y_domain, n_points, seed + 1)
        analytic = self.gradient_x(x, y)
        fd = np.empty_like(analytic)
        for j in range(self.d):
            step = np.zeros_like(x)
            step[:, j] = h
            fd[:, j] = (self.value(x + step, y) - self.value(x - step, y)) / (2 * h)
        worst = float(np.max(np.abs(analytic - fd)))
        if worst > tol:
            raise AssertionError(f"gradient check failed: max deviation {worst:.3e} > {tol:.1e}")
        return worst

    def rescaled(self, factor: float) -> "GradientOracle":
        """Oracle for factor * u; gradients and the sup bound scale alike."""
        value, gradient_x = self.value, self.gradient_x
        bound = None if self.sup_grad_bound is None else abs(factor) * self.sup_grad_bound
        return GradientOracle(
            d=self.d,
            d_y=self.d_y,
            value=lambda x, y: factor * value(x, y),
            gradient_x=lambda x, y: factor * gradient_x(x, y),
            sup_grad_bound=bound,
        )


@dataclass(frozen=True)
class ConditionalSpectrum:
    """Per-x-sample eigendecomposition of the estimated gradient covariance.

    ``eigenvalues`` are sorted descending per sample; ``directions`` holds
    the m leading orthonormal eigenvectors.  ``gradients`` caches the raw
    per-pair gradients so downstream losses reuse the exact same numbers.
    """

    sample: TensorizedSample
    m: int
    covariances: np.ndarray      # (n_x, d, d)
    eigenvalues: np.ndarray      # (n_x, d), descending
    directions: np.ndarray       # (n_x, d, m)
    gradients: np.ndarray        # (n_x, n_y, d)

    @property
    def n_x(self) -> int:
        return self.covariances.shape[0]

    @property
    def d(self) -> int:
        return self.covariances.shape[1]

    def floored_eigenvalues(self) -> np.ndarray:
        """Eigenvalues with the relative floor applied (tiny tails -> 0)."""
        lam = self.eigenvalues.copy()
        lead = lam[:, :1]
        lam[lam < EIG_FLOOR_RTOL * np.maximum(lead, 0.0)] = 0.0
        return lam

    def numerical_ranks(self) -> np.ndarray:
        return np.count_nonzero(self.floored_eigenvalues() > 0.0, axis=1)


def estimate_conditional_spectrum(
    oracle: GradientOracle,
    sample: TensorizedSample,
    m: int,
) -> ConditionalSpectrum:
    """Monte-Carlo covariance of grad_x u over the y-sample, per x-sample.

    M_i = (1/n_y) sum_j grad u(x_i, y_j) grad u(x_i, y_j)^T, followed by a
    symmetric eigendecomposition of every M_i.
    """
    d = oracle.d
    if not 1 <= m <= d:
        raise ValueError(f"m must satisfy 1 <= m <= {d}")
    x_all, y_all = sample.expand_pairs()
    grads = oracle.gradient_x(x_all, y_all).reshape(sample.n_x, sample.n_y, d)
    M = np.einsum("ijd,ije->ide", grads, grads) / sample.n_y
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    w, V = np.linalg.eigh(M)            # ascending
    w = w[:, ::-1]
    V = V[:, :, ::-1]
    return ConditionalSpectrum(
        sample=sample,
        m=m,
        covariances=M,
        eigenvalues=np.ascontiguousarray(w),
        directions=np.ascontiguousarray(V[:, :, :m]),
        gradients=grads,
    )


def tail_energy(spectrum: ConditionalSpectrum, m: int | None = None) -> float:
    """Mean eigenvalue mass beyond the first m directions (epsilon-hat).

    A feature-independent lower bound on the projection loss; tiny
    eigenvalues below the relative floor count as zero.
    """
    if m is None:
        m = spectrum.m
    if not 0 <= m <= spectrum.d:
        raise ValueError("m out of range")
    lam = spectrum.floored_eigenvalues()
    return float(lam[:, m:].sum(axis=1).mean()) if m < spectrum.d else 0.0


@dataclass(frozen=True)
class SurrogatePencil:
    """Matrices (H, R) of the quadratic surrogate trace(G^T H G).

    H = H1 - H2 with both parts PSD; R is the SPD gradient Gram matrix of
    the dictionary; the surrogate minimizer over {G : G^T R G = I_m} is
    given by the m smallest generalized eigenvectors.
    """

    H: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    R: np.ndarray
    m: int
    basis: PolynomialBasis = field(repr=False)
    weighting: str = WEIGHT_LAMBDA_MAX

    def to_dict(self) -> dict:
        return {
            "H": self.H.tolist(),
            "H1": self.H1.tolist(),
            "H2": self.H2.tolist(),
            "R": self.R.tolist(),
            "m": self.m,
            "weighting": self.weighting,
            "basis": self.basis.descriptor(),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "SurrogatePencil":
        basis = PolynomialBasis.from_descriptor(doc["basis"])
        H = np.asarray(doc["H"], dtype=float)
        return cls(H=H,
                   H1=np.asarray(doc["H1"], dtype=float),
                   H2=np.asarray(doc["H2"], dtype=float),
                   R=np.asarray(doc["R"], dtype=float),
                   m=int(doc["m"]),
                   basis=basis,
                   weighting=doc.get("weighting", WEIGHT_LAMBDA_MAX))

    @classmethod
    def load(cls, path) -> "SurrogatePencil":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def assemble_pencil(
    oracle: GradientOracle,
    sample: TensorizedSample,
    basis: PolynomialBasis,
    m: int,
    weighting: str = WEIGHT_LAMBDA_MAX,
    spectrum: ConditionalSpectrum | None = None,
) -> SurrogatePencil:
    """Monte-Carlo assembly of the surrogate pencil on a tensorized sample.

    H1 averages w(x_i) J_i^T J_i and H2 averages w(x_i) J_i^T V_i V_i^T J_i
    over the x-sample, with J_i the dictionary gradient at x_i and w the
    eigenvalue weight (largest by default).
    """
    if weighting not in (WEIGHT_LAMBDA_MAX, WEIGHT_LAMBDA_M):
        raise ValueError(f"unknown weighting {weighting!r}")
    if spectrum is None:
        spectrum = estimate_conditional_spectrum(oracle, sample, m)
    elif spectrum.sample is not sample or spectrum.m != m:
        raise ValueError("spectrum does not match the given sample and m")
    if basis.K < m:
        raise ValueError("dictionary too small: K < m")
    w = spectrum.eigenvalues[:, 0] if weighting == WEIGHT_LAMBDA_MAX else spectrum.eigenvalues[:, m - 1]
    J = basis.gradient(sample.x_points)                       # (n_x, d, K)
    H1 = np.einsum("i,idk,idl->kl", w, J, J, optimize=True) / sample.n_x
    P = np.einsum("idk,idm->ikm", J, spectrum.directions)     # J_i^T V_i
    H2 = np.einsum("i,ikm,ilm->kl", w, P, P, optimize=True) / sample.n_x
    H1 = 0.5 * (H1 + H1.T)
    H2 = 0.5 * (H2 + H2.T)
    return SurrogatePencil(H=H1 - H2, H1=H1, H2=H2, R=basis.gram_matrix(),
                           m=m, basis=basis, weighting=weighting)


def solve_pencil(H: np.ndarray, R: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """The m smallest generalized eigenpairs of the symmetric pencil (H, R).

    Cholesky reduction to a standard symmetric problem (LAPACK sygv
    family); eigenvalues ascend, eigenvectors satisfy G^T R G = I, and
    each column's sign makes its largest-magnitude entry positive.
    """
    if not 1 <= m <= R.shape[0]:
        raise ValueError("m out of range for the pencil size")
    try:
        scipy.linalg.cholesky(R, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ValueError("R is not positive definite") from exc
    eigvals, vecs = scipy.linalg.eigh(H, R, subset_by_index=[0, m - 1])
    for c in range(vecs.shape[1]):
        lead = np.argmax(np.abs(vecs[:, c]))
        if vecs[lead, c] < 0:
            vecs[:, c] = -vecs[:, c]
    return eigvals, vecs


def minimize_surrogate(pencil: SurrogatePencil) -> tuple[FeatureMap, np.ndarray]:
    """Feature map minimizing the surrogate over the R-orthonormal class.

    The achieved objective equals the sum of the returned eigenvalues,
    the m smallest of the pencil (H, R).
    """
    eigvals, vecs = solve_pencil(pencil.H, pencil.R, pencil.m)
    return FeatureMap(pencil.basis, vecs), eigvals
