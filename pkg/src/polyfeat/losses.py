"""Monte-Carlo loss estimators, projector utilities, and bound checks.

The central quantity is the projection loss: the mean squared norm of
grad_x u left unexplained by the column span of the feature Jacobian.
Its truncated variant first projects the gradient onto the leading
directions of the conditional covariance, and the quadratic surrogate
weights the misalignment of the feature Jacobian with those directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .polybasis import RANK_RTOL, FeatureMap, PolynomialMap
from .sampling import BoxDomain, TensorizedSample, sample_uniform
from .surrogate import ConditionalSpectrum, GradientOracle, tail_energy


class SampleMismatchError(ValueError):
    """Spectrum and sample arguments do not come from the same draw."""


@dataclass(frozen=True)
class LossReport:
    """All monitored training-loss values on one shared tensorized sample."""

    loss: float             # projection loss J-hat
    truncated_loss: float   # truncated projection loss
    surrogate_loss: float   # covariance-weighted quadratic surrogate
    tail: float             # feature-independent lower bound epsilon-hat
    gradient_energy: float  # mean squared gradient norm of u

    def sandwich_holds(self, rtol: float = 1e-9) -> bool:
        """Truncated <= full <= truncated + tail, and full >= (truncated+tail)/2."""
        slack = rtol * max(self.gradient_energy, 1.0)
        return (
            self.truncated_loss <= self.loss + slack
            and self.loss <= self.truncated_loss + self.tail + slack
            and 0.5 * (self.truncated_loss + self.tail) <= self.loss + slack
        )

    def csv_row(self, tag: str, n_x: int, n_y: int, e_hat: float | None = None) -> list[str]:
        """Audit row (tag, n_X, n_Y, losses..., e_hat) for a report CSV."""
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        return [tag, str(n_x), str(n_y), fmt(self.loss), fmt(self.truncated_loss),
                fmt(self.surrogate_loss), fmt(self.tail), fmt(e_hat)]


LOSS_REPORT_COLUMNS = ["tag", "n_X", "n_Y", "J_hat", "J_trunc_hat", "L_hat", "epsilon_hat", "e_hat"]


def write_report_csv(rows: list[list[str]], path) -> None:
    """Write LossReport audit rows produced by LossReport.csv_row."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_REPORT_COLUMNS)
        writer.writerows(rows)


def projector(B: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span of B.

    Rank is decided by singular values above RANK_RTOL * sigma_max, so a
    zero matrix maps to the zero projector.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.ndim != 2:
        raise ValueError("B must be a matrix")
    U, s, _ = scipy.linalg.svd(B, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((B.shape[0], B.shape[0]))
    r = int(np.sum(s > RANK_RTOL * s[0]))
    Q = U[:, :r]
    return Q @ Q.T


def _projected_sq_norms(jacobians: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Squared norms of the projections of vectors onto span(jacobian), batched.

    jacobians: (n, d, m); vectors: (n, d).  Rank-deficient Jacobians are
    handled through the shared singular-value cutoff.
    """
    U, s, _ = np.linalg.svd(jacobians, full_matrices=False)
    keep = s > RANK_RTOL * np.maximum(s[:, :1], np.finfo(float).tiny)
    coeff = np.einsum("ndr,nd->nr", U, vectors)
    coeff[~keep] = 0.0
    return np.einsum("nr,nr->n", coeff, coeff)


def gradient_loss(
    oracle: GradientOracle,
    g: PolynomialMap,
    x: np.ndarray,
    y: np.ndarray,
) -> float:
    """Projection loss J-hat on explicit (x, y) pairs.

    Mean of ||grad u - P_{span(grad g(x))} grad u||^2; depends on g only
    through the column span of its Jacobian.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape[0] == 0:
        raise ValueError("empty pair list")
    grads = oracle.gradient_x(x, y)
    jac = g.jacobian(x)
    total = np.einsum("nd,nd->n", grads, grads)
    return float(np.mean(total - _projected_sq_norms(jac, grads)))


def gradient_energy(oracle: GradientOracle, x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared gradient norm of u over the pairs."""
    grads = oracle.gradient_x(np.atleast_2d(x), np.atleast_2d(y))
    return float(np.mean(np.einsum("nd,nd->n", grads, grads)))


def _require_matching(sample: TensorizedSample, spectrum: ConditionalSpectrum) -> None:
    if spectrum.sample is sample:
        return
    same = (
        spectrum.sample.x_points.shape == sample.x_points.shape
        and spectrum.sample.y_points.shape == sample.y_points.shape
        and np.array_equal(spectrum.sample.x_points, sample.x_points)
        and np.array_equal(spectrum.sample.y_points, sample.y_points)
    )
    if not same:
        raise SampleMismatchError("spectrum was estimated on a different sample")


def truncated_gradient_loss(
    oracle: GradientOracle,
    g: PolynomialMap,
    sample: TensorizedSample,
    spectrum: ConditionalSpectrum,
) -> float:
    """Truncated projection loss on the tensorized sample.

    The gradient of u is first projected onto the m leading covariance
    directions at each x-sample, then measured against span(grad g).
    """
    _require_matching(sample, spectrum)
    V = spectrum.directions                          # (n_x, d, m)
    grads = spectrum.gradients                       # (n_x, n_y, d)
    trunc = np.einsum("idm,ijd->ijm", V, grads)
    trunc = np.einsum("idm,ijm->ijd", V, trunc)      # P_V grad u
    jac = g.jacobian(sample.x_points)                # (n_x, d, m_g)
    U, s, _ = np.linalg.svd(jac, full_matrices=False)
    keep = s > RANK_RTOL * np.maximum(s[:, :1], np.finfo(float).tiny)
    coeff = np.einsum("idr,ijd->ijr", U, trunc)
    coeff = coeff * keep[:, None, :]
    total = np.einsum("ijd,ijd->ij", trunc, trunc)
    proj = np.einsum("ijr,ijr->ij", coeff, coeff)
    return float(np.mean(total - proj))


def surrogate_loss(
    oracle: GradientOracle,
    g: PolynomialMap,
    sample: TensorizedSample,
    spectrum: ConditionalSpectrum,
) -> float:
    """Quadratic surrogate: mean of lambda_1(M_i) ||P-perp_{V_i} grad g(x_i)||_F^2.

    Coincides with trace(G^T H G) for the pencil assembled on the same
    sample with the default weighting.
    """
    _require_matching(sample, spectrum)
    jac = g.jacobian(sample.x_points)                          # (n_x, d, m_g)
    lam1 = spectrum.eigenvalues[:, 0]
    tot = np.einsum("idm,idm->i", jac, jac)
    VtJ = np.einsum("idr,idm->irm", spectrum.directions, jac)
    proj = np.einsum("irm,irm->i", VtJ, VtJ)
    return float(np.mean(lam1 * (tot - proj)))


def loss_report(
    oracle: GradientOracle,
    g: PolynomialMap,
    sample: TensorizedSample,
    spectrum: ConditionalSpectrum,
) -> LossReport:
    """All training losses on the shared tensorized sample and spectrum."""
    x_all, y_all = sample.expand_pairs()
    return LossReport(
        loss=gradient_loss(oracle, g, x_all, y_all),
        truncated_loss=truncated_gradient_loss(oracle, g, sample, spectrum),
        surrogate_loss=surrogate_loss(oracle, g, sample, spectrum),
        tail=tail_energy(spectrum),
        gradient_energy=gradient_energy(oracle, x_all, y_all),
    )


def projection_norm_identity(V: np.ndarray, W: np.ndarray, tol: float = 1e-10) -> tuple[float, float]:
    """Both sides of the orthonormal-projection norm identity.

    For V (d x n) and W (d x m) with orthonormal columns,
    ||P-perp_W V||_F^2 equals ||P-perp_V W||_F^2 + (n - m); returns
    (lhs, rhs) for the caller to compare.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    for name, A in (("V", V), ("W", W)):
        gram = A.T @ A
        if np.max(np.abs(gram - np.eye(A.shape[1]))) > tol:
            raise ValueError(f"{name} does not have orthonormal columns")
    n, m = V.shape[1], W.shape[1]
    lhs = float(np.linalg.norm(V - W @ (W.T @ V), "fro") ** 2)
    rhs = float(np.linalg.norm(W - V @ (V.T @ W), "fro") ** 2 + (n - m))
    return lhs, rhs


def deviation_bound(
    oracle: GradientOracle,
    g: FeatureMap,
    sample: TensorizedSample,
    spectrum: ConditionalSpectrum,
    ell: int,
    n_median: int,
    domain: BoxDomain,
    seed: int = 0,
) -> tuple[float, float]:
    """Truncated loss and its anti-concentration upper bound.

    Requires u prescaled so that ||grad_x u||_2 <= 1 almost surely and a
    feature map from the R-orthonormal class with m >= 2.  The bound uses
    the empirical median q of det(grad g^T grad g) over n_median fresh
    uniform x-draws:

        kappa = 2^5 * (1/s) * m^(1/(4 ell)) * q^(-1/(2 ell m))
        rhs   = 2 * kappa^(2 ell m / (1 + 2 ell m)) * surrogate^(1 / (1 + 2 ell m))
    """
    m = g.m
    if m < 2:
        raise ValueError("the deviation bound requires m >= 2")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    s = domain.concavity
    x_fresh = sample_uniform(domain, n_median, seed)
    jac = g.jacobian(x_fresh)
    grams = np.einsum("ndk,ndl->nkl", jac, jac)
    dets = np.linalg.det(grams)
    q = float(np.median(dets))
    if q <= 0.0:
        raise ValueError("degenerate feature map (Jacobian singular at median)")
    kappa = 2.0 ** 5 / s * m ** (1.0 / (4.0 * ell)) * q ** (-1.0 / (2.0 * ell * m))
    L_hat = surrogate_loss(oracle, g, sample, spectrum)
    exponent = 1.0 / (1.0 + 2.0 * ell * m)
    rhs = 2.0 * kappa ** (2.0 * ell * m * exponent) * max(L_hat, 0.0) ** exponent
    j_trunc = truncated_gradient_loss(oracle, g, sample, spectrum)
    return j_trunc, rhs


def regression_error(
    oracle: GradientOracle,
    g: PolynomialMap,
    profile,
    x: np.ndarray,
    y: np.ndarray,
) -> float:
    """Root-mean-square error of the composed model f(g(x), y) against u.

    ``profile`` is a callable on stacked features [g(x), y] of shape
    (n, m + d_y) returning predictions of shape (n,).
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape[0] == 0:
        raise ValueError("empty pair list")
    z = np.hstack([g(x), y])
    resid = oracle.value(x, y) - np.asarray(profile(z), dtype=float)
    return float(np.sqrt(np.mean(resid ** 2)))
