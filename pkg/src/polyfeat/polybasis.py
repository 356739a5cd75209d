"""Multivariate polynomial dictionary, gradients, and the gradient Gram matrix.

The dictionary is a tensorized Legendre basis, orthonormal in L2 of the
uniform measure on the box, restricted to total degree <= degree_bound and
excluding the constant (so the stacked gradient has full row rank almost
surely).  Feature maps are linear combinations of dictionary entries; the
constrained class carries R-orthonormal coefficient columns, where
R = E[grad Phi(X)^T grad Phi(X)] is computed exactly by Gauss-Legendre
quadrature.
"""

from __future__ import annotations

import json

import numpy as np
import scipy.linalg

from .sampling import BoxDomain

# relative singular-value cutoff shared by rank decisions
RANK_RTOL = 1e-12


def legendre_table(t: np.ndarray, max_degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Legendre values and derivatives on (-1, 1).

    Returns (values, derivatives), each of shape (len(t), max_degree + 1),
    column p holding the degree-p polynomial scaled to unit L2 norm under
    the uniform measure dx/2.
    """
    t = np.asarray(t, dtype=float)
    vals = np.empty((t.size, max_degree + 1))
    ders = np.empty_like(vals)
    vals[:, 0] = 1.0
    ders[:, 0] = 0.0
    if max_degree >= 1:
        vals[:, 1] = t
        ders[:, 1] = 1.0
    for p in range(1, max_degree):
        # Bonnet recurrence and its derivative
        vals[:, p + 1] = ((2 * p + 1) * t * vals[:, p] - p * vals[:, p - 1]) / (p + 1)
        ders[:, p + 1] = ((2 * p + 1) * (vals[:, p] + t * ders[:, p]) - p * ders[:, p - 1]) / (p + 1)
    scale = np.sqrt(2.0 * np.arange(max_degree + 1) + 1.0)
    return vals * scale, ders * scale


def total_degree_indices(d: int, degree: int, include_constant: bool = False) -> np.ndarray:
    """Exponent vectors with total degree <= degree, graded lexicographic.

    Degree-major: all indices of total degree t come before those of
    degree t + 1; within a degree, plain lexicographic order on the
    exponent tuple.
    """
    out: list[tuple[int, ...]] = []

    def compositions(total: int, slots: int, prefix: tuple[int, ...]):
        if slots == 1:
            out.append(prefix + (total,))
            return
        for first in range(total + 1):
            compositions(total - first, slots - 1, prefix + (first,))

    start = 0 if include_constant else 1
    for t in range(start, degree + 1):
        block_start = len(out)
        compositions(t, d, ())
        out[block_start:] = sorted(out[block_start:])
    return np.array(out, dtype=np.int64).reshape(len(out), d)


class PolynomialBasis:
    """Tensorized orthonormal Legendre dictionary without the constant.

    Parameters
    ----------
    domain:
        Nondegenerate box with uniform measure.
    degree_bound:
        Maximum total degree (>= 1, so all coordinate functions are in
        the span).
    multi_indices:
        Optional explicit exponent matrix (used when deserializing);
        defaults to the full total-degree set minus the zero index.
    """

    def __init__(self, domain: BoxDomain, degree_bound: int, multi_indices: np.ndarray | None = None):
        if degree_bound < 1:
            raise ValueError("degree_bound must be >= 1")
        if np.any(domain.widths <= 0):
            raise ValueError("polynomial basis requires a nondegenerate box")
        self.domain = domain
        self.degree_bound = int(degree_bound)
        if multi_indices is None:
            multi_indices = total_degree_indices(domain.d, degree_bound)
        multi_indices = np.asarray(multi_indices, dtype=np.int64)
        if multi_indices.ndim != 2 or multi_indices.shape[1] != domain.d:
            raise ValueError("multi_indices must have shape (K, d)")
        if np.any(multi_indices.sum(axis=1) == 0):
            raise ValueError("constant multi-index is excluded from the dictionary")
        self.multi_indices = multi_indices
        self._gram: np.ndarray | None = None
        self._gram_chol: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def K(self) -> int:
        return self.multi_indices.shape[0]

    @property
    def ell(self) -> int:
        """Degree parameter: feature maps have total degree at most ell + 1."""
        return self.degree_bound - 1

    # -- evaluation -------------------------------------------------------

    def _to_reference(self, points: np.ndarray) -> tuple[np.ndarray, bool]:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise ValueError(f"points have dimension {pts.shape[1]}, expected {self.d}")
        mid = 0.5 * (self.domain.lo + self.domain.hi)
        t = (pts - mid) * (2.0 / self.domain.widths)
        return t, single

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Dictionary values; (K,) for a single point, (n, K) for a batch."""
        t, single = self._to_reference(points)
        idx = self.multi_indices
        max_deg = int(idx.max())
        out = np.ones((t.shape[0], self.K))
        for j in range(self.d):
            vals, _ = legendre_table(t[:, j], max_deg)
            out *= vals[:, idx[:, j]]
        return out[0] if single else out

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Transposed Jacobian of the dictionary: column k is grad Phi_k.

        Shape (d, K) for a single point, (n, d, K) for a batch.
        """
        t, single = self._to_reference(points)
        n = t.shape[0]
        idx = self.multi_indices
        max_deg = int(idx.max())
        scale = 2.0 / self.domain.widths
        vals_g = np.empty((self.d, n, self.K))
        ders_g = np.empty((self.d, n, self.K))
        for j in range(self.d):
            vals, ders = legendre_table(t[:, j], max_deg)
            vals_g[j] = vals[:, idx[:, j]]
            ders_g[j] = ders[:, idx[:, j]] * scale[j]
        grad = np.empty((n, self.d, self.K))
        prefix = np.ones((n, self.K))
        for j in range(self.d):
            grad[:, j, :] = prefix * ders_g[j]
            prefix *= vals_g[j]
        suffix = np.ones((n, self.K))
        for j in range(self.d - 1, -1, -1):
            grad[:, j, :] *= suffix
            suffix *= vals_g[j]
        return grad[0] if single else grad

    # -- Gram matrix ------------------------------------------------------

    def quadrature_rule(self, nodes_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Tensorized Gauss-Legendre rule for the uniform measure on the box."""
        ref_nodes, ref_weights = np.polynomial.legendre.leggauss(nodes_per_dim)
        ref_weights = ref_weights / 2.0  # normalize to the uniform measure
        axes_nodes = [
            0.5 * (self.domain.lo[j] + self.domain.hi[j]) + 0.5 * self.domain.widths[j] * ref_nodes
            for j in range(self.d)
        ]
        grids = np.meshgrid(*axes_nodes, indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=1)
        w_grids = np.meshgrid(*([ref_weights] * self.d), indexing="ij")
        weights = np.ones(points.shape[0])
        for g in w_grids:
            weights *= g.ravel()
        return points, weights

    def gram_matrix(self) -> np.ndarray:
        """Exact Gram matrix of the dictionary gradients, R = E[J^T J].

        Computed by tensorized Gauss-Legendre quadrature with ell + 2
        nodes per coordinate, which is exact for the polynomial
        integrands.  Raises if the result is not positive definite.
        """
        if self._gram is None:
            points, weights = self.quadrature_rule(self.ell + 2)
            grads = self.gradient(points)
            R = np.einsum("n,ndk,ndl->kl", weights, grads, grads, optimize=True)
            R = 0.5 * (R + R.T)
            try:
                scipy.linalg.cholesky(R, lower=True)
            except scipy.linalg.LinAlgError as exc:
                raise ValueError("gradient Gram matrix is not positive definite; "
                                 "the dictionary construction is broken") from exc
            R.setflags(write=False)
            self._gram = R
        return self._gram

    def _gram_cholesky(self) -> np.ndarray:
        if self._gram_chol is None:
            self._gram_chol = scipy.linalg.cholesky(self.gram_matrix(), lower=True)
        return self._gram_chol

    def descriptor(self) -> dict:
        """JSON-ready description sufficient to rebuild the basis."""
        desc = {
            "d": self.d,
            "degree_bound": self.degree_bound,
            "multi_indices": self.multi_indices.tolist(),
        }
        if not self.domain.is_default_box():
            desc["lo"] = self.domain.lo.tolist()
            desc["hi"] = self.domain.hi.tolist()
        return desc

    @classmethod
    def from_descriptor(cls, desc: dict) -> "PolynomialBasis":
        domain = BoxDomain(d=int(desc["d"]), lo=desc.get("lo"), hi=desc.get("hi"))
        return cls(domain, int(desc["degree_bound"]),
                   multi_indices=np.asarray(desc["multi_indices"], dtype=np.int64))


class PolynomialMap:
    """Linear combination of dictionary entries, x -> G^T Phi(x).

    No constraint on G; use FeatureMap for the R-orthonormal class.
    """

    def __init__(self, basis: PolynomialBasis, G: np.ndarray):
        G = np.ascontiguousarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != basis.K:
            raise ValueError(f"G must have shape ({basis.K}, m)")
        if not 1 <= G.shape[1] <= basis.K:
            raise ValueError("feature count must satisfy 1 <= m <= K")
        self.basis = basis
        self.G = G

    @property
    def m(self) -> int:
        return self.G.shape[1]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.basis.evaluate(points) @ self.G

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """Transposed Jacobian grad g = grad Phi @ G; (n, d, m) for a batch."""
        return self.basis.gradient(points) @ self.G


class FeatureMap(PolynomialMap):
    """Polynomial feature map with R-orthonormal coefficient columns.

    The constraint G^T R G = I_m pins the class over which the surrogate
    eigenproblem is solved and makes E ||grad g(X)||_F^2 = m exact.
    """

    ORTHONORMALITY_TOL = 1e-8

    def __init__(self, basis: PolynomialBasis, G: np.ndarray):
        super().__init__(basis, G)
        gram = self.G.T @ basis.gram_matrix() @ self.G
        err = np.max(np.abs(gram - np.eye(self.m)))
        if err > self.ORTHONORMALITY_TOL:
            raise ValueError(
                f"coefficient columns are not R-orthonormal (max deviation {err:.3e}); "
                "use orthonormalize() first")

    def to_dict(self) -> dict:
        doc = {
            "d": self.basis.d,
            "degree_bound": self.basis.degree_bound,
            "multi_indices": self.basis.multi_indices.tolist(),
            "G": self.G.tolist(),
            "m": self.m,
        }
        if not self.basis.domain.is_default_box():
            doc["lo"] = self.basis.domain.lo.tolist()
            doc["hi"] = self.basis.domain.hi.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureMap":
        basis = PolynomialBasis.from_descriptor(doc)
        G = np.asarray(doc["G"], dtype=float)
        fm = cls(basis, G)
        if fm.m != int(doc["m"]):
            raise ValueError("stored m does not match coefficient shape")
        return fm

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def orthonormalize(basis: PolynomialBasis, G_raw: np.ndarray) -> FeatureMap:
    """R-orthonormalize the columns of G_raw without changing their span.

    Generalized QR through the Cholesky factor of R.  Raises on
    rank-deficient input, reporting the numerical rank.
    """
    G_raw = np.asarray(G_raw, dtype=float)
    if G_raw.ndim != 2 or G_raw.shape[0] != basis.K:
        raise ValueError(f"G_raw must have shape ({basis.K}, m)")
    m = G_raw.shape[1]
    L = basis._gram_cholesky()
    Y = L.T @ G_raw
    sing = scipy.linalg.svdvals(Y)
    rank = int(np.sum(sing > RANK_RTOL * max(sing[0], np.finfo(float).tiny)))
    if rank < m:
        raise ValueError(f"G_raw is rank deficient: numerical rank {rank} < m = {m}")
    Q, _ = scipy.linalg.qr(Y, mode="economic")
    G = scipy.linalg.solve_triangular(L.T, Q, lower=False)
    return FeatureMap(basis, G)
