"""Grouped variable reduction: two-group SVD, HOSVD, and block loss splitting.

Functions enter this machinery as dense coefficient tensors over
orthonormal per-group polynomial bases, so projections, SVD truncations
and Tucker factorizations are finite-dimensional and exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .polybasis import PolynomialMap, legendre_table, total_degree_indices
from .sampling import BoxDomain, derived_rng


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint nonempty coordinate groups covering range(d) (0-based)."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if len(groups) < 2:
            raise ValueError("a partition needs at least two groups")
        flat = [i for g in groups for i in g]
        if any(len(g) == 0 for g in groups):
            raise ValueError("every group must be nonempty")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("groups must disjointly cover 0..d-1")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def d(self) -> int:
        return sum(len(g) for g in self.groups)


class GroupBasis:
    """Orthonormal tensorized Legendre basis of one variable group.

    Unlike the feature dictionary, the constant IS included: this basis
    spans an approximation space for the function itself, not for
    gradients.
    """

    def __init__(self, domain: BoxDomain, degree: int):
        if np.any(domain.widths <= 0):
            raise ValueError("group basis requires a nondegenerate box")
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.domain = domain
        self.degree = int(degree)
        self.multi_indices = total_degree_indices(domain.d, degree, include_constant=True)

    @property
    def dim(self) -> int:
        return self.multi_indices.shape[0]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.domain.d:
            raise ValueError("point dimension mismatch")
        mid = 0.5 * (self.domain.lo + self.domain.hi)
        t = (pts - mid) * (2.0 / self.domain.widths)
        idx = self.multi_indices
        out = np.ones((pts.shape[0], self.dim))
        for j in range(self.domain.d):
            vals, _ = legendre_table(t[:, j], int(idx[:, j].max(initial=0)))
            out *= vals[:, idx[:, j]]
        return out


@dataclass(frozen=True)
class CoefficientTensor:
    """Coefficients of the projection of u onto a product of group bases.

    By Parseval, the Frobenius norm of ``data`` equals the L2 norm of the
    projected function.
    """

    dims: tuple[int, ...]
    data: np.ndarray
    group_labels: tuple[str, ...] = ()
    basis_descriptor: dict | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=float)
        if data.shape != tuple(self.dims):
            raise ValueError("data shape does not match dims")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if not self.group_labels:
            object.__setattr__(self, "group_labels",
                               tuple(f"g{i}" for i in range(len(self.dims))))

    @property
    def order(self) -> int:
        return len(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def save(self, path) -> None:
        doc = {
            "dims": list(self.dims),
            "group_labels": list(self.group_labels),
            "basis": self.basis_descriptor,
            "data": self.data.ravel(order="C").tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CoefficientTensor":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        dims = tuple(int(k) for k in doc["dims"])
        data = np.asarray(doc["data"], dtype=float).reshape(dims, order="C")
        return cls(dims=dims, data=data,
                   group_labels=tuple(doc.get("group_labels", ())),
                   basis_descriptor=doc.get("basis"))


def project_coefficients(
    func: Callable[[np.ndarray], np.ndarray],
    partition: GroupPartition,
    bases: Sequence[GroupBasis],
    quad_order: int,
) -> CoefficientTensor:
    """Coefficient tensor of the projection of ``func`` onto the product basis.

    Entries are inner products against tensor-product basis functions,
    computed with a tensorized Gauss-Legendre rule of ``quad_order`` nodes
    per coordinate (exact when u is polynomial and the order is high
    enough).  ``func`` takes full points of shape (n, d).
    """
    if len(bases) != partition.n_groups:
        raise ValueError("one basis per group required")
    d = partition.d
    ref_nodes, ref_weights = np.polynomial.legendre.leggauss(quad_order)
    ref_weights = ref_weights / 2.0
    lo = np.empty(d)
    hi = np.empty(d)
    for g, basis in zip(partition.groups, bases):
        if len(g) != basis.domain.d:
            raise ValueError("basis dimension does not match its group")
        lo[list(g)] = basis.domain.lo
        hi[list(g)] = basis.domain.hi
    axes = [0.5 * (lo[j] + hi[j]) + 0.5 * (hi[j] - lo[j]) * ref_nodes for j in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.stack([grd.ravel() for grd in grids], axis=1)
    w_grids = np.meshgrid(*([ref_weights] * d), indexing="ij")
    weights = np.ones(points.shape[0])
    for grd in w_grids:
        weights *= grd.ravel()

    values = np.asarray(func(points), dtype=float) * weights
    letters = "abcdefgh"
    if partition.n_groups > len(letters):
        raise ValueError("too many groups")
    operands = []
    subscript_parts = []
    for k, (g, basis) in enumerate(zip(partition.groups, bases)):
        operands.append(basis.evaluate(points[:, list(g)]))
        subscript_parts.append(f"q{letters[k]}")
    subscript = "q," + ",".join(subscript_parts) + "->" + letters[: partition.n_groups]
    data = np.einsum(subscript, values, *operands, optimize=True)
    return CoefficientTensor(
        dims=tuple(b.dim for b in bases),
        data=data,
        basis_descriptor={"degrees": [b.degree for b in bases]},
    )


@dataclass(frozen=True)
class SvdReduction:
    """Truncated SVD of a two-group coefficient matrix."""

    left_vectors: np.ndarray
    right_vectors: np.ndarray
    singular_values: np.ndarray
    tail_energy: float

    @property
    def m(self) -> int:
        return self.singular_values.shape[0]

    def reconstruction(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T


def two_group_svd(A: np.ndarray, m: int) -> SvdReduction:
    """Rank-m SVD truncation; the dropped squared tail is the exact error."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not 1 <= m <= min(A.shape):
        raise ValueError(f"m must satisfy 1 <= m <= {min(A.shape)}")
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
    return SvdReduction(
        left_vectors=U[:, :m],
        right_vectors=Vt[:m].T,
        singular_values=s[:m],
        tail_energy=float(np.sum(s[m:] ** 2)),
    )


def bilinear_error(A: np.ndarray, m: int, full_projection_residual: float = 0.0) -> float:
    """Total squared bilinear approximation error: residual + SVD tail."""
    if full_projection_residual < 0:
        raise ValueError("residual must be >= 0")
    return full_projection_residual + two_group_svd(A, m).tail_energy


def unfold(T: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k unfolding: fibers of mode k as columns, remaining modes
    flattened in ascending order."""
    return np.moveaxis(T, mode, 0).reshape(T.shape[mode], -1)


def multi_mode_product(T: np.ndarray, matrices: Sequence[np.ndarray], transpose: bool = False) -> np.ndarray:
    """Contract T with one matrix per mode (U_k or U_k^T for all k)."""
    out = T
    for k, U in enumerate(matrices):
        M = U.T if transpose else U
        out = np.moveaxis(np.tensordot(M, np.moveaxis(out, k, 0), axes=(1, 0)), 0, k)
    return out


@dataclass(frozen=True)
class HosvdResult:
    """Tucker factorization by per-mode SVD truncation."""

    factors: tuple[np.ndarray, ...]
    core: np.ndarray
    error: float                  # Frobenius reconstruction error
    mode_tails: tuple[float, ...]  # per-mode dropped singular-value energy

    def reconstruction(self) -> np.ndarray:
        return multi_mode_product(self.core, self.factors)


def hosvd(T: np.ndarray | CoefficientTensor, ranks: Sequence[int]) -> HosvdResult:
    """Higher-order SVD with per-mode target ranks.

    factor_k holds the leading left singular vectors of the mode-k
    unfolding; the squared reconstruction error is bounded by the sum of
    per-mode singular-value tails.
    """
    data = T.data if isinstance(T, CoefficientTensor) else np.asarray(T, dtype=float)
    if len(ranks) != data.ndim:
        raise ValueError("one rank per mode required")
    factors = []
    tails = []
    for k, r in enumerate(ranks):
        if not 1 <= r <= data.shape[k]:
            raise ValueError(f"rank {r} out of range for mode {k} of size {data.shape[k]}")
        U, s, _ = scipy.linalg.svd(unfold(data, k), full_matrices=False)
        factors.append(U[:, :r])
        tails.append(float(np.sum(s[r:] ** 2)))
    core = multi_mode_product(data, factors, transpose=True)
    recon = multi_mode_product(core, factors)
    err = float(np.linalg.norm(data - recon))
    return HosvdResult(factors=tuple(factors), core=core, error=err, mode_tails=tuple(tails))


@dataclass(frozen=True)
class NearOptimalityReport:
    """Outcome of checking HOSVD error against candidate factor tuples."""

    passed: bool
    worst_margin: float
    hosvd_sq_error: float
    candidate_sq_errors: tuple[float, ...]


def projection_sq_error(T: np.ndarray, factors: Sequence[np.ndarray]) -> float:
    """Squared error of the best multilinear approximation with given factors."""
    data = np.asarray(T, dtype=float)
    proj = multi_mode_product(multi_mode_product(data, factors, transpose=True), factors)
    return float(np.linalg.norm(data - proj) ** 2)


def hosvd_near_optimality_check(
    T: np.ndarray | CoefficientTensor,
    ranks: Sequence[int],
    candidates: Sequence[Sequence[np.ndarray]],
    orth_tol: float = 1e-10,
) -> NearOptimalityReport:
    """Check that the HOSVD squared error is within a factor N of every candidate.

    Candidates are tuples of per-mode factor matrices with orthonormal
    columns of the given ranks.  Since each candidate upper-bounds the
    multilinear infimum, the factor-N bound must hold for all of them.
    """
    data = T.data if isinstance(T, CoefficientTensor) else np.asarray(T, dtype=float)
    N = data.ndim
    result = hosvd(data, ranks)
    base = result.error ** 2
    sq_errors = []
    for cand in candidates:
        if len(cand) != N:
            raise ValueError("candidate must supply one factor per mode")
        for k, U in enumerate(cand):
            U = np.asarray(U, dtype=float)
            if U.shape != (data.shape[k], ranks[k]):
                raise ValueError("candidate factor has wrong shape")
            if np.max(np.abs(U.T @ U - np.eye(ranks[k]))) > orth_tol:
                raise ValueError("candidate factor columns are not orthonormal")
        sq_errors.append(projection_sq_error(data, cand))
    margins = [N * e - base for e in sq_errors]
    worst = min(margins) if margins else float("inf")
    return NearOptimalityReport(
        passed=bool(worst >= -orth_tol),
        worst_margin=float(worst),
        hosvd_sq_error=base,
        candidate_sq_errors=tuple(sq_errors),
    )


# -- block decomposition of the projection loss ---------------------------

@dataclass(frozen=True)
class GroupedLoss:
    total: float
    per_group: tuple[float, ...]


def grouped_grid(
    domains: Sequence[BoxDomain],
    counts: Sequence[int],
    seed: int,
) -> np.ndarray:
    """Full product of independent per-group Latin hypercube samples.

    Returns points of shape (prod(counts), d) with group blocks arranged
    in partition order; grows exponentially with the number of groups.
    """
    from .sampling import _latin_hypercube_rng

    if len(domains) != len(counts):
        raise ValueError("one count per group required")
    blocks = [
        _latin_hypercube_rng(dom, int(n), derived_rng(seed, k))
        for k, (dom, n) in enumerate(zip(domains, counts))
    ]
    idx_grids = np.meshgrid(*[np.arange(len(b)) for b in blocks], indexing="ij")
    cols = [blocks[k][grid.ravel()] for k, grid in enumerate(idx_grids)]
    return np.hstack(cols)


def grouped_gradient_loss(
    gradient_fn: Callable[[np.ndarray], np.ndarray],
    partition: GroupPartition,
    maps: Sequence[PolynomialMap],
    points: np.ndarray,
) -> GroupedLoss:
    """Projection loss of a block feature map, split across groups.

    ``gradient_fn`` returns the full gradient (n, d) of a scalar function
    of x.  Each group's contribution treats the other groups' coordinates
    as the conditioning variable; because the block Jacobian makes the
    projector block diagonal, the per-sample identity
    total = sum(per_group) is exact and asserted here.
    """
    from .losses import _projected_sq_norms

    if len(maps) != partition.n_groups:
        raise ValueError("one feature map per group required")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grads = np.asarray(gradient_fn(points), dtype=float)
    if grads.shape != points.shape:
        raise ValueError("gradient_fn must return one gradient row per point")
    n, d = points.shape

    # per-group losses, other groups playing the conditioning variable
    per_group = []
    block_jacs = []
    for g_idx, (cols, gmap) in enumerate(zip(partition.groups, maps)):
        cols = list(cols)
        if gmap.basis.d != len(cols):
            raise ValueError(f"feature map {g_idx} dimension mismatch")
        jac = gmap.jacobian(points[:, cols])
        block_jacs.append((cols, jac))
        gsub = grads[:, cols]
        tot = np.einsum("nd,nd->n", gsub, gsub)
        per_group.append(float(np.mean(tot - _projected_sq_norms(jac, gsub))))

    # independent route: loss of the block feature map via its full Jacobian
    m_total = sum(j.shape[2] for _, j in block_jacs)
    full_jac = np.zeros((n, d, m_total))
    offset = 0
    for cols, jac in block_jacs:
        full_jac[:, cols, offset:offset + jac.shape[2]] = jac
        offset += jac.shape[2]
    tot = np.einsum("nd,nd->n", grads, grads)
    energy = float(np.mean(tot))
    total = float(np.mean(tot - _projected_sq_norms(full_jac, grads)))

    split_sum = float(np.sum(per_group))
    if abs(total - split_sum) > 1e-10 * max(energy, 1e-300):
        raise AssertionError("block loss decomposition identity violated")
    return GroupedLoss(total=total, per_group=tuple(per_group))
