"""Box domains and reproducible random sampling.

All sampling is driven by a PCG64 generator seeded through
``numpy.random.SeedSequence``, so every sample is a pure function of
(domain, n, seed) and reproducible across platforms.  Sub-streams (for
example the x and y parts of a tensorized sample) are derived from the
user seed with fixed integer stream tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# stream tags for derived sub-seeds
_X_STREAM = 0
_Y_STREAM = 1


def derived_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` and an optional fixed stream tag path."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence((int(seed), *map(int, stream))))


def derive_seed(seed: int, *stream: int) -> int:
    """Deterministic integer sub-seed for a fixed stream tag path."""
    return int(derived_rng(seed, *stream).integers(0, 2**63 - 1))


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box carrying the uniform probability measure.

    Parameters
    ----------
    d:
        Dimension.
    lo, hi:
        Per-coordinate bounds; scalars broadcast to all coordinates.
        Defaults are (-1, 1).  Degenerate coordinates (lo == hi) are
        allowed for sampling but rejected by polynomial bases.
    """

    d: int
    lo: np.ndarray = field(default=None)  # type: ignore[assignment]
    hi: np.ndarray = field(default=None)  # type: ignore[assignment]
    measure: str = "uniform"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.measure != "uniform":
            raise ValueError(f"unsupported measure {self.measure!r}")
        lo = np.full(self.d, -1.0) if self.lo is None else np.broadcast_to(
            np.asarray(self.lo, dtype=float), (self.d,)).copy()
        hi = np.full(self.d, 1.0) if self.hi is None else np.broadcast_to(
            np.asarray(self.hi, dtype=float), (self.d,)).copy()
        if np.any(lo > hi):
            raise ValueError("lo must not exceed hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def concavity(self) -> float:
        """Concavity parameter of the uniform measure, s = 1/d."""
        return 1.0 / self.d

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray, atol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo - atol) & (pts <= self.hi + atol), axis=1)

    def is_default_box(self) -> bool:
        return bool(np.all(self.lo == -1.0) and np.all(self.hi == 1.0))


@dataclass(frozen=True)
class TensorizedSample:
    """Cartesian-product sample: every x row is paired with every y row."""

    x_points: np.ndarray  # (n_x, d)
    y_points: np.ndarray  # (n_y, d_y)
    seed: int

    def __post_init__(self):
        for name in ("x_points", "y_points"):
            arr = np.ascontiguousarray(np.atleast_2d(getattr(self, name)), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_x(self) -> int:
        return self.x_points.shape[0]

    @property
    def n_y(self) -> int:
        return self.y_points.shape[0]

    @property
    def size(self) -> int:
        """Total number of (x, y) pairs in the expanded product."""
        return self.n_x * self.n_y

    def expand_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All (x, y) combinations, x-major: pair (i, j) sits at row i*n_y + j."""
        x = np.repeat(self.x_points, self.n_y, axis=0)
        y = np.tile(self.y_points, (self.n_x, 1))
        return x, y


def sample_uniform(domain: BoxDomain, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws from the uniform measure on the box, shape (n, d)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = derived_rng(seed)
    u = rng.random((n, domain.d))
    return domain.lo + u * domain.widths


def latin_hypercube(domain: BoxDomain, n: int, seed: int) -> np.ndarray:
    """Latin hypercube sample of size ``n`` on the box, shape (n, d).

    Per coordinate, the n equal-width strata each receive exactly one
    point (random permutation, uniform jitter inside the stratum).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return _latin_hypercube_rng(domain, n, derived_rng(seed))


def build_tensorized(
    x_domain: BoxDomain,
    y_domain: BoxDomain,
    n_x: int,
    n_y: int,
    seed: int,
) -> TensorizedSample:
    """Independent Latin hypercube draws for the x and y factors.

    The x and y streams use sub-seeds derived from ``seed`` with fixed
    offsets, so the whole product sample is a function of the seed alone.
    """
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be >= 1")
    x = _latin_hypercube_rng(x_domain, n_x, derived_rng(seed, _X_STREAM))
    y = _latin_hypercube_rng(y_domain, n_y, derived_rng(seed, _Y_STREAM))
    return TensorizedSample(x_points=x, y_points=y, seed=seed)


def _latin_hypercube_rng(domain: BoxDomain, n: int, rng: np.random.Generator) -> np.ndarray:
    unit = np.empty((n, domain.d))
    for j in range(domain.d):
        perm = rng.permutation(n)
        jitter = rng.random(n)
        unit[:, j] = (perm + jitter) / n
    return domain.lo + unit * domain.widths
