"""Benchmark harness: banded-quadratic oracle, pipelines, quantile sweeps.

The benchmark family sums squared banded quadratic forms with
y-dependent sine coefficients, so for ``a`` terms the gradient lives in
an ``a``-dimensional span and an exact degree-2 representation with
``a`` features exists.  Two learners are compared: the surrogate
eigenproblem (SUR) on a tensorized sample, and a direct Riemannian
descent baseline on a plain sample started from the best linear map.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import losses, regression
from .polybasis import FeatureMap, PolynomialBasis, orthonormalize
from .sampling import BoxDomain, build_tensorized, derive_seed, latin_hypercube
from .surrogate import (
    GradientOracle,
    assemble_pencil,
    estimate_conditional_spectrum,
    minimize_surrogate,
    tail_energy,
)

METHOD_SUR = "SUR"
METHOD_BASELINE = "BASELINE"

RESULT_COLUMNS = ["method", "a", "m", "n_train", "realization",
                  "J_hat_train", "J_test", "e_hat_train", "e_test", "eps_m", "wall_ms"]
QUANTILE_COLUMNS = ["method", "n_train", "metric", "q50", "q90", "q100"]
QUANTILE_METRICS = ["J_hat_train", "J_test", "e_hat_train", "e_test"]

# Armijo backtracking constants for the baseline descent
ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
GRAD_NORM_STOP = 1e-8
MAX_BACKTRACKS = 40

# seed stream tags
_TRAIN_TAG = 0
_CV_TAG = 1
_TEST_TAG = 2


class UaOracle:
    """Sum of squared banded quadratic forms with sine-in-y coefficients.

    Term k uses the symmetric band matrix with ones spread on the
    (k-1)-th sub- and super-diagonals (halved), so the first term's
    matrix is the identity.  Gradients stay in the span of the ``a``
    vectors Q_k x, which caps the conditional covariance rank at ``a``.
    """

    def __init__(self, a: int, d: int = 8):
        if a < 1 or d < 1:
            raise ValueError("a and d must be >= 1")
        self.a = int(a)
        self.d = int(d)
        Q = np.zeros((a, d, d))
        for k in range(1, a + 1):
            Q[k - 1] = 0.5 * (np.eye(d, k=k - 1) + np.eye(d, k=-(k - 1)))
        Q.setflags(write=False)
        self.Q = Q

    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        q = np.einsum("nd,kde,ne->nk", x, self.Q, x, optimize=True)
        return np.einsum("nk,nk->n", q ** 2, self._sines(y))

    def gradient(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        q = np.einsum("nd,kde,ne->nk", x, self.Q, x, optimize=True)
        Qx = np.einsum("kde,ne->nkd", self.Q, x)
        return 4.0 * np.einsum("nk,nk,nkd->nd", q, self._sines(y), Qx, optimize=True)

    def _sines(self, y: np.ndarray) -> np.ndarray:
        ks = np.arange(1, self.a + 1)
        return np.sin(np.pi * ks[None, :] * y[:, :1] / (2.0 * self.a))

    def features(self, x: np.ndarray) -> np.ndarray:
        """The exact low-dimensional features, (x^T Q_k x)_k."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.einsum("nd,kde,ne->nk", x, self.Q, x, optimize=True)

    def sup_gradient_bound(self) -> float:
        """Valid bound on ||grad_x||_2 over the default box: each band
        matrix has spectral norm <= 1, so every term is at most 4 d^1.5."""
        return 4.0 * self.a * self.d ** 1.5

    def as_gradient_oracle(self) -> GradientOracle:
        return GradientOracle(
            d=self.d,
            d_y=1,
            value=self.value,
            gradient_x=self.gradient,
            sup_grad_bound=self.sup_gradient_bound(),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol of one quantile sweep."""

    a: int = 3
    m: int = 3
    n_x_list: tuple[int, ...] = (50,)
    n_y: int = 5
    n_test: int = 1000
    realizations: int = 20
    degree_bound: int = 2
    methods: tuple[str, ...] = (METHOD_SUR, METHOD_BASELINE)
    seed: int = 0
    d: int = 8
    baseline_max_iter: int = 200
    record_timing: bool = False

    def __post_init__(self):
        if min(self.a, self.m, self.n_y, self.n_test, self.realizations,
               self.degree_bound, self.d) < 1 or not self.n_x_list or min(self.n_x_list) < 1:
            raise ValueError("all counts must be >= 1")
        for meth in self.methods:
            if meth not in (METHOD_SUR, METHOD_BASELINE):
                raise ValueError(f"unknown method {meth!r}")
        if self.m > self.d:
            raise ValueError("m must not exceed d")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.baseline_max_iter < 0:
            raise ValueError("baseline_max_iter must be >= 0")

    def basis(self) -> PolynomialBasis:
        return PolynomialBasis(BoxDomain(self.d), self.degree_bound)


@dataclass(frozen=True)
class PipelineRun:
    """Everything produced by one learner on one training/test draw."""

    method: str
    feature_map: FeatureMap
    krr_model: regression.KrrModel
    report: losses.LossReport | None   # spectrum losses; only on tensorized samples
    loss_train: float
    e_train: float
    loss_test: float
    e_test: float
    eps_m: float | None
    gamma: float
    alpha: float
    wall_ms: float


def _x_domain(config: ExperimentConfig) -> BoxDomain:
    return BoxDomain(config.d)


def _y_domain() -> BoxDomain:
    return BoxDomain(1)


def _fit_profile(z: np.ndarray, u: np.ndarray, cv_seed: int):
    gamma, alpha, _ = regression.cross_validate(z, u, seed=cv_seed)
    return regression.krr_fit(z, u, gamma, alpha), gamma, alpha


def _test_pairs(config: ExperimentConfig, test_seed: int) -> tuple[np.ndarray, np.ndarray]:
    joint = BoxDomain(config.d + 1)
    pts = latin_hypercube(joint, config.n_test, test_seed)
    return pts[:, : config.d], pts[:, config.d:]


def _evaluate(
    oracle: GradientOracle,
    g: FeatureMap,
    model: regression.KrrModel,
    x_tr: np.ndarray,
    y_tr: np.ndarray,
    config: ExperimentConfig,
    test_seed: int,
) -> tuple[float, float, float, float]:
    loss_train = losses.gradient_loss(oracle, g, x_tr, y_tr)
    e_train = losses.regression_error(oracle, g, model, x_tr, y_tr)
    x_te, y_te = _test_pairs(config, test_seed)
    loss_test = losses.gradient_loss(oracle, g, x_te, y_te)
    e_test = losses.regression_error(oracle, g, model, x_te, y_te)
    return loss_train, e_train, loss_test, e_test


def run_sur(config: ExperimentConfig, n_x: int, train_seed: int, cv_seed: int,
            test_seed: int) -> PipelineRun:
    """Surrogate pipeline: tensorized sample, pencil eigenproblem, KRR fit."""
    t0 = time.perf_counter()
    oracle = UaOracle(config.a, config.d).as_gradient_oracle()
    basis = config.basis()
    if config.m > basis.K:
        raise ValueError("m exceeds the dictionary size")
    sample = build_tensorized(_x_domain(config), _y_domain(), n_x, config.n_y, train_seed)
    spectrum = estimate_conditional_spectrum(oracle, sample, config.m)
    pencil = assemble_pencil(oracle, sample, basis, config.m, spectrum=spectrum)
    g, _ = minimize_surrogate(pencil)
    report = losses.loss_report(oracle, g, sample, spectrum)
    x_tr, y_tr = sample.expand_pairs()
    model, gamma, alpha = _fit_profile(np.hstack([g(x_tr), y_tr]), oracle.value(x_tr, y_tr), cv_seed)
    loss_train, e_train, loss_test, e_test = _evaluate(
        oracle, g, model, x_tr, y_tr, config, test_seed)
    return PipelineRun(
        method=METHOD_SUR, feature_map=g, krr_model=model, report=report,
        loss_train=loss_train, e_train=e_train, loss_test=loss_test, e_test=e_test,
        eps_m=tail_energy(spectrum), gamma=gamma, alpha=alpha,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


def linear_initialization(oracle: GradientOracle, basis: PolynomialBasis, m: int,
                          x: np.ndarray, y: np.ndarray) -> FeatureMap:
    """Best linear feature map on the sample, lifted into the dictionary.

    The minimizer of the projection loss over linear maps spans the top
    eigenvectors of the average gradient outer product, so the lift just
    places those vectors on the coordinate entries of the dictionary.
    """
    grads = oracle.gradient_x(x, y)
    C = grads.T @ grads / grads.shape[0]
    _, vecs = np.linalg.eigh(C)
    V = vecs[:, ::-1][:, :m]
    degrees = basis.multi_indices.sum(axis=1)
    coord_rows = {}
    for k in np.nonzero(degrees == 1)[0]:
        coord_rows[int(np.argmax(basis.multi_indices[k]))] = int(k)
    if len(coord_rows) != basis.d:
        raise ValueError("dictionary does not contain all coordinate functions")
    G0 = np.zeros((basis.K, m))
    for coord, row in coord_rows.items():
        G0[row] = V[coord]
    return orthonormalize(basis, G0)


def _loss_and_riemannian_grad(G, J, grads, R, R_cho, total_sq):
    """Objective and Riemannian gradient of the empirical projection loss
    on the R-orthonormal manifold, at coefficient matrix G."""
    n = J.shape[0]
    B = J @ G                                         # (n, d, m)
    BtB = np.einsum("ndk,ndl->nkl", B, B)
    Bth = np.einsum("ndk,nd->nk", B, grads)
    try:
        w = np.linalg.solve(BtB, Bth[..., None])[..., 0]
    except np.linalg.LinAlgError:
        ridge = 1e-14 * np.trace(BtB, axis1=1, axis2=2).mean() + 1e-300
        w = np.linalg.solve(BtB + ridge * np.eye(G.shape[1]), Bth[..., None])[..., 0]
    resid = grads - np.einsum("ndk,nk->nd", B, w)
    obj = float(np.mean(total_sq - np.einsum("nk,nk->n", Bth, w)))
    euc = -2.0 / n * np.einsum("ndk,nd,nm->km", J, resid, w, optimize=True)
    Rinv_euc = scipy.linalg.cho_solve(R_cho, euc)
    sym = 0.5 * (G.T @ euc + euc.T @ G)
    xi = Rinv_euc - G @ sym
    xi_norm = float(np.sqrt(max(np.einsum("km,km->", xi, R @ xi), 0.0)))
    return obj, xi, xi_norm


def run_baseline(config: ExperimentConfig, n_x: int, train_seed: int, cv_seed: int,
                 test_seed: int, max_iter: int | None = None) -> PipelineRun:
    """Direct descent baseline: plain sample, Riemannian gradient descent
    on the R-orthonormal manifold from the best linear initialization."""
    t0 = time.perf_counter()
    oracle = UaOracle(config.a, config.d).as_gradient_oracle()
    basis = config.basis()
    if config.m > basis.K:
        raise ValueError("m exceeds the dictionary size")
    if max_iter is None:
        max_iter = config.baseline_max_iter

    joint = BoxDomain(config.d + 1)
    pts = latin_hypercube(joint, n_x * config.n_y, train_seed)
    x_tr, y_tr = pts[:, : config.d], pts[:, config.d:]

    g = linear_initialization(oracle, basis, config.m, x_tr, y_tr)
    G = g.G
    J = basis.gradient(x_tr)
    grads = oracle.gradient_x(x_tr, y_tr)
    total_sq = np.einsum("nd,nd->n", grads, grads)
    R = basis.gram_matrix()
    R_cho = scipy.linalg.cho_factor(R, lower=True)

    obj, xi, xi_norm = _loss_and_riemannian_grad(G, J, grads, R, R_cho, total_sq)
    for _ in range(max_iter):
        if xi_norm <= GRAD_NORM_STOP:
            break
        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            try:
                G_new = orthonormalize(basis, G - step * xi).G
            except ValueError:
                step *= ARMIJO_SHRINK
                continue
            obj_new, xi_new, xi_norm_new = _loss_and_riemannian_grad(
                G_new, J, grads, R, R_cho, total_sq)
            if obj_new <= obj - ARMIJO_C * step * xi_norm ** 2:
                G, obj, xi, xi_norm = G_new, obj_new, xi_new, xi_norm_new
                accepted = True
                break
            step *= ARMIJO_SHRINK
        if not accepted:
            break
    g = FeatureMap(basis, G)

    model, gamma, alpha = _fit_profile(np.hstack([g(x_tr), y_tr]), oracle.value(x_tr, y_tr), cv_seed)
    loss_train, e_train, loss_test, e_test = _evaluate(
        oracle, g, model, x_tr, y_tr, config, test_seed)
    return PipelineRun(
        method=METHOD_BASELINE, feature_map=g, krr_model=model, report=None,
        loss_train=loss_train, e_train=e_train, loss_test=loss_test, e_test=e_test,
        eps_m=None, gamma=gamma, alpha=alpha,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


# -- experiment sweep ------------------------------------------------------

@dataclass(frozen=True)
class RunRow:
    method: str
    a: int
    m: int
    n_train: int
    realization: int
    j_train: float
    j_test: float
    e_train: float
    e_test: float
    eps_m: float | None
    wall_ms: float | None


@dataclass(frozen=True)
class QuantileRow:
    method: str
    n_train: int
    metric: str
    q50: float
    q90: float
    q100: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    rows: tuple[RunRow, ...]
    quantiles: tuple[QuantileRow, ...]


def nearest_rank_quantile(values, level: float) -> float:
    """Inclusive nearest-rank quantile of a nonempty sample."""
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise ValueError("empty sample")
    idx = max(int(np.ceil(level * vals.size)) - 1, 0)
    return float(vals[idx])


def _run_cell(config: ExperimentConfig, i_nx: int, n_x: int, realization: int) -> list[RunRow]:
    rows = []
    test_seed = derive_seed(config.seed, realization, i_nx, _TEST_TAG)
    for method_id, method in enumerate(config.methods):
        train_seed = derive_seed(config.seed, realization, i_nx, _TRAIN_TAG, method_id)
        cv_seed = derive_seed(config.seed, realization, i_nx, _CV_TAG, method_id)
        runner = run_sur if method == METHOD_SUR else run_baseline
        run = runner(config, n_x, train_seed, cv_seed, test_seed)
        rows.append(RunRow(
            method=method, a=config.a, m=config.m, n_train=n_x * config.n_y,
            realization=realization, j_train=run.loss_train, j_test=run.loss_test,
            e_train=run.e_train, e_test=run.e_test, eps_m=run.eps_m,
            wall_ms=run.wall_ms if config.record_timing else None,
        ))
    return rows


def run_experiment(config: ExperimentConfig, on_rows=None, threads: int = 1) -> ExperimentResult:
    """Quantile sweep over realizations x training sizes x methods.

    Every (realization, size, method) cell draws independent training
    data from seeds derived off the config seed; the test draw is shared
    by both methods inside a cell.  ``on_rows`` is called with each
    realization's rows in deterministic order (useful for streaming
    output); ``threads`` > 1 runs cells concurrently without changing
    results.
    """
    cells = [(i_nx, n_x, r)
             for i_nx, n_x in enumerate(config.n_x_list)
             for r in range(config.realizations)]
    rows: list[RunRow] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for cell_rows in pool.map(lambda c: _run_cell(config, *c), cells):
                rows.extend(cell_rows)
                if on_rows is not None:
                    on_rows(cell_rows)
    else:
        for cell in cells:
            cell_rows = _run_cell(config, *cell)
            rows.extend(cell_rows)
            if on_rows is not None:
                on_rows(cell_rows)

    quantiles: list[QuantileRow] = []
    for method in config.methods:
        for n_x in config.n_x_list:
            n_train = n_x * config.n_y
            cell = [r for r in rows if r.method == method and r.n_train == n_train]
            for metric, getter in zip(QUANTILE_METRICS,
                                      (lambda r: r.j_train, lambda r: r.j_test,
                                       lambda r: r.e_train, lambda r: r.e_test)):
                vals = [getter(r) for r in cell]
                quantiles.append(QuantileRow(
                    method=method, n_train=n_train, metric=metric,
                    q50=nearest_rank_quantile(vals, 0.5),
                    q90=nearest_rank_quantile(vals, 0.9),
                    q100=nearest_rank_quantile(vals, 1.0),
                ))
    return ExperimentResult(config=config, rows=tuple(rows), quantiles=tuple(quantiles))


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def result_row_to_csv(row: RunRow) -> list[str]:
    return [row.method, str(row.a), str(row.m), str(row.n_train), str(row.realization),
            _fmt(row.j_train), _fmt(row.j_test), _fmt(row.e_train), _fmt(row.e_test),
            _fmt(row.eps_m), _fmt(row.wall_ms)]


def write_results_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(result_row_to_csv(row))


def write_quantiles_csv(quantiles, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUANTILE_COLUMNS)
        for q in quantiles:
            writer.writerow([q.method, str(q.n_train), q.metric,
                             _fmt(q.q50), _fmt(q.q90), _fmt(q.q100)])


# -- feature-rank demo -----------------------------------------------------

@dataclass(frozen=True)
class FeatureRankEntry:
    name: str
    epsilon1: float
    threshold: float
    want_below: bool   # True: pass iff eps <= threshold; False: pass iff eps > threshold

    @property
    def passed(self) -> bool:
        return self.epsilon1 <= self.threshold if self.want_below else self.epsilon1 > self.threshold


@dataclass(frozen=True)
class FeatureRankReport:
    entries: tuple[FeatureRankEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)


def feature_rank_demo(n_x: int = 200, n_y: int = 50, seed: int = 2024) -> FeatureRankReport:
    """One-feature tail of the gradient covariance for a function whose
    first two coordinates act only through their sum, and for two of its
    projections.

    The original function v(x) = (x1+x2) + (x1+x2)^2 x3 factors through
    the single feature x1+x2 over the group (x1, x2), so the covariance
    of its group gradient is rank one and the one-feature tail vanishes.
    Projecting v onto span{x1, x2^2} (times anything in x3) gives
    x1 + x2^2 x3, and projecting onto functions of (x1, x2^2) gives
    x1 + (x1^2 + x2^2) x3; both need two group features, so their tails
    are bounded away from zero.
    """
    sample = build_tensorized(BoxDomain(2), BoxDomain(1), n_x, n_y, seed)
    entries = []
    for name, oracle, threshold, want_below in feature_rank_cases():
        spectrum = estimate_conditional_spectrum(oracle, sample, 1)
        entries.append(FeatureRankEntry(
            name=name, epsilon1=tail_energy(spectrum),
            threshold=threshold, want_below=want_below,
        ))
    return FeatureRankReport(entries=tuple(entries))


def feature_rank_cases() -> list[tuple[str, GradientOracle, float, bool]]:
    """The three demo functions as oracles over the group (x1, x2), with
    the third coordinate as the conditioning variable."""

    def orig_val(x, y):
        s = x[:, 0] + x[:, 1]
        return s + s ** 2 * y[:, 0]

    def orig_grad(x, y):
        common = 1.0 + 2.0 * (x[:, 0] + x[:, 1]) * y[:, 0]
        return np.stack([common, common], axis=1)

    def subspace_val(x, y):
        return x[:, 0] + x[:, 1] ** 2 * y[:, 0]

    def subspace_grad(x, y):
        return np.stack([np.ones(x.shape[0]), 2.0 * x[:, 1] * y[:, 0]], axis=1)

    def measurable_val(x, y):
        return x[:, 0] + (x[:, 0] ** 2 + x[:, 1] ** 2) * y[:, 0]

    def measurable_grad(x, y):
        return np.stack([1.0 + 2.0 * x[:, 0] * y[:, 0], 2.0 * x[:, 1] * y[:, 0]], axis=1)

    make = lambda v, g: GradientOracle(d=2, d_y=1, value=v, gradient_x=g)  # noqa: E731
    return [
        ("original", make(orig_val, orig_grad), 1e-8, True),
        ("subspace_projection", make(subspace_val, subspace_grad), 0.01, False),
        ("measurable_projection", make(measurable_val, measurable_grad), 0.01, False),
    ]
