"""Acceptance suite: one test per criterion, printed as a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import json
import time

import numpy as np
import pytest

from polyfeat import (
    BoxDomain,
    PolynomialBasis,
    assemble_pencil,
    build_tensorized,
    estimate_conditional_spectrum,
    minimize_surrogate,
    orthonormalize,
)
from polyfeat.bench import ExperimentConfig, UaOracle, feature_rank_demo, run_sur
from polyfeat.cli import main as cli_main
from polyfeat.grouped import (
    GroupPartition,
    grouped_gradient_loss,
    grouped_grid,
    hosvd_near_optimality_check,
    two_group_svd,
)
from polyfeat.losses import (
    deviation_bound,
    loss_report,
    projection_norm_identity,
    surrogate_loss,
    truncated_gradient_loss,
)
from polyfeat.regression import DEFAULT_ALPHA_GRID, DEFAULT_GAMMA_GRID, krr_fit
from polyfeat.sampling import latin_hypercube

from conftest import random_feature_map, random_orthonormal


def _report(num: int, desc: str, ok: bool):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {desc}")
    assert ok, f"criterion {num} failed: {desc}"


@pytest.fixture(scope="module")
def rescaled_u3():
    raw = UaOracle(3, 8).as_gradient_oracle()
    return raw.rescaled(1.0 / raw.sup_grad_bound)


@pytest.fixture(scope="module")
def shared_m2(rescaled_u3):
    basis = PolynomialBasis(BoxDomain(8), 2)
    sample = build_tensorized(BoxDomain(8), BoxDomain(1), 30, 5, seed=2718)
    spectrum = estimate_conditional_spectrum(rescaled_u3, sample, 2)
    return basis, sample, spectrum


def test_criterion_01_exact_recovery():
    cfg = ExperimentConfig(a=3, m=3, n_test=1000)
    ok = True
    for i, n_x in enumerate((10, 30, 50)):
        t0 = time.perf_counter()
        run = run_sur(cfg, n_x=n_x, train_seed=10 + i, cv_seed=20 + i, test_seed=30 + i)
        elapsed = time.perf_counter() - t0
        energy = run.report.gradient_energy
        ok &= run.loss_train <= 1e-6 * energy
        ok &= run.loss_test <= 1e-4 * energy
        ok &= elapsed < 60.0
    _report(1, "surrogate pipeline recovers the exact three-feature map "
               "(train loss <= 1e-6, test loss <= 1e-4 of gradient energy, < 60 s)", ok)


def test_criterion_02_sandwich(rescaled_u3, shared_m2):
    basis, sample, spectrum = shared_m2
    rng = np.random.default_rng(42)
    ok = True
    for _ in range(50):
        fm = random_feature_map(basis, 2, rng)
        rep = loss_report(rescaled_u3, fm, sample, spectrum)
        slack = 1e-9 * max(rep.gradient_energy, 1e-300)
        ok &= rep.truncated_loss <= rep.loss + slack
        ok &= rep.loss <= rep.truncated_loss + rep.tail + slack
        ok &= rep.loss >= 0.5 * (rep.truncated_loss + rep.tail) - slack
    _report(2, "truncated <= full <= truncated + tail and factor-2 lower bound, "
               "50 random feature maps at 1e-9 relative slack", ok)


def test_criterion_03_quadratic_form(rescaled_u3, shared_m2):
    basis, sample, spectrum = shared_m2
    pencil = assemble_pencil(rescaled_u3, sample, basis, 2, spectrum=spectrum)
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(50):
        fm = random_feature_map(basis, 2, rng)
        direct = surrogate_loss(rescaled_u3, fm, sample, spectrum)
        quad = float(np.trace(fm.G.T @ pencil.H @ fm.G))
        scale = float(np.trace(fm.G.T @ pencil.H1 @ fm.G))
        ok &= abs(direct - quad) <= 1e-8 * max(scale, 1e-300)
    ok &= np.linalg.eigvalsh(pencil.H).min() >= -1e-8 * np.linalg.norm(pencil.H, 2)
    _report(3, "surrogate equals the pencil quadratic form (1e-8 relative, 50 maps) "
               "and H is PSD up to 1e-8 roundoff", ok)


def test_criterion_04_projection_norm_identity():
    rng = np.random.default_rng(11)
    ok = True
    for i in range(1000):
        d = 2 + i % 7          # dimensions 2..8
        n = int(rng.integers(1, d + 1))
        m = int(rng.integers(1, d + 1))
        lhs, rhs = projection_norm_identity(
            random_orthonormal(d, n, rng), random_orthonormal(d, m, rng))
        ok &= abs(lhs - rhs) <= 1e-12
    _report(4, "projection-norm identity to 1e-12 over 1000 random orthonormal "
               "pairs, d <= 8", ok)


def test_criterion_05_generalized_eigenproblem(rescaled_u3, shared_m2):
    basis, sample, spectrum = shared_m2
    pencil = assemble_pencil(rescaled_u3, sample, basis, 2, spectrum=spectrum)
    g, eigvals = minimize_surrogate(pencil)
    best = float(np.trace(g.G.T @ pencil.H @ g.G))
    ok = abs(best - eigvals.sum()) <= 1e-10
    rng = np.random.default_rng(31)
    tol = 1e-10 * np.linalg.norm(pencil.H, 2)
    for _ in range(100):
        fm = random_feature_map(basis, 2, rng)
        ok &= best <= float(np.trace(fm.G.T @ pencil.H @ fm.G)) + tol
    _report(5, "pencil minimizer beats 100 random competitors; objective equals "
               "the sum of the two smallest generalized eigenvalues to 1e-10", ok)


def test_criterion_06_grouped_decomposition():
    ua = UaOracle(3, 8)

    def grad(points):
        y = np.full((points.shape[0], 1), 0.37)
        return ua.gradient(points, y)

    partitions = {
        2: ((0, 1, 2, 3), (4, 5, 6, 7)),
        3: ((0, 1, 2), (3, 4, 5), (6, 7)),
        4: ((0, 1), (2, 3), (4, 5), (6, 7)),
    }
    counts = {2: (16, 16), 3: (7, 7, 6), 4: (5, 5, 4, 4)}
    rng = np.random.default_rng(5)
    ok = True
    for N, groups in partitions.items():
        part = GroupPartition(groups)
        # one feature fewer than the group dimension keeps every group's
        # loss away from zero, so the relative comparison is meaningful
        maps = [random_feature_map(PolynomialBasis(BoxDomain(len(g)), 2),
                                   max(1, len(g) - 1), rng) for g in groups]
        pts = grouped_grid([BoxDomain(len(g)) for g in groups], counts[N], seed=N)
        res = grouped_gradient_loss(grad, part, maps, pts)  # asserts internally
        scale = max(abs(res.total), 1e-300)
        ok &= abs(res.total - sum(res.per_group)) <= 1e-10 * scale
    _report(6, "block loss equals the sum of per-group losses to 1e-10 relative "
               "for 2, 3 and 4 groups on tensorized grids", ok)


def test_criterion_07_svd_and_hosvd():
    rng = np.random.default_rng(13)
    ok = True
    for shape in [(5, 7), (20, 30), (50, 17), (50, 50)]:
        A = rng.standard_normal(shape)
        m = max(1, min(shape) // 2)
        red = two_group_svd(A, m)
        err = np.linalg.norm(A - red.reconstruction(), "fro") ** 2
        ok &= abs(err - red.tail_energy) <= 1e-10 * max(1.0, err)
    T = rng.standard_normal((4, 4, 4))
    candidates = [tuple(random_orthonormal(4, 2, rng) for _ in range(3))
                  for _ in range(100)]
    ok &= hosvd_near_optimality_check(T, (2, 2, 2), candidates).passed
    _report(7, "SVD truncation error equals the singular-value tail (1e-10, up to "
               "50x50); HOSVD error within factor N of 100 random candidates", ok)


def test_criterion_08_deviation_bound(rescaled_u3):
    basis = PolynomialBasis(BoxDomain(8), 2)
    sample = build_tensorized(BoxDomain(8), BoxDomain(1), 25, 5, seed=1618)
    spectrum = estimate_conditional_spectrum(rescaled_u3, sample, 2)
    rng = np.random.default_rng(17)
    ok = True
    for k in range(20):
        fm = random_feature_map(basis, 2, rng)
        j_trunc, rhs = deviation_bound(
            rescaled_u3, fm, sample, spectrum, ell=1, n_median=500,
            domain=BoxDomain(8), seed=k)
        ok &= j_trunc <= rhs
    _report(8, "truncated loss below the anti-concentration bound for 20 random "
               "degree-2 feature maps on the rescaled benchmark, m=2", ok)


def test_criterion_09_feature_rank_demo():
    report = feature_rank_demo()
    by_name = {e.name: e for e in report.entries}
    ok = by_name["original"].epsilon1 <= 1e-8
    ok &= by_name["subspace_projection"].epsilon1 > 0.01
    ok &= by_name["measurable_projection"].epsilon1 > 0.01
    _report(9, "covariance tail vanishes for the one-feature function and exceeds "
               "0.01 for both of its projections", ok)


def test_criterion_10_krr():
    rng = np.random.default_rng(23)
    Z = latin_hypercube(BoxDomain(2), 50, seed=23)
    u = np.sin(2 * Z[:, 0]) + Z[:, 1] ** 2 + 0.3 * Z[:, 0] * Z[:, 1]
    model = krr_fit(Z, u, gamma=1.0, alpha=1e-11)
    resid = model.predict(Z) - u
    rel = np.sqrt(np.mean(resid ** 2)) / np.sqrt(np.mean(u ** 2))
    ok = rel <= 1e-4
    ok &= DEFAULT_GAMMA_GRID.size == 30 and DEFAULT_ALPHA_GRID.size == 40
    ok &= np.isclose(DEFAULT_GAMMA_GRID[0], 1e-6) and np.isclose(DEFAULT_GAMMA_GRID[-1], 1e-2)
    ok &= np.isclose(DEFAULT_ALPHA_GRID[0], 1e-11) and np.isclose(DEFAULT_ALPHA_GRID[-1], 1e-5)
    _report(10, "kernel ridge interpolates the training set at alpha = 1e-11 to "
                "1e-4 relative RMS; default CV grids are 30 points on [1e-6, 1e-2] "
                "and 40 points on [1e-11, 1e-5]", ok)


def test_criterion_11_determinism(tmp_path):
    cfg = {"a": 2, "m": 2, "n_x": [2, 4], "n_y": 5, "n_test": 60,
           "realizations": 2, "seed": 12, "baseline_max_iter": 15}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    ok = cli_main(["bench", "--config", str(cfg_path), "--out", str(out1)]) == 0
    ok &= cli_main(["bench", "--config", str(cfg_path), "--out", str(out2)]) == 0
    ok &= (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
    ok &= (out1 / "quantiles.csv").read_bytes() == (out2 / "quantiles.csv").read_bytes()
    _report(11, "repeated bench runs with an identical config produce "
                "byte-identical results and quantile CSVs", ok)
