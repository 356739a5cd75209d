import numpy as np
import pytest

from polyfeat import (
    BoxDomain,
    GradientOracle,
    PolynomialBasis,
    PolynomialMap,
    assemble_pencil,
    build_tensorized,
    estimate_conditional_spectrum,
    orthonormalize,
)
from polyfeat.bench import UaOracle
from polyfeat.losses import (
    SampleMismatchError,
    deviation_bound,
    gradient_loss,
    loss_report,
    projection_norm_identity,
    projector,
    regression_error,
    surrogate_loss,
    truncated_gradient_loss,
)

from conftest import coordinate_oracle, random_feature_map, random_orthonormal


def coordinate_map(basis: PolynomialBasis, coords) -> PolynomialMap:
    """Feature map picking out the given coordinate functions (orthonormalized)."""
    G = np.zeros((basis.K, len(coords)))
    for c, coord in enumerate(coords):
        target = tuple(1 if i == coord else 0 for i in range(basis.d))
        row = [k for k, mi in enumerate(basis.multi_indices) if tuple(mi) == target][0]
        G[row, c] = 1.0
    return orthonormalize(basis, G)


@pytest.fixture(scope="module")
def ua3():
    return UaOracle(3, 8).as_gradient_oracle()


@pytest.fixture(scope="module")
def ua3_setup(ua3):
    basis = PolynomialBasis(BoxDomain(8), 2)
    sample = build_tensorized(BoxDomain(8), BoxDomain(1), 30, 5, seed=99)
    spectrum = estimate_conditional_spectrum(ua3, sample, 3)
    return basis, sample, spectrum


class TestProjector:
    def test_single_axis(self):
        e1 = np.zeros((3, 1))
        e1[0] = 1.0
        P = projector(e1)
        expected = np.zeros((3, 3))
        expected[0, 0] = 1.0
        assert np.allclose(P, expected, atol=1e-14)

    def test_span_invariance(self):
        B = np.zeros((3, 2))
        B[0, 0] = 1.0
        B[0, 1] = 2.0
        P = projector(B)
        expected = np.zeros((3, 3))
        expected[0, 0] = 1.0
        assert np.allclose(P, expected, atol=1e-13)

    def test_zero_matrix(self):
        assert np.array_equal(projector(np.zeros((4, 2))), np.zeros((4, 4)))

    def test_idempotent_symmetric(self, rng):
        B = rng.standard_normal((6, 3))
        P = projector(B)
        assert np.max(np.abs(P @ P - P)) <= 1e-10
        assert np.max(np.abs(P - P.T)) <= 1e-10


class TestGradientLoss:
    def test_full_rank_map_gives_zero(self, rng):
        basis = PolynomialBasis(BoxDomain(3), 2)
        gmap = coordinate_map(basis, [0, 1, 2])
        oracle = GradientOracle(
            d=3, d_y=1,
            value=lambda x, y: np.sin(x).sum(axis=1) * y[:, 0],
            gradient_x=lambda x, y: np.cos(x) * y[:, :1],
        )
        x = rng.uniform(-1, 1, (40, 3))
        y = rng.uniform(-1, 1, (40, 1))
        assert gradient_loss(oracle, gmap, x, y) <= 1e-10

    def test_aligned_coordinate(self, rng):
        basis = PolynomialBasis(BoxDomain(3), 2)
        oracle = coordinate_oracle(3, coord=0)
        x = rng.uniform(-1, 1, (25, 3))
        y = rng.uniform(-1, 1, (25, 1))
        assert gradient_loss(oracle, coordinate_map(basis, [0]), x, y) <= 1e-14

    def test_orthogonal_coordinate(self, rng):
        basis = PolynomialBasis(BoxDomain(3), 2)
        oracle = coordinate_oracle(3, coord=0)
        x = rng.uniform(-1, 1, (25, 3))
        y = rng.uniform(-1, 1, (25, 1))
        assert gradient_loss(oracle, coordinate_map(basis, [1]), x, y) == pytest.approx(1.0, abs=1e-12)

    def test_span_invariance_under_recombination(self, ua3, rng):
        basis = PolynomialBasis(BoxDomain(8), 2)
        fm = random_feature_map(basis, 3, rng)
        T = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        mixed = PolynomialMap(basis, fm.G @ T)
        x = rng.uniform(-1, 1, (30, 8))
        y = rng.uniform(-1, 1, (30, 1))
        a = gradient_loss(ua3, fm, x, y)
        b = gradient_loss(ua3, mixed, x, y)
        assert abs(a - b) <= 1e-9 * max(abs(a), 1.0)

    def test_empty_pairs_rejected(self, ua3):
        basis = PolynomialBasis(BoxDomain(8), 2)
        fm = coordinate_map(basis, [0])
        with pytest.raises(ValueError):
            gradient_loss(ua3, fm, np.empty((0, 8)), np.empty((0, 1)))


class TestTruncatedLoss:
    def test_m_equals_d_matches_full_loss(self, ua3, rng):
        basis = PolynomialBasis(BoxDomain(8), 2)
        sample = build_tensorized(BoxDomain(8), BoxDomain(1), 10, 5, seed=3)
        spec = estimate_conditional_spectrum(ua3, sample, 8)
        fm = random_feature_map(basis, 2, rng)
        x, y = sample.expand_pairs()
        full = gradient_loss(ua3, fm, x, y)
        trunc = truncated_gradient_loss(ua3, fm, sample, spec)
        assert abs(full - trunc) <= 1e-10 * max(full, 1.0)

    def test_never_exceeds_full_loss(self, ua3, ua3_setup, rng):
        _, sample, spec = ua3_setup
        basis = PolynomialBasis(BoxDomain(8), 2)
        x, y = sample.expand_pairs()
        for _ in range(10):
            fm = random_feature_map(basis, 3, rng)
            full = gradient_loss(ua3, fm, x, y)
            trunc = truncated_gradient_loss(ua3, fm, sample, spec)
            assert trunc <= full + 1e-9 * max(full, 1.0)

    def test_mismatched_sample_rejected(self, ua3, ua3_setup, rng):
        basis, sample, spec = ua3_setup
        other = build_tensorized(BoxDomain(8), BoxDomain(1), 30, 5, seed=100)
        fm = random_feature_map(basis, 3, rng)
        with pytest.raises(SampleMismatchError):
            truncated_gradient_loss(ua3, fm, other, spec)


class TestSurrogateLoss:
    def test_aligned_jacobian_gives_zero(self):
        oracle = coordinate_oracle(3, coord=0)
        basis = PolynomialBasis(BoxDomain(3), 2)
        sample = build_tensorized(BoxDomain(3), BoxDomain(1), 8, 3, seed=1)
        spec = estimate_conditional_spectrum(oracle, sample, 1)
        gmap = coordinate_map(basis, [0])
        assert surrogate_loss(oracle, gmap, sample, spec) <= 1e-12

    def test_constant_in_x(self):
        oracle = GradientOracle(
            d=2, d_y=1,
            value=lambda x, y: y[:, 0] ** 2,
            gradient_x=lambda x, y: np.zeros((x.shape[0], 2)),
        )
        basis = PolynomialBasis(BoxDomain(2), 2)
        sample = build_tensorized(BoxDomain(2), BoxDomain(1), 5, 3, seed=2)
        spec = estimate_conditional_spectrum(oracle, sample, 1)
        gmap = coordinate_map(basis, [1])
        assert surrogate_loss(oracle, gmap, sample, spec) == 0.0

    def test_matches_pencil_quadratic_form(self, ua3, ua3_setup, rng):
        basis, sample, spec = ua3_setup
        pencil = assemble_pencil(ua3, sample, basis, 3, spectrum=spec)
        fm = random_feature_map(basis, 3, rng)
        direct = surrogate_loss(ua3, fm, sample, spec)
        quad = float(np.trace(fm.G.T @ pencil.H @ fm.G))
        scale = float(np.trace(fm.G.T @ pencil.H1 @ fm.G))
        assert abs(direct - quad) <= 1e-8 * max(scale, 1e-300)


class TestSandwich:
    def test_per_sample_identity(self, ua3, ua3_setup, rng):
        basis, sample, spec = ua3_setup
        for _ in range(20):
            fm = random_feature_map(basis, 3, rng)
            rep = loss_report(ua3, fm, sample, spec)
            assert rep.sandwich_holds(rtol=1e-9)

    def test_report_invariants(self, ua3, ua3_setup, rng):
        basis, sample, spec = ua3_setup
        fm = random_feature_map(basis, 3, rng)
        rep = loss_report(ua3, fm, sample, spec)
        floor = -1e-12 * rep.gradient_energy
        for v in (rep.loss, rep.truncated_loss, rep.surrogate_loss, rep.tail):
            assert v >= floor
        assert rep.loss <= rep.gradient_energy + 1e-10

    def test_csv_row(self, ua3, ua3_setup, rng):
        basis, sample, spec = ua3_setup
        fm = random_feature_map(basis, 3, rng)
        rep = loss_report(ua3, fm, sample, spec)
        row = rep.csv_row("tag", sample.n_x, sample.n_y, e_hat=0.25)
        assert len(row) == 8
        assert row[0] == "tag"
        assert float(row[3]) == rep.loss


class TestBiLipschitzBound:
    def test_linear_map_constant_jacobian(self, ua3, ua3_setup):
        basis, sample, spec = ua3_setup
        gmap = coordinate_map(basis, [0, 4])
        jac = gmap.jacobian(sample.x_points[:1])[0]
        c = np.linalg.svd(jac, compute_uv=False)[-1] ** 2
        j_trunc = truncated_gradient_loss(ua3, gmap, sample, spec)
        l_hat = surrogate_loss(ua3, gmap, sample, spec)
        assert j_trunc <= l_hat / c + 1e-9 * max(j_trunc, 1.0)


class TestProjectionNormIdentity:
    def test_equal_matrices(self, rng):
        V = random_orthonormal(5, 3, rng)
        lhs, rhs = projection_norm_identity(V, V)
        assert lhs == pytest.approx(0.0, abs=1e-12)
        assert rhs == pytest.approx(0.0, abs=1e-12)

    def test_full_identity_v(self, rng):
        d, m = 6, 2
        W = random_orthonormal(d, m, rng)
        lhs, rhs = projection_norm_identity(np.eye(d), W)
        assert lhs == pytest.approx(d - m, abs=1e-12)
        assert rhs == pytest.approx(d - m, abs=1e-12)

    def test_random_pair(self, rng):
        V = random_orthonormal(6, 3, rng)
        W = random_orthonormal(6, 2, rng)
        lhs, rhs = projection_norm_identity(V, W)
        assert abs(lhs - rhs) <= 1e-12

    def test_sweep(self, rng):
        for d in range(2, 9):
            for n in range(1, d + 1):
                for m in range(1, d + 1):
                    V = random_orthonormal(d, n, rng)
                    W = random_orthonormal(d, m, rng)
                    lhs, rhs = projection_norm_identity(V, W)
                    assert abs(lhs - rhs) <= 1e-12

    def test_non_orthonormal_rejected(self, rng):
        V = rng.standard_normal((5, 2))
        with pytest.raises(ValueError):
            projection_norm_identity(V, random_orthonormal(5, 2, rng))


@pytest.fixture(scope="module")
def rescaled_setup():
    raw = UaOracle(3, 8).as_gradient_oracle()
    oracle = raw.rescaled(1.0 / raw.sup_grad_bound)
    sample = build_tensorized(BoxDomain(8), BoxDomain(1), 25, 5, seed=55)
    spectrum = estimate_conditional_spectrum(oracle, sample, 2)
    basis = PolynomialBasis(BoxDomain(8), 2)
    return oracle, sample, spectrum, basis


class TestDeviationBound:
    def test_holds_for_random_maps(self, rescaled_setup, rng):
        oracle, sample, spectrum, basis = rescaled_setup
        for k in range(5):
            fm = random_feature_map(basis, 2, rng)
            j_trunc, rhs = deviation_bound(
                oracle, fm, sample, spectrum, ell=1, n_median=500,
                domain=BoxDomain(8), seed=k)
            assert j_trunc <= rhs

    def test_exact_recovery_limit(self, ua3):
        # with three features the surrogate vanishes, so assert the loss is tiny
        oracle = ua3.rescaled(1.0 / ua3.sup_grad_bound)
        basis = PolynomialBasis(BoxDomain(8), 2)
        sample = build_tensorized(BoxDomain(8), BoxDomain(1), 25, 5, seed=56)
        spectrum = estimate_conditional_spectrum(oracle, sample, 3)
        pencil = assemble_pencil(oracle, sample, basis, 3, spectrum=spectrum)
        from polyfeat import minimize_surrogate

        g, _ = minimize_surrogate(pencil)
        j_trunc = truncated_gradient_loss(oracle, g, sample, spectrum)
        assert j_trunc <= 1e-8

    def test_m1_rejected(self, ua3, rng):
        oracle = ua3.rescaled(1.0 / ua3.sup_grad_bound)
        basis = PolynomialBasis(BoxDomain(8), 2)
        sample = build_tensorized(BoxDomain(8), BoxDomain(1), 10, 5, seed=57)
        spectrum = estimate_conditional_spectrum(oracle, sample, 1)
        fm = random_feature_map(basis, 1, rng)
        with pytest.raises(ValueError, match="m >= 2"):
            deviation_bound(oracle, fm, sample, spectrum, ell=1, n_median=100,
                            domain=BoxDomain(8))

    def test_degenerate_map_rejected(self, ua3):
        # two features depending on x1 only: the Jacobian Gram is singular
        oracle = ua3.rescaled(1.0 / ua3.sup_grad_bound)
        basis = PolynomialBasis(BoxDomain(8), 2)
        sample = build_tensorized(BoxDomain(8), BoxDomain(1), 10, 5, seed=58)
        spectrum = estimate_conditional_spectrum(oracle, sample, 2)
        G = np.zeros((basis.K, 2))
        rows = {tuple(mi): k for k, mi in enumerate(map(tuple, basis.multi_indices))}
        G[rows[(1,) + (0,) * 7], 0] = 1.0
        G[rows[(2,) + (0,) * 7], 1] = 1.0
        fm = orthonormalize(basis, G)
        with pytest.raises(ValueError, match="degenerate"):
            deviation_bound(oracle, fm, sample, spectrum, ell=1, n_median=100,
                            domain=BoxDomain(8))


class TestRegressionError:
    def test_exact_profile_gives_zero(self, rng):
        basis = PolynomialBasis(BoxDomain(3), 2)
        oracle = coordinate_oracle(3, coord=0)
        gmap = coordinate_map(basis, [0])
        x = rng.uniform(-1, 1, (20, 3))
        y = rng.uniform(-1, 1, (20, 1))
        sign = np.sign(gmap(np.eye(3)[:1] * 0.5)[0, 0])  # feature is +/- x1
        err = regression_error(oracle, gmap, lambda z: sign * z[:, 0], x, y)
        assert err <= 1e-12

    def test_zero_profile_gives_rms(self, rng):
        basis = PolynomialBasis(BoxDomain(3), 2)
        oracle = coordinate_oracle(3, coord=0)
        gmap = coordinate_map(basis, [1])
        x = rng.uniform(-1, 1, (20, 3))
        y = rng.uniform(-1, 1, (20, 1))
        err = regression_error(oracle, gmap, lambda z: np.zeros(len(z)), x, y)
        assert err == pytest.approx(np.sqrt(np.mean(x[:, 0] ** 2)))
