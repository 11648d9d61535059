import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cifuse.fusion import (
    MixingWeights,
    NodeProfile,
    bci_fuse,
    ci_fuse,
    detection_scale_factors,
    expected_payoff,
    mbci_fuse,
    modified_ci_fuse,
    modified_precisions,
    optimize_omega_pair,
    optimize_omega_simplex,
)
from cifuse.gaussian import GaussianEstimate, chol_inverse

from conftest import random_spd


def est(mean, cov):
    return GaussianEstimate(mean, cov)


def trace_inv(m):
    return float(np.trace(np.linalg.inv(m)))


class TestTypes:
    def test_profile_bounds(self):
        NodeProfile(0.0, 1.0)
        NodeProfile(1.0, 0.01)
        with pytest.raises(ValueError):
            NodeProfile(1.2, 1.0)
        with pytest.raises(ValueError):
            NodeProfile(0.5, 0.0)
        with pytest.raises(ValueError):
            NodeProfile(0.5, 1.5)

    def test_weights_must_be_simplex(self):
        MixingWeights(np.array([0.25, 0.75]))
        with pytest.raises(ValueError):
            MixingWeights(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            MixingWeights(np.array([-0.1, 1.1]))

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=5))
    def test_weights_accept_any_normalized_vector(self, raw):
        w = np.array(raw) / np.sum(raw)
        mw = MixingWeights(w)
        assert len(mw) == len(raw)
        assert np.isclose(mw.omega.sum(), 1.0)


class TestCiFuse:
    def test_identical_inputs_any_omega(self, rng):
        cov = random_spd(rng, 3)
        mean = rng.normal(size=3)
        for omega in (0.0, 0.3, 0.5, 1.0):
            out = ci_fuse(est(mean, cov), est(mean, cov), omega)
            assert np.allclose(out.mean, mean, atol=1e-10)
            assert np.allclose(out.cov, cov, atol=1e-10)

    def test_boundary_weight_returns_input(self, rng):
        a = est(rng.normal(size=2), random_spd(rng, 2))
        b = est(rng.normal(size=2), random_spd(rng, 2))
        out = ci_fuse(a, b, 1.0)
        assert np.allclose(out.mean, a.mean, atol=1e-12)
        assert np.allclose(out.cov, a.cov, atol=1e-12)

    def test_hand_arithmetic_1d(self):
        out = ci_fuse(est([0.0], [[2.0]]), est([0.0], [[1.0]]), 0.5)
        assert out.cov[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_singular_input_is_hard_error(self):
        a = est([0.0, 0.0], np.diag([1.0, 0.0]))
        b = est([0.0, 0.0], np.eye(2))
        with pytest.raises(ValueError):
            ci_fuse(a, b, 0.5)

    def test_accepts_mixing_weights(self, rng):
        a = est(rng.normal(size=2), random_spd(rng, 2))
        b = est(rng.normal(size=2), random_spd(rng, 2))
        out_w = ci_fuse(a, b, MixingWeights.pair(0.3))
        out_s = ci_fuse(a, b, 0.3)
        assert np.allclose(out_w.mean, out_s.mean)


class TestOptimizeOmegaPair:
    def test_symmetric_tie_returns_half(self, rng):
        p = random_spd(rng, 3)
        assert optimize_omega_pair(p, p) == 0.5

    def test_1d_dominant_input(self):
        # Covariances 2 and 1: all weight on the tighter input, fused P = 1.
        omega = optimize_omega_pair(np.array([[0.5]]), np.array([[1.0]]))
        assert omega == 0.0
        fused = 1.0 / (omega * 0.5 + (1 - omega) * 1.0)
        assert fused == pytest.approx(1.0)

    def test_swap_symmetry(self):
        omega = optimize_omega_pair(np.diag([1.0, 0.25]), np.diag([0.25, 1.0]))
        assert omega == 0.5

    def test_matches_fine_grid(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 5))
            pa, pb = random_spd(rng, n), random_spd(rng, n)
            omega = optimize_omega_pair(pa, pb)
            ours = trace_inv(omega * pa + (1 - omega) * pb)
            grid = np.linspace(0, 1, 10001)
            combos = grid[:, None, None] * pa + (1 - grid)[:, None, None] * pb
            best = np.trace(np.linalg.inv(combos), axis1=1, axis2=2).min()
            assert ours <= best + 1e-6


class TestModifiedPrecisions:
    def test_chi_one_reduces_to_plain(self, rng):
        pa, pb = random_spd(rng, 2), random_spd(rng, 2)
        prec_a, prec_b = modified_precisions(pa, pb, NodeProfile(0.9, 1.0), NodeProfile(0.7, 1.0))
        assert np.allclose(prec_a, chol_inverse(pa), atol=1e-14)
        assert np.allclose(prec_b, chol_inverse(pb), atol=1e-14)

    def test_paper_parameter_factors(self):
        chi = 1.0 / 1.025
        factors = detection_scale_factors([NodeProfile(0.9, chi), NodeProfile(0.7, chi)])
        assert factors[0] == pytest.approx(0.996847, abs=1e-6)
        assert factors[1] == pytest.approx(0.991969, abs=1e-6)

    def test_equal_nodes_share_alpha(self):
        for p in (0.2, 0.6, 0.95):
            for chi in (0.3, 0.8, 1.0):
                factors = detection_scale_factors([NodeProfile(p, chi), NodeProfile(p, chi)])
                alpha = p + p * (1 - p) * chi + (1 - p) ** 2 * chi**2
                assert factors[0] == pytest.approx(alpha, rel=1e-12)
                assert factors[1] == pytest.approx(alpha, rel=1e-12)

    def test_factors_in_unit_interval_grid(self):
        grid = np.round(np.arange(0.0, 1.01, 0.1), 10)
        for p1 in grid:
            for p2 in grid:
                for chi in grid[1:]:  # chi = 0 is outside the valid profile domain
                    profs = [NodeProfile(p1, chi), NodeProfile(p2, chi)]
                    f = detection_scale_factors(profs)
                    assert np.all(f > 0.0) and np.all(f <= 1.0 + 1e-12)

    @given(
        st.lists(
            st.tuples(st.floats(0.0, 1.0), st.floats(0.01, 1.0)), min_size=2, max_size=5
        )
    )
    def test_factors_bounded_property(self, params):
        profs = [NodeProfile(p, chi) for p, chi in params]
        f = detection_scale_factors(profs)
        assert np.all(f > 0.0) and np.all(f <= 1.0 + 1e-12)


class TestModifiedCiFuse:
    def test_chi_one_equals_traditional(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 4))
            a = est(rng.normal(size=n), random_spd(rng, n))
            b = est(rng.normal(size=n), random_spd(rng, n))
            omega = optimize_omega_pair(chol_inverse(a.cov), chol_inverse(b.cov))
            plain = ci_fuse(a, b, omega)
            mod = modified_ci_fuse(a, b, NodeProfile(0.9, 1.0), NodeProfile(0.7, 1.0))
            assert np.abs(mod.mean - plain.mean).max() <= 1e-12
            assert np.abs(mod.cov - plain.cov).max() <= 1e-12

    def test_uniform_scaling_keeps_omega(self, rng):
        # p = q and chi_a = chi_b scale both precisions equally, so the
        # optimizer must return the unmodified CI weight.
        pa, pb = random_spd(rng, 3), random_spd(rng, 3)
        base = optimize_omega_pair(chol_inverse(pa), chol_inverse(pb))
        prec_a, prec_b = modified_precisions(
            pa, pb, NodeProfile(0.8, 0.9), NodeProfile(0.8, 0.9)
        )
        scaled = optimize_omega_pair(prec_a, prec_b)
        assert scaled == pytest.approx(base, abs=1e-6)

    def test_asymmetric_identity_inputs_inflate(self):
        chi = 1.0 / 1.025
        a = est([0.0, 0.0], np.eye(2))
        b = est([0.0, 0.0], np.eye(2))
        out = modified_ci_fuse(a, b, NodeProfile(0.9, chi), NodeProfile(0.7, chi))
        # Fused covariance is (0.996847 w + 0.991969 (1 - w))^-1 I >= I.
        assert np.allclose(out.cov, out.cov[0, 0] * np.eye(2))
        lo = 1.0 / 0.996847
        hi = 1.0 / 0.991969
        assert lo - 1e-6 <= out.cov[0, 0] <= hi + 1e-6
        assert np.linalg.eigvalsh(out.cov - np.eye(2)).min() >= -1e-9


class TestBatchFusion:
    def test_bci_two_inputs_equals_pairwise(self, rng):
        for _ in range(10):
            a = est(rng.normal(size=2), random_spd(rng, 2))
            b = est(rng.normal(size=2), random_spd(rng, 2))
            w = float(rng.uniform())
            pair = ci_fuse(a, b, w)
            batch = bci_fuse([a, b], MixingWeights(np.array([w, 1 - w])))
            assert np.abs(pair.mean - batch.mean).max() <= 1e-12
            assert np.abs(pair.cov - batch.cov).max() <= 1e-12

    def test_identical_inputs_returned(self, rng):
        e = est(rng.normal(size=2), random_spd(rng, 2))
        out = bci_fuse([e, e, e], MixingWeights(np.array([0.2, 0.5, 0.3])))
        assert np.allclose(out.mean, e.mean, atol=1e-10)
        assert np.allclose(out.cov, e.cov, atol=1e-10)

    def test_hand_arithmetic_three_inputs(self):
        inputs = [est([0.0], [[1.0]]), est([0.0], [[2.0]]), est([0.0], [[4.0]])]
        out = bci_fuse(inputs, MixingWeights(np.array([0.5, 0.25, 0.25])))
        assert out.cov[0, 0] == pytest.approx(1.0 / 0.6875, rel=1e-12)

    def test_off_simplex_weights_are_hard_error(self, rng):
        e = est(rng.normal(size=2), random_spd(rng, 2))
        with pytest.raises(ValueError):
            bci_fuse([e, e], np.array([0.7, 0.7]))

    def test_mbci_all_chi_one_equals_bci(self, rng):
        for _ in range(10):
            inputs = [
                (est(rng.normal(size=2), random_spd(rng, 2)), NodeProfile(p, 1.0))
                for p in (0.8, 0.9, 0.95)
            ]
            estimates = [e for e, _ in inputs]
            weights = optimize_omega_simplex([chol_inverse(e.cov) for e in estimates])
            plain = bci_fuse(estimates, weights)
            mod = mbci_fuse(inputs)
            assert np.abs(mod.mean - plain.mean).max() <= 1e-12
            assert np.abs(mod.cov - plain.cov).max() <= 1e-12

    def test_mbci_two_inputs_equals_modified_pairwise(self, rng):
        a = est(rng.normal(size=2), random_spd(rng, 2))
        b = est(rng.normal(size=2), random_spd(rng, 2))
        profs = (NodeProfile(0.9, 0.95), NodeProfile(0.7, 0.9))
        pair = modified_ci_fuse(a, b, *profs)
        batch = mbci_fuse([(a, profs[0]), (b, profs[1])])
        assert np.array_equal(pair.mean, batch.mean)
        assert np.array_equal(pair.cov, batch.cov)

    def test_mbci_factors_match_game_expansion(self, rng):
        # Oracle: enumerate the 2^N detect/miss outcomes of the N-player
        # game; a missing node's precision carries its chi times every other
        # missing node's chi. The expected payoff must equal the trace of the
        # factor-scaled precision combination for every weight vector.
        profs = [NodeProfile(0.8, 1 / 1.025), NodeProfile(0.9, 1 / 1.025), NodeProfile(0.95, 1 / 1.025)]
        precs = [random_spd(rng, 2) for _ in range(3)]
        weights = rng.dirichlet(np.ones(3))
        factors = detection_scale_factors(profs)
        direct = np.trace(
            sum(w * f * prec for w, f, prec in zip(weights, factors, precs))
        )
        expanded = 0.0
        for outcome in range(8):
            miss = [(outcome >> i) & 1 for i in range(3)]
            prob = np.prod(
                [1 - pr.p_detect if m else pr.p_detect for pr, m in zip(profs, miss)]
            )
            cell = 0.0
            for i, (prec, w) in enumerate(zip(precs, weights)):
                if miss[i]:
                    scale = profs[i].chi * np.prod(
                        [profs[j].chi for j in range(3) if j != i and miss[j]]
                    )
                else:
                    scale = 1.0
                cell += w * scale * np.trace(prec)
            expanded += prob * cell
        assert direct == pytest.approx(expanded, rel=1e-10)


class TestOptimizeOmegaSimplex:
    def test_equal_inputs_tie_to_centroid(self, rng):
        p = random_spd(rng, 3)
        w = optimize_omega_simplex([p, p, p])
        assert np.allclose(w.omega, 1.0 / 3.0)

    def test_dominant_input_takes_nearly_all(self, rng):
        base = random_spd(rng, 2)
        w = optimize_omega_simplex([10.0 * base, base, base])
        assert w.omega[0] >= 0.99

    def test_two_inputs_match_pair_optimizer(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 5))
            pa, pb = random_spd(rng, n), random_spd(rng, n)
            pair = optimize_omega_pair(pa, pb)
            simplex = optimize_omega_simplex([pa, pb])
            f_pair = trace_inv(pair * pa + (1 - pair) * pb)
            f_simplex = trace_inv(simplex.omega[0] * pa + simplex.omega[1] * pb)
            assert abs(f_pair - f_simplex) <= 1e-5


class TestExpectedPayoff:
    def test_matches_modified_precision_trace(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 4))
            pa, pb = random_spd(rng, n), random_spd(rng, n)
            prof_a = NodeProfile(float(rng.uniform()), float(rng.uniform(0.05, 1.0)))
            prof_b = NodeProfile(float(rng.uniform()), float(rng.uniform(0.05, 1.0)))
            omega = float(rng.uniform())
            payoff = expected_payoff(pa, pb, prof_a, prof_b, omega)
            prec_a, prec_b = modified_precisions(pa, pb, prof_a, prof_b)
            assert payoff == pytest.approx(
                np.trace(omega * prec_a + (1 - omega) * prec_b), abs=1e-10
            )

    def test_always_detect_corner(self, rng):
        pa, pb = random_spd(rng, 2), random_spd(rng, 2)
        payoff = expected_payoff(pa, pb, NodeProfile(1.0, 0.5), NodeProfile(1.0, 0.5), 0.4)
        plain = np.trace(0.4 * chol_inverse(pa) + 0.6 * chol_inverse(pb))
        assert payoff == pytest.approx(plain, rel=1e-12)

    def test_no_growth_corner_equals_always_detect(self, rng):
        p = random_spd(rng, 2)
        a = expected_payoff(p, p, NodeProfile(0.3, 1.0), NodeProfile(0.6, 1.0), 0.7)
        b = expected_payoff(p, p, NodeProfile(1.0, 0.4), NodeProfile(1.0, 0.9), 0.7)
        assert a == pytest.approx(b, rel=1e-12)


def consistent_inputs(rng, n, blocks):
    """True joint covariance with cross-correlation plus inflated marginals."""
    joint = random_spd(rng, blocks * n)
    true_blocks = [joint[i * n : (i + 1) * n, i * n : (i + 1) * n] for i in range(blocks)]
    reported = [tb + random_spd(rng, n, 0.5) for tb in true_blocks]
    return joint, reported


def fused_true_cov(joint, weight_mats):
    n = weight_mats[0].shape[0]
    blocks = len(weight_mats)
    big = np.hstack(weight_mats)
    return big @ joint @ big.T


class TestConsistency:
    def test_ci_and_modified_ci_dominate_true_covariance(self, rng):
        # Randomized substitute for the deferred consistency proof.
        chi = 1.0 / 1.025
        prof_a, prof_b = NodeProfile(0.9, chi), NodeProfile(0.7, chi)
        for _ in range(100):
            n = int(rng.integers(1, 4))
            joint, (pa, pb) = consistent_inputs(rng, n, 2)
            ma, mb = rng.normal(size=n), rng.normal(size=n)
            for mode in ("ci", "modci"):
                if mode == "ci":
                    prec_a, prec_b = chol_inverse(pa), chol_inverse(pb)
                else:
                    prec_a, prec_b = modified_precisions(pa, pb, prof_a, prof_b)
                omega = optimize_omega_pair(prec_a, prec_b)
                fused_prec = omega * prec_a + (1 - omega) * prec_b
                cov = np.linalg.inv(fused_prec)
                wa = cov @ (omega * prec_a)
                wb = cov @ ((1 - omega) * prec_b)
                true_cov = fused_true_cov(joint, [wa, wb])
                assert np.linalg.eigvalsh(cov - true_cov).min() >= -1e-9

    def test_inflation_property_pointwise(self, rng):
        chi = 1.0 / 1.025
        prof_a, prof_b = NodeProfile(0.9, chi), NodeProfile(0.7, chi)
        for _ in range(50):
            n = int(rng.integers(1, 4))
            pa, pb = random_spd(rng, n), random_spd(rng, n)
            omega = float(rng.uniform())
            plain = np.linalg.inv(omega * chol_inverse(pa) + (1 - omega) * chol_inverse(pb))
            prec_a, prec_b = modified_precisions(pa, pb, prof_a, prof_b)
            inflated = np.linalg.inv(omega * prec_a + (1 - omega) * prec_b)
            assert np.linalg.eigvalsh(inflated - plain).min() >= -1e-9

    def test_argmin_invariant_under_common_scaling(self, rng):
        pa, pb = random_spd(rng, 3), random_spd(rng, 3)
        base = optimize_omega_pair(pa, pb)
        scaled = optimize_omega_pair(0.37 * pa, 0.37 * pb)
        assert scaled == pytest.approx(base, abs=1e-6)
