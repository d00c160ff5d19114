import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ekinv.eks import gaussian_posterior
from ekinv.sqrt_filter import (MeanCovState, SqrtConfig, convexity_constant, quadratic_loss, run_sqrt,
                               sqrt_step)

# strongly convex scalar problem used for the decay-rate regression
PINNED = dict(H=[[1.0]], gamma=[[1.0]], z=[2.0])


def pinned_config(n_max=1000):
    return SqrtConfig(inflation_sigma=np.eye(1), alpha_schedule=lambda n: 0.1 / (n + 1),
                      step_schedule=lambda n: float(n + 1), n_max=n_max)


def decay_slope(trace, lo=10, hi=1000):
    N = np.arange(lo, hi + 1)
    return np.polyfit(np.log(N), np.log(trace.loss_gap[lo:hi + 1]), 1)[0]


def random_instance(seed, d=3, K=4):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(K, d))
    B = rng.normal(size=(d, d))
    return H, np.diag(rng.uniform(0.2, 2.0, K)), rng.normal(size=K), MeanCovState(rng.normal(size=d), B @ B.T)


class TestState:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            MeanCovState(np.zeros(2), np.eye(3))

    def test_tiny_negative_eigenvalues_clipped(self):
        s = MeanCovState([0.0, 0.0], np.diag([1.0, -1e-12]))
        assert np.linalg.eigvalsh(s.C)[0] >= 0

    def test_indefinite_rejected(self):
        with pytest.raises(np.linalg.LinAlgError):
            MeanCovState([0.0, 0.0], np.diag([1.0, -0.1]))


class TestStep:
    def test_unit_step_is_conjugate_posterior(self):
        s = sqrt_step(MeanCovState([0.0], [[1.0]]), [[1.0]], [[1.0]], [2.0], 0.0, 1.0)
        np.testing.assert_allclose(s.m, [1.0], rtol=1e-15)
        np.testing.assert_allclose(s.C, [[0.5]], rtol=1e-15)

    @pytest.mark.parametrize("h", [1e-3, 1.0, 1e3, 1e9])
    def test_step_is_tempered_conjugate_posterior(self, h):
        s = sqrt_step(MeanCovState([0.0], [[1.0]]), [[1.0]], [[1.0]], [2.0], 0.0, h)
        post = gaussian_posterior([[1.0]], [[1.0 / h]], [[1.0]], [2.0])
        np.testing.assert_allclose(s.m, post.mean, atol=1e-6)
        np.testing.assert_allclose(s.C, post.cov, atol=1e-6)

    def test_large_step_interpolates_data(self):
        s = sqrt_step(MeanCovState([0.0], [[1.0]]), [[1.0]], [[1.0]], [2.0], 0.0, 1e9)
        np.testing.assert_allclose(s.m, [2.0], atol=1e-8)
        assert s.C[0, 0] < 1e-8

    def test_unit_step_is_kalman_update(self):
        H, g, z, s0 = random_instance(0)
        s = sqrt_step(s0, H, g, z, 0.0, 1.0)
        K = s0.C @ H.T @ np.linalg.inv(H @ s0.C @ H.T + g)
        np.testing.assert_allclose(s.m, s0.m + K @ (z - H @ s0.m), rtol=1e-10)
        np.testing.assert_allclose(s.C, (np.eye(3) - K @ H) @ s0.C, rtol=1e-9, atol=1e-12)

    def test_zero_innovation(self):
        H, g, _, s0 = random_instance(1)
        s = sqrt_step(s0, H, g, H @ s0.m, 0.5, 2.0, 0.1 * np.eye(3))
        np.testing.assert_allclose(s.m, s0.m, atol=1e-12)
        no_infl = sqrt_step(s0, H, g, H @ s0.m, 0.0, 2.0)
        assert np.trace(no_infl.C) < np.trace(s0.C)
        np.testing.assert_allclose(s.C, no_infl.C + 0.025 * np.eye(3), atol=1e-12)

    def test_pure_inflation(self):
        s0 = MeanCovState([1.0, 2.0], [[2.0, 0.5], [0.5, 1.0]])
        sigma = np.array([[1.0, 0.2], [0.2, 3.0]])
        s = sqrt_step(s0, np.zeros((1, 2)), [[1.0]], [5.0], 0.3, 1.0, sigma)
        np.testing.assert_allclose(s.C, s0.C + 0.09 * sigma, rtol=1e-14)
        np.testing.assert_array_equal(s.m, s0.m)

    def test_invalid_step(self):
        with pytest.raises(ValueError):
            sqrt_step(MeanCovState([0.0], [[1.0]]), [[1.0]], [[1.0]], [0.0], 0.0, 0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.01, 100.0))
    def test_depends_on_gamma_over_h_only(self, seed, h):
        H, g, z, s0 = random_instance(seed)
        a = sqrt_step(s0, H, g, z, 0.1, h)
        b = sqrt_step(s0, H, 2 * g, z, 0.1, 2 * h)
        np.testing.assert_allclose(a.m, b.m, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(a.C, b.C, rtol=1e-8, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_psd_preserved_and_observed_spread_shrinks(self, seed):
        H, g, z, s = random_instance(seed)
        obs = [np.trace(H @ s.C @ H.T)]
        for n in range(30):
            s = sqrt_step(s, H, g, z, 0.0, 1.0)
            assert np.linalg.eigvalsh(s.C)[0] >= -1e-10
            obs.append(np.trace(H @ s.C @ H.T))
        assert np.all(np.diff(obs) <= 1e-12 * obs[0])


class TestRun:
    def test_consistent_start_has_zero_gap(self):
        H = np.array([[1.0, 2.0], [0.5, -1.0]])
        m0 = np.array([0.3, -0.7])
        tr = run_sqrt(H, np.eye(2), H @ m0, MeanCovState(m0, np.eye(2)), SqrtConfig(n_max=20), u_star=m0)
        assert not np.any(tr.loss_gap) and not np.any(tr.mean_error_sq)

    def test_gap_matches_loss_difference(self):
        H, g, z, s0 = random_instance(2)
        tr = run_sqrt(H, g, z, s0, SqrtConfig(n_max=5))
        u_star = np.linalg.solve(H.T @ np.linalg.solve(g, H), H.T @ np.linalg.solve(g, z))
        for s, gap in zip(tr.states, tr.loss_gap):
            want = quadratic_loss(s.m, H, g, z) - quadratic_loss(u_star, H, g, z)
            assert gap == pytest.approx(want, rel=1e-8, abs=1e-10)

    def test_convexity_sandwich(self):
        for seed in range(5):
            H, g, z, s0 = random_instance(seed)
            tr = run_sqrt(H, g, z, s0, SqrtConfig(n_max=200))
            lam_c = convexity_constant(H, g)
            assert lam_c > 0
            assert np.all(lam_c * tr.mean_error_sq <= tr.loss_gap * (1 + 1e-10) + 1e-300)

    def test_convexity_constant(self):
        assert convexity_constant([[2.0]], [[4.0]]) == pytest.approx(0.5)
        assert convexity_constant(np.eye(2), np.diag([1.0, 0.25])) == pytest.approx(0.5)

    def test_pinned_decay_slope(self):
        tr = run_sqrt(PINNED["H"], PINNED["gamma"], PINNED["z"], MeanCovState([0.0], [[1.0]]), pinned_config())
        assert decay_slope(tr) <= -0.5
        assert np.all(np.diff(tr.loss_gap[10:]) < 0)

    def test_trace_csv(self, tmp_path):
        tr = run_sqrt(PINNED["H"], PINNED["gamma"], PINNED["z"], MeanCovState([0.0], [[1.0]]), pinned_config(3))
        tr.write_csv(tmp_path / "loss.csv")
        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "n,loss_gap,mean_error_sq" and len(lines) == 5
        assert float(lines[1].split(",")[1]) == tr.loss_gap[0]
