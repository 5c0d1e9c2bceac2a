import math

import numpy as np
import pytest

from kaczmimo.exceptions import RankDeficient, ZeroRowWithPositiveWeight
from kaczmimo.gains import (
    average_projector,
    gain_report,
    kappa_closed_form_ul,
    kappa_rmt,
    kappa_suboptimal,
    markov_tail,
    optimal_row_distribution,
    theorem1_envelope,
)
from kaczmimo.kaczmarz import RowDistribution

from conftest import cn


def stacked(Q, xi):
    return np.vstack([Q, math.sqrt(xi) * np.eye(Q.shape[1])])


class TestAverageProjector:
    def test_identity_uniform(self):
        np.testing.assert_allclose(average_projector(np.eye(2), [0.5, 0.5]), 0.5 * np.eye(2))

    def test_single_row(self):
        np.testing.assert_allclose(average_projector(np.array([[1.0, 1.0]]), [1.0]), 0.5 * np.ones((2, 2)))

    def test_suboptimal_is_normalized_gram(self, rng):
        A = cn(rng, 30, 5)
        P = average_projector(A, RowDistribution.from_weights(np.sum(np.abs(A) ** 2, axis=1)))
        G = A.conj().T @ A
        np.testing.assert_allclose(P, G / np.trace(G).real, atol=1e-12)

    def test_trace_and_psd(self, rng):
        for _ in range(20):
            A = cn(rng, 12, 4)
            P = average_projector(A, rng.random(12))
            assert np.trace(P).real == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(P, P.conj().T, atol=0)
            assert np.linalg.eigvalsh(P).min() >= -1e-14

    def test_zero_row_with_weight(self):
        A = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ZeroRowWithPositiveWeight):
            average_projector(A, [0.5, 0.5])
        np.testing.assert_allclose(average_projector(A, [1.0, 0.0]), [[1, 0], [0, 0]])


class TestKappa:
    def test_identity(self):
        assert kappa_suboptimal(np.eye(4)) == pytest.approx(0.25)

    def test_diag(self):
        assert kappa_suboptimal(np.diag([1.0, 2.0])) == pytest.approx(0.2)

    def test_random_search_oracle(self, rng):
        A = cn(rng, 8, 3)
        k = kappa_suboptimal(A)
        x = cn(rng, 3, 10_000)
        x /= np.linalg.norm(x, axis=0)
        ratios = np.sum(np.abs(A @ x) ** 2, axis=0) / np.sum(np.abs(A) ** 2)
        assert ratios.min() >= k - 1e-12
        # refine the best random point by inverse iteration to pin the minimum
        G = A.conj().T @ A / np.sum(np.abs(A) ** 2)
        v = x[:, ratios.argmin()]
        for _ in range(50):
            v = np.linalg.solve(G, v)
            v /= np.linalg.norm(v)
        assert np.real(np.vdot(v, G @ v)) == pytest.approx(k, abs=1e-12)
        assert ratios.min() - k <= 0.05 * k

    def test_wide_matrix_uses_row_space(self, rng):
        A = cn(rng, 3, 8)
        s = np.linalg.svd(A, compute_uv=False)
        assert kappa_suboptimal(A) == pytest.approx(s.min() ** 2 / np.sum(s**2), rel=1e-10)

    def test_upper_bound(self, rng):
        for m, n in [(5, 5), (20, 3), (3, 20)]:
            assert kappa_suboptimal(cn(rng, m, n)) <= 1 / min(m, n) + 1e-12

    def test_closed_form_examples(self):
        assert kappa_closed_form_ul(np.eye(3), 0.7) == pytest.approx(1 / 3)
        assert kappa_closed_form_ul(np.diag([1.0, 2.0]), 0.0) == pytest.approx(0.2)

    def test_closed_form_matches_stacked(self, rng):
        for _ in range(30):
            Q, xi = cn(rng, 16, 4), rng.uniform(0, 2)
            # B^H has the sampled rows of the regularized system; its row space is the column span of B
            assert kappa_closed_form_ul(Q, xi) == pytest.approx(kappa_suboptimal(stacked(Q, xi).conj().T), abs=1e-9)

    def test_closed_form_monotone_in_xi(self, rng):
        grid = np.linspace(0, 5, 21)
        for _ in range(100):
            Q = cn(rng, 12, 3)
            vals = [kappa_closed_form_ul(Q, xi) for xi in grid]
            assert np.all(np.diff(vals) >= -1e-15)
            assert vals[0] >= kappa_suboptimal(Q) - 1e-12 and vals[-1] <= 1 / 3 + 1e-12

    def test_rmt(self):
        assert kappa_rmt(7, 7) == 0.0
        assert kappa_rmt(256, 10) == pytest.approx(0.064378, abs=1e-6)
        assert kappa_rmt(256, 10) < 0.1
        with pytest.raises(ValueError):
            kappa_rmt(4, 5)

    def test_rmt_mean(self):
        rng = np.random.default_rng(77)
        vals = [kappa_suboptimal(cn(rng, 256, 32)) for _ in range(40)]
        assert abs(np.mean(vals) / kappa_rmt(256, 32) - 1) <= 0.15


class TestEnvelope:
    def test_values(self):
        assert theorem1_envelope(0.3, 0, 2.5) == 2.5
        assert theorem1_envelope(1.0, 3, 2.5) == 0.0
        assert theorem1_envelope(0.1, 10, 1.0) == pytest.approx(0.3486784401, abs=1e-10)

    def test_markov(self):
        assert markov_tail(0.1, 10, 1.0, 0.5) == pytest.approx(0.6973568802, abs=1e-10)
        assert markov_tail(0.0, 7, 3.0, 1.0) == 1.0
        assert markov_tail(0.0, 7, 1.0, 4.0) == 0.25

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            theorem1_envelope(1.5, 1, 1.0)
        with pytest.raises(ValueError):
            markov_tail(0.1, 1, 1.0, 0.0)


class TestOptimal:
    def test_identity_uniform(self):
        dist, k = optimal_row_distribution(np.eye(4), iters=50)
        np.testing.assert_allclose(dist.probabilities, 0.25)
        assert k == pytest.approx(0.25)

    def test_never_below_suboptimal(self, rng):
        for m, n in [(6, 2), (20, 4), (40, 3)]:
            A = cn(rng, m, n) * rng.uniform(0.1, 3, size=(m, 1))
            _, k = optimal_row_distribution(A, iters=100)
            assert kappa_suboptimal(A) - 1e-8 <= k <= 1 / n + 1e-12

    def test_reported_kappa_matches_distribution(self, rng):
        A = cn(rng, 30, 4)
        dist, k = optimal_row_distribution(A, iters=80)
        assert np.linalg.eigvalsh(average_projector(A, dist)).min() == pytest.approx(k, abs=1e-10)

    def test_rank_deficient(self, rng):
        A = cn(rng, 10, 2) @ cn(rng, 2, 3)
        with pytest.raises(RankDeficient):
            optimal_row_distribution(A)

    def test_close_to_sdp_optimum(self):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(5)
        A = cn(rng, 24, 3)
        An = A / np.linalg.norm(A, axis=1, keepdims=True)
        # real embedding of the Hermitian projector keeps the SDP real-valued
        p = cp.Variable(24, nonneg=True)
        blocks = []
        for a in An:
            R = np.outer(a.conj(), a)
            blocks.append(np.block([[R.real, -R.imag], [R.imag, R.real]]))
        P = sum(p[i] * blocks[i] for i in range(24))
        prob = cp.Problem(cp.Maximize(cp.lambda_min(0.5 * (P + P.T))), [cp.sum(p) == 1])
        prob.solve()
        _, k = optimal_row_distribution(A, iters=500)
        assert k <= prob.value + 1e-6
        gap0 = prob.value - kappa_suboptimal(A)
        assert prob.value - k <= 0.1 * gap0 + 1e-6


def test_gain_report(rng):
    A = cn(rng, 40, 4)
    r = gain_report(A, optimal=True, iters=60)
    d = r.to_dict()
    assert d["bound"] == 0.25
    assert r.kappa_suboptimal == pytest.approx(min(r.spectrum))
    assert sum(r.spectrum) == pytest.approx(1.0)
    assert r.kappa_optimal >= r.kappa_suboptimal - 1e-8
    assert gain_report(A, optimal=False).kappa_optimal is None
