"""Randomized structural checks over generated problem instances."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from kaczmimo.channel import RngStream
from kaczmimo.gains import average_projector, kappa_closed_form_ul, kappa_suboptimal
from kaczmimo.kaczmarz import (
    apply_detector,
    build_row_distribution,
    compute_linear_map,
    dl_precode,
    replay_linear_map,
    sample_rows,
    ul_detect,
)

from conftest import cn

dims = st.tuples(st.integers(1, 6), st.integers(0, 10)).map(lambda kd: (kd[0] + kd[1], kd[0]))
xis = st.sampled_from([0.0, 0.01, 0.3, 2.0])
seeds = st.integers(0, 2**32 - 1)
common = settings(max_examples=40, deadline=None)


@common
@given(dims, xis, seeds, st.integers(0, 80))
def test_uplink_invariants(mk, xi, seed, T):
    M, K = mk
    rng = np.random.default_rng(seed)
    Q, y = cn(rng, M, K), cn(rng, M)
    s_hat, state = ul_detect(Q, y, xi, T, RngStream(seed, "ka-rows"))
    assert state.coupling_residual(Q) <= 1e-10 * (1 + np.linalg.norm(state.u))
    again, _ = ul_detect(Q, y, xi, T, RngStream(seed, "ka-rows"))
    assert again.tobytes() == s_hat.tobytes()
    (m,) = replay_linear_map(Q, xi, state.indices)
    np.testing.assert_allclose(apply_detector(m, Q, y), s_hat, atol=1e-11 * (1 + np.linalg.norm(s_hat)))


@common
@given(dims, xis, seeds, st.integers(1, 60))
def test_precoder_linear_and_shared_map(mk, xi, seed, T):
    M, K = mk
    rng = np.random.default_rng(seed)
    Q, s1, s2 = cn(rng, M, K), cn(rng, K), cn(rng, K)
    a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    idx = sample_rows(build_row_distribution(Q, xi), rng, T)
    x1, _, _ = dl_precode(Q, s1, xi, None, indices=idx)
    x2, _, _ = dl_precode(Q, s2, xi, None, indices=idx)
    x12, _, _ = dl_precode(Q, a * s1 + b * s2, xi, None, indices=idx)
    scale = 1 + abs(a) * np.linalg.norm(x1) + abs(b) * np.linalg.norm(x2)
    np.testing.assert_allclose(x12, a * x1 + b * x2, atol=1e-11 * scale)
    W = compute_linear_map(Q, xi, None, indices=idx).W
    np.testing.assert_allclose(Q @ W @ s1, x1, atol=1e-11 * (1 + np.linalg.norm(x1)))


@common
@given(st.integers(1, 12), st.integers(1, 5), seeds)
def test_projector_trace_and_kappa_range(m, n, seed):
    rng = np.random.default_rng(seed)
    A = cn(rng, m, n)
    p = rng.random(m) + 1e-3
    assert abs(np.trace(average_projector(A, p)).real - 1) <= 1e-12
    assert 0 <= kappa_suboptimal(A) <= 1 / min(m, n) + 1e-12


@common
@given(dims, st.floats(0, 10), seeds)
def test_closed_form_bounds(mk, xi, seed):
    M, K = mk
    Q = cn(np.random.default_rng(seed), M, K)
    k = kappa_closed_form_ul(Q, xi)
    assert kappa_suboptimal(Q) - 1e-12 <= k <= 1 / K + 1e-12
