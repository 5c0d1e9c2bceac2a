import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from kaczmimo.baselines import detect_direct, precode_direct
from kaczmimo.channel import RngStream
from kaczmimo.estimators import KaczmarzDetector, KaczmarzPrecoder
from kaczmimo.kaczmarz import dl_precode, ul_detect

from conftest import cn


def test_params_round_trip():
    det = KaczmarzDetector(xi=0.2, n_iter=10, random_state=3)
    assert det.get_params() == {"xi": 0.2, "n_iter": 10, "budget_mk": 40.0, "random_state": 3}
    pre = clone(KaczmarzPrecoder(shared_indices=False))
    assert pre.get_params()["shared_indices"] is False
    det.set_params(xi=0.5)
    assert det.xi == 0.5


def test_detector_matches_ul_detect(rng):
    Q, Y = cn(rng, 16, 4), cn(rng, 5, 16)
    det = KaczmarzDetector(xi=0.1, n_iter=120, random_state=RngStream(1, "ka-rows")).fit(Q)
    for y, s in zip(Y, det.predict(Y)):
        ref, _ = ul_detect(Q, y, 0.1, 120, RngStream(1, "ka-rows"))
        np.testing.assert_allclose(s, ref, atol=1e-13)
    np.testing.assert_array_equal(det.predict(Y[0]), det.transform(Y)[0])


def test_precoder_matches_dl_precode(rng):
    Q, S = cn(rng, 16, 4), cn(rng, 3, 4)
    pre = KaczmarzPrecoder(xi=0.1, n_iter=150, random_state=RngStream(2, "ka-rows")).fit(Q)
    for s, x in zip(S, pre.transform(S)):
        ref, _, _ = dl_precode(Q, s, 0.1, 150, RngStream(2, "ka-rows"))
        np.testing.assert_allclose(x, ref, atol=1e-13)


def test_budget_sets_iterations(rng):
    det = KaczmarzDetector(budget_mk=40).fit(cn(rng, 256, 32))
    assert det.n_iter_ == 608


def test_converged_estimators(rng):
    Q, y, s = cn(rng, 24, 3), cn(rng, 24), cn(rng, 3)
    det = KaczmarzDetector(xi=0.3, n_iter=100_000, random_state=0).fit(Q)
    np.testing.assert_allclose(det.predict(y), detect_direct(Q, y, 0.3), atol=1e-8)
    pre = KaczmarzPrecoder(xi=0.3, n_iter=100_000, random_state=0).fit(Q)
    np.testing.assert_allclose(pre.predict(s), precode_direct(Q, s, 0.3, normalize=False).x, atol=1e-8)


def test_not_fitted(rng):
    with pytest.raises(NotFittedError):
        KaczmarzDetector().predict(cn(rng, 4))
