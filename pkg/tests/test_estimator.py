import numpy as np
import pytest

from cases import POLES_G, roundtrip, smooth_potential, smooth_weyl, vanishing_potential, weyl_set
from weylinverse import WeylReconstructor, inverse
from weylinverse.core import ValidationError
from weylinverse.estimator import NotFittedError


@pytest.fixture(scope="module")
def fitted():
    return WeylReconstructor(POLES_G).fit(smooth_weyl(), truth=smooth_potential())


def test_params_roundtrip():
    est = WeylReconstructor(POLES_G, n=64)
    params = est.get_params()
    assert params["n"] == 64 and params["poles"] is POLES_G
    assert est.set_params(l=0.5, first_order=False) is est
    assert est.l == 0.5 and not est.first_order
    assert "n=64" in repr(est)
    with pytest.raises(ValueError, match="grid"):
        est.set_params(grid=3)


def test_unfitted_use_raises():
    est = WeylReconstructor(POLES_G)
    for call in (est.predict, est.transform, lambda: est.score(smooth_potential())):
        with pytest.raises(NotFittedError):
            call()


def test_fit_matches_pipeline(fitted):
    np.testing.assert_array_equal(fitted.potential_.rows, roundtrip("G").potential.rows)
    assert fitted.report_.projector_error == roundtrip("G").projector_error


def test_score_is_negative_projector_error(fitted):
    assert fitted.score(smooth_potential()) == -fitted.report_.projector_error
    assert fitted.score(fitted.potential_) == 0


def test_predict_nodes_and_between(fitted):
    np.testing.assert_array_equal(fitted.predict(), fitted.potential_.rows)
    nodes = fitted.potential_.x
    np.testing.assert_allclose(fitted.predict(nodes[[0, 10, -1]]), fitted.potential_.rows[:, [0, 10, -1]],
                               atol=1e-15)
    mid = 0.5 * (nodes[10] + nodes[11])
    out = fitted.predict(mid)
    assert out.shape == (2, 1, 2)
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1, atol=1e-14)
    truth = smooth_potential().rows
    assert np.abs(np.abs(np.sum(out[:, 0].conj() * truth[:, 10], -1)) - 1).max() < 1e-2


def test_predict_rejects_out_of_range(fitted):
    with pytest.raises(ValidationError):
        fitted.predict([-0.1, 0.5])
    with pytest.raises(ValidationError):
        fitted.predict(1.5)


def test_transform_and_fit_transform(fitted):
    assert fitted.transform() is fitted.potential_
    est = WeylReconstructor(POLES_G, n=128)
    coarse = est.fit_transform(smooth_weyl())
    assert coarse.rows.shape == (2, 129, 2)
    np.testing.assert_array_equal(est.transform(smooth_weyl()).rows, coarse.rows)


def test_fit_on_weyl_set():
    est = WeylReconstructor(POLES_G).fit(weyl_set("vanishing"), truth=vanishing_potential())
    assert est.score(vanishing_potential()) > -5e-2
    assert isinstance(est.report_, inverse.ReconstructionReport)


def test_rejects_unknown_data():
    with pytest.raises(ValidationError, match="WeylData"):
        WeylReconstructor(POLES_G).fit(np.zeros(4))
