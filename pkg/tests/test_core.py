import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylinverse.core import (
    DomainError,
    GridSpec,
    PoleSet,
    PotentialField,
    SpectralPoint,
    ValidationError,
    gauge_Q,
    map_lambda_to_mu,
    map_mu_to_lambda,
    normalize_rows,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
angles = st.floats(-np.pi, np.pi, allow_nan=False)


@st.composite
def unit_rows(draw):
    theta = draw(st.floats(0, np.pi / 2))
    a, b = draw(angles), draw(angles)
    return np.array([np.cos(theta) * np.exp(1j * a), np.sin(theta) * np.exp(1j * b)])


@st.composite
def nonzero_complex(draw):
    z = complex(draw(finite), draw(finite))
    if abs(z) < 1e-3:
        z += 1.0
    return z


P = PoleSet((1.0,), (1,))
POLES = PoleSet((1.0, -1.0, 0.25), (1, -1, 1))


def test_mu_to_lambda_substitution():
    assert map_mu_to_lambda(0, -1j, P) == pytest.approx(1 + 0.5j)


def test_lambda_to_mu_inverts_example():
    assert map_lambda_to_mu(0, 1 + 0.5j, P) == pytest.approx(-1j)


def test_excluded_points():
    with pytest.raises(DomainError):
        map_mu_to_lambda(0, 0.0, P)
    with pytest.raises(DomainError):
        map_lambda_to_mu(0, 1.0, P)


@given(st.integers(0, 2), nonzero_complex())
def test_chart_roundtrip(k, mu):
    back = map_lambda_to_mu(k, map_mu_to_lambda(k, mu, POLES), POLES)
    assert abs(back - mu) <= 1e-12 * max(1.0, abs(mu))


@given(st.integers(0, 2), nonzero_complex())
def test_chart_commutes_with_conjugation(k, mu):
    lam = map_mu_to_lambda(k, mu, POLES)
    assert map_mu_to_lambda(k, np.conj(mu), POLES) == pytest.approx(np.conj(lam), rel=1e-14)


@given(st.integers(0, 2), finite, finite.filter(lambda v: abs(v) > 1e-6))
def test_lower_half_plane_sign_algebra(k, re, im):
    lam = POLES.d[k] + complex(re, im)
    mu = map_lambda_to_mu(k, lam, POLES)
    if (lam - POLES.d[k]).imag * POLES.b[k] > 0:
        assert mu.imag < 0


def test_chart_is_vectorized():
    mus = np.array([-1j, 2 - 3j, -0.5 - 0.1j])
    lams = map_mu_to_lambda(1, mus, POLES)
    assert lams.shape == (3,)
    np.testing.assert_allclose(map_lambda_to_mu(1, lams, POLES), mus, rtol=1e-14)


def test_spectral_point_consistency():
    p = SpectralPoint.from_mu(2, 0.3 - 2j, POLES)
    assert p.consistent(POLES)
    q = SpectralPoint.from_lambda(2, p.lam, POLES)
    assert q.mu == pytest.approx(p.mu)


@pytest.mark.parametrize("d, b", [((), ()), ((1.0, 1.0), (1, 1)), ((1.0,), (2,)),
                                  ((np.inf,), (1,)), ((1.0, 2.0), (1,))])
def test_pole_set_rejects(d, b):
    with pytest.raises(ValidationError):
        PoleSet(d, b)


def test_pole_set_matrices_and_gap():
    assert POLES.m == 3
    np.testing.assert_array_equal(np.diag(POLES.D), [1.0, -1.0, 0.25])
    np.testing.assert_array_equal(np.diag(POLES.B), [1, -1, 1])
    assert POLES.min_gap() == pytest.approx(0.75)
    assert P.min_gap() == np.inf
    with pytest.raises(DomainError):
        POLES.coefficients(-1.0)


def test_gauge_examples():
    np.testing.assert_array_equal(gauge_Q([1, 0]), np.eye(2))
    np.testing.assert_array_equal(gauge_Q([0, 1]), [[0, 1], [-1, 0]])


@given(unit_rows())
def test_gauge_unitary(row):
    Q = gauge_Q(row)
    assert np.abs(Q.conj().T @ Q - np.eye(2)).max() < 1e-12
    assert np.abs(Q @ Q.conj().T - np.eye(2)).max() < 1e-12
    np.testing.assert_allclose(Q[0], row, atol=1e-15)


def test_gauge_rejects_non_unit_row():
    with pytest.raises(ValidationError):
        gauge_Q([1.0, 0.1])


def test_gauge_stacks():
    rows = np.array([[1, 0], [0, 1], [np.sqrt(0.5), 1j * np.sqrt(0.5)]])
    assert gauge_Q(rows).shape == (3, 2, 2)


@settings(max_examples=50)
@given(unit_rows(), st.floats(-1e-4, 1e-4).filter(lambda e: abs(e) > 1e-8))
def test_normalize_rows_rescales_mild_drift(row, eps):
    out = normalize_rows(row * (1 + eps))
    assert abs(np.linalg.norm(out) - 1) < 1e-14


def test_normalize_rows_rejects_large_drift():
    with pytest.raises(ValidationError):
        normalize_rows(np.array([1.01, 0]))


def test_grid_spec():
    g = GridSpec(2.0, 4)
    assert g.h == 0.5
    np.testing.assert_allclose(g.x, [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(g.weights(), [0.25, 0.5, 0.5, 0.5, 0.25])
    np.testing.assert_allclose(g.weights(2), [0.25, 0.5, 0.25])
    assert g.weights(0).tolist() == [0.0]
    assert g.refined().n == 8
    for bad in ((1.0, 1), (0.0, 4), (-1.0, 4), (1.0, 2.5)):
        with pytest.raises(ValidationError):
            GridSpec(*bad)


def test_potential_field_validation_and_freeze():
    g = GridSpec(1.0, 4)
    rows = np.tile([1.0 + 0j, 0.0], (2, 5, 1))
    pot = PotentialField(g, rows)
    assert pot.m == 2 and pot.row_drift() == 0
    with pytest.raises(ValueError):
        pot.rows[0, 0, 0] = 2
    with pytest.raises(ValidationError):
        PotentialField(g, rows[:, :4])
    bad = rows.copy()
    bad[0, 2] = np.nan
    with pytest.raises(ValidationError):
        PotentialField(g, bad)
    strict = np.tile([0.0 + 0j, 1.0], (1, 5, 1))
    with pytest.raises(ValidationError):
        PotentialField(g, strict, strict=True)


def test_potential_projectors_are_rank_one():
    g = GridSpec(1.0, 8)
    pot = PotentialField.from_function(g, lambda x: np.stack(
        [np.stack([np.cos(x), 1j * np.sin(x)], -1)]))
    P = pot.projectors()
    np.testing.assert_allclose(np.trace(P, axis1=-2, axis2=-1), 1.0, atol=1e-14)
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
