import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import sg_boundary, sg_field, sg_recovery, sg_recovery_error
from weylinverse import direct, sgordon
from weylinverse.core import J_SIGN, DomainError, GridSpec, QualityError, ValidationError

LAM = 0.3 + 0.8j
MUS = np.array([-3.0, 0.0, 2.5]) - 4.0j


def test_fd4_is_fourth_order():
    errs = []
    for n in (32, 64):
        x = np.linspace(0, 1, n + 1)
        errs.append(np.abs(sgordon.fd4(np.sin(3 * x), x[1]) - 3 * np.cos(3 * x)).max())
    assert errs[0] / errs[1] > 12
    with pytest.raises(ValidationError):
        sgordon.fd4([1.0, 2.0], 0.1)


def test_kink_derivatives_match_differences():
    x = np.linspace(-2, 2, 401)
    w, wx, wt = sgordon.kink(x, 0.3)
    assert np.abs(sgordon.fd4(w, x[1] - x[0]) - wx).max() < 1e-6
    h = 1e-5
    fd_t = (sgordon.kink(x, 0.3 + h)[0] - sgordon.kink(x, 0.3 - h)[0]) / (2 * h)
    assert np.abs(fd_t - wt).max() < 1e-6
    with pytest.raises(ValidationError):
        sgordon.kink(0.0, 0.0, speed=1.0)


def test_field_starts_at_identity_and_stays_unitary():
    fld = sg_field("kink", 64)
    j0 = int(np.flatnonzero(fld.t == 0)[0])
    np.testing.assert_array_equal(fld.q[0, j0], np.eye(2))
    # both unit-length paths from the origin
    assert sgordon.unitarity_drift(fld.q[:, j0]) < 1e-8
    assert sgordon.unitarity_drift(fld.q[0, :]) < 1e-8


def test_path_ordering_second_order():
    coarse, fine = sg_field("kink", 32).path_discrepancy(), sg_field("kink", 64).path_discrepancy()
    assert coarse / fine >= 3


def test_unitarity_gate():
    def wild(s):
        return np.broadcast_to(np.array([[0, 50], [0, 0]], dtype=complex), (np.size(s), 2, 2))
    with pytest.raises(QualityError):
        sgordon.evolve_q(wild, np.linspace(0, 1, 3))


@settings(max_examples=40)
@given(st.floats(-10, 10), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_cos_identity_for_unitary_q(omega, a, b):
    q = np.array([[np.cos(a), -np.sin(a) * np.exp(-1j * b)],
                  [np.sin(a) * np.exp(1j * b), np.cos(a)]])
    b1, b2 = sgordon.beta_from_omega(omega, q)
    assert abs(np.linalg.norm(b1) - 1) < 1e-14 and abs(np.linalg.norm(b2) - 1) < 1e-14
    assert abs(sgordon.cos_from_rows(b1, b2) - np.cos(omega)) < 1e-10


def test_rows_orthogonal_at_pi():
    b1, b2 = sgordon.beta_from_omega(np.pi, np.eye(2))
    assert abs(b1 @ b2.conj()) < 1e-15


def test_zero_curvature_kink_second_order():
    r = [sgordon.zero_curvature_residual(sg_field("kink", n), LAM) for n in (32, 64, 128)]
    assert r[0] / r[1] >= 3 and r[1] / r[2] >= 3


def test_zero_curvature_static_and_negative_control():
    assert sgordon.zero_curvature_residual(sg_field("pi", 256), LAM) < 1e-6

    def not_a_solution(x, t):
        w = 1.0 + 0.5 * np.sin(3 * x + 2 * t)
        return w, 1.5 * np.cos(3 * x + 2 * t), np.cos(3 * x + 2 * t)

    fld = sgordon.SGField.from_solution(not_a_solution, np.linspace(0, 1, 65), np.linspace(-0.5, 0.5, 65))
    assert sgordon.zero_curvature_residual(fld, LAM) > 1e-2
    with pytest.raises(DomainError):
        sgordon.zero_curvature_residual(fld, 1.0)


def test_boundary_data_validation():
    t = np.linspace(-1, 1, 9)
    with pytest.raises(ValidationError):
        sgordon.BoundaryData(t[:4], t[:4], t[:4])
    with pytest.raises(ValidationError):
        sgordon.BoundaryData(t + 0.1, t, t)
    with pytest.raises(ValidationError):
        sgordon.BoundaryData(t ** 3, t, t)
    with pytest.raises(ValidationError):
        sgordon.BoundaryData(t, np.full(9, np.nan), t)


def test_boundary_rows_match_field():
    bd = sgordon.BoundaryData.from_solution(sgordon.kink, 0.5, 32)
    fld = sgordon.SGField.from_solution(sgordon.kink, np.linspace(0, 1, 9), bd.t)
    rows = bd.rows()
    assert np.abs(rows[0] - fld.beta1[0]).max() < 1e-6
    assert np.abs(rows[1] - fld.beta2[0]).max() < 1e-6


def test_default_horizon_domain():
    assert sgordon.default_horizon(-4.0, 2.0) == pytest.approx(10.0)
    with pytest.raises(DomainError):
        sgordon.default_horizon(-1.0, 2.0)


# ---------------------------------------------------------------- U-families

def u_family(k, mus=MUS, nodes=400):
    bd = sg_boundary("kink")
    return sgordon.build_U(bd, k, mus, stop=bd.origin + (nodes if k == 0 else -nodes))


@pytest.mark.parametrize("k", [0, 1])
def test_u_family_definiteness(k):
    # |t| <= 1 keeps U moderate; further out the form outgrows double precision
    times, U = u_family(k, MUS - 2.0j, nodes=100)
    np.testing.assert_allclose(U[:, 0], np.broadcast_to(np.eye(2), (MUS.size, 2, 2)), atol=1e-15)
    form = U.conj().swapaxes(-1, -2) @ J_SIGN @ U
    # (-1)^(k+1) d/dt (U^* j U) > 0 with 1-based k: growth for the first
    # index, decay in t (growth along the path to -inf) for the second
    rate = np.diff(form, axis=1) / np.diff(times)[None, :, None, None]
    sign = 1 if k == 0 else -1
    assert np.linalg.eigvalsh(sign * rate).min() > 0
    assert np.linalg.eigvalsh(form[:, 1:] - J_SIGN).min() > 0
    growth = (np.abs(U[:, 1:, 0, 0]) ** 2 - 1) / np.abs(times[1:])
    assert growth.min() > 0


def test_psi_limit_properties():
    bd = sg_boundary("kink")
    lim = sgordon.psi_at_origin(bd, MUS)
    assert np.abs(lim.psi).max() < 1
    times, U = u_family(0)
    eps = ((np.abs(U[:, 1:, 0, 0]) ** 2 - 1) / times[1:]).min()
    assert lim.change < 2 / (1 + eps * lim.horizon)


def test_psi_limit_matches_direct_solver():
    # truncation bound at l = 6 is about 2.5e-6; RK error is of the same size
    bd = sg_boundary("kink")
    lim = sgordon.psi_at_origin(bd, MUS)
    L, n = 6.0, 1200
    fld = sgordon.SGField.from_solution(sgordon.kink, np.linspace(0, L, n + 1),
                                        np.linspace(-2 * L / n, 2 * L / n, 5))
    pot = fld.potential_at(2)
    for k in (0, 1):
        assert np.abs(direct.weyl_point(pot, sgordon.X_POLES, k, MUS) - lim.psi[k]).max() < 1e-4


def test_psi_horizon_too_short():
    bd = sg_boundary("kink")
    with pytest.raises(sgordon.HorizonError):
        sgordon.psi_at_origin(bd, MUS, horizon=0.1)
    with pytest.raises(ValidationError):
        sgordon.psi_at_origin(bd, MUS, horizon=100.0)


def test_evolve_psi_identity_and_cocycle():
    bd = sg_boundary("kink")
    psi0 = sgordon.psi_at_origin(bd, MUS).psi[0]
    np.testing.assert_array_equal(sgordon.evolve_psi(psi0, np.eye(2)), psi0)
    rows = bd.rows()
    lams = sgordon.map_mu_to_lambda(0, MUS, sgordon.X_POLES)
    # forward evolution of a Weyl point cancels like |U|^2, so the window is short
    j0, j1, j2 = bd.origin, bd.origin + 50, bd.origin + 100
    Q = sgordon.gauge_Q(rows[0, [j0, j1, j2]])

    def U(a, b, qa, qb):
        # one fixed substep count, so the segments share the RK4 mesh
        pot, poles = sgordon._segment(rows, bd, a, b)
        Z = direct.propagate(pot, poles, lams, 8)
        phase = np.exp(-1j * MUS * (bd.t[b] - bd.t[a]))[:, None, None]
        return phase * (qb @ Z @ qa.conj().T)

    two = sgordon.evolve_psi(sgordon.evolve_psi(psi0, U(j0, j1, Q[0], Q[1])), U(j1, j2, Q[1], Q[2]))
    one = sgordon.evolve_psi(psi0, U(j0, j2, Q[0], Q[2]))
    assert np.abs(two - one).max() < 1e-8
    _, path = sgordon.build_U(bd, 0, MUS, stop=bd.origin + 250)
    assert np.abs(sgordon.evolve_psi(psi0[:, None], path)).max() < 1


def test_evolve_psi_degenerate():
    with pytest.raises(QualityError):
        sgordon.evolve_psi(1.0, np.array([[1.0, 0.0], [1.0, -1.0]]))


# ------------------------------------------------------------------ recovery

def test_recover_cos_omega_constant_pi():
    res = sg_recovery("pi")
    assert sg_recovery_error("pi") < 5e-2
    np.testing.assert_allclose(res.values, -1.0, atol=5e-2)


def test_recover_cos_omega_kink():
    res = sg_recovery("kink")
    assert sg_recovery_error("kink") < 5e-2
    assert np.all(np.abs(res.values) <= 1 + 1e-2)
    assert np.isrealobj(res.values)


def test_recover_cos_omega_rejects_off_grid_time_and_high_line():
    bd = sg_boundary("pi")
    with pytest.raises(ValidationError):
        sgordon.weyl_set_at(bd, 0.0123, -4.0, np.linspace(-10, 10, 16))
    with pytest.raises(DomainError):
        sgordon.weyl_set_at(bd, 0.0, -0.1, np.linspace(-10, 10, 16))


def test_recover_cos_omega_later_time_pi():
    res = sgordon.recover_cos_omega(sg_boundary("pi"), 0.5, GridSpec(1.0, 32))
    np.testing.assert_allclose(res.values, -1.0, atol=5e-2)
