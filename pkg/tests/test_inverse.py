import numpy as np
import pytest

from cases import (
    ETA,
    POLE_SETS,
    POLES_G,
    borg_marchenko_rate,
    roundtrip,
    smooth_potential,
    smooth_weyl,
    split_pair,
    vanishing_potential,
    weyl_set,
    weyl_set_report,
)
from weylinverse import direct, inverse, snode
from weylinverse.core import GridSpec, PoleSet, PotentialField, ValidationError

GRID = GridSpec(1.0, 256)


def test_projector_error_is_gauge_invariant():
    pot = smooth_potential(32)
    phases = np.exp(1j * np.linspace(0, 3, 33))
    twisted = PotentialField(pot.grid, pot.rows * phases[None, :, None])
    assert inverse.projector_error(pot, twisted) < 1e-15
    assert inverse.projector_error(pot, smooth_potential(32)) == 0
    with pytest.raises(ValidationError):
        inverse.projector_error(pot, smooth_potential(16))


def test_report_rejects_bad_numbers():
    pot = smooth_potential(8)
    with pytest.raises(ValidationError):
        inverse.ReconstructionReport(pot, -1.0, 0.0, 0.0, 0.0, np.zeros(2))
    with pytest.raises(ValidationError):
        inverse.ReconstructionReport(pot, 0.0, np.nan, 0.0, 0.0, np.zeros(2))


def test_zero_weyl_data_gives_constant_row():
    zeta = np.linspace(-50, 50, 256)
    data = direct.WeylData(zeta, -2.0, np.zeros((1, zeta.size), dtype=complex), 1.0, 1.0, 0.0)
    rep = inverse.recover_from_weyl_function(data, PoleSet((1.0,), (1,)), GridSpec(1.0, 32))
    np.testing.assert_allclose(rep.potential.rows[0], np.broadcast_to([1, 0], (33, 2)), atol=1e-14)


def test_weyl_function_pipeline_validates_inputs():
    data = smooth_weyl()
    with pytest.raises(ValidationError):
        inverse.recover_from_weyl_function(data, PoleSet((1.0,), (1,)), GRID)
    with pytest.raises(ValidationError):
        inverse.recover_from_weyl_function(data, POLES_G, GridSpec(2.0, 64))


@pytest.mark.parametrize("case", ["G", "F"])
def test_roundtrip_recovers_projectors(case):
    rep = roundtrip(case)
    assert rep.projector_error < 5e-2
    assert rep.row_drift < 1e-3
    assert rep.identity_residual < 1e-3
    assert set(rep.timings) == {"synth_phi2", "assemble_S", "inverse_sweep", "recover_beta",
                                "diagnostics"}


def test_roundtrip_report_serializes():
    out = roundtrip("G").to_dict()
    assert out["grid_n"] == 256 and "projector_error" in out
    assert all(np.isfinite(v) for v in out.values())
    assert {"c1_re", "c1_im", "c2_re", "c2_im"} <= set(out)


def test_recovered_system_reproduces_its_weyl_function():
    data = smooth_weyl()
    again = direct.sample_weyl_function(roundtrip("G").potential, POLES_G, ETA, zeta=data.zeta, M=data.M)
    assert np.abs(again.phi - data.phi).max() < 5e-2


def test_c_diagnostic_matches_recovered_boundary():
    rep = roundtrip("G")
    b0 = rep.potential.at_origin()
    np.testing.assert_allclose(rep.c_estimate, -b0[:, 1] / b0[:, 0], atol=1e-2)


def test_reconstructions_agree_across_grids():
    coarse = inverse.recover_from_weyl_function(smooth_weyl(), POLES_G, GridSpec(1.0, 128)).potential
    fine = roundtrip("G").potential
    thinned = PotentialField(coarse.grid, fine.rows[:, ::2])
    assert inverse.projector_error(coarse, thinned) < 5e-3


def test_transfer_ode_agrees_for_recovered_and_true_rows():
    rep = roundtrip("G")
    lam = 0.2 + 0.9j
    path = snode.transfer_path(rep.node, lam)
    recovered = snode.transfer_ode_residual(rep.node, rep.potential, lam, path)
    true = snode.transfer_ode_residual(rep.node, smooth_potential(256), lam, path)
    assert abs(recovered - true) < 5e-2
    assert recovered < 1e-2


# ---------------------------------------------------------------- Weyl set

def test_weyl_set_partition_defaults_to_larger_entry():
    assert weyl_set("smooth").first == (0, 1)
    ws = weyl_set("vanishing")
    assert ws.first == (1,) and ws.second == (0,)


def test_weyl_set_partition_errors():
    ws = weyl_set("vanishing")
    with pytest.raises(inverse.PartitionError):
        inverse.WeylSetData(ws.zeta, ws.eta, ws.beta0, ws.psi, ws.M, ws.l, first=(0, 1))
    with pytest.raises(inverse.PartitionError):
        inverse.WeylSetData(ws.zeta, ws.eta, ws.beta0, ws.psi, ws.M, ws.l, first=(1, 1))
    with pytest.raises(inverse.PartitionError):
        inverse.WeylSetData(ws.zeta, ws.eta, ws.beta0, ws.psi, ws.M, ws.l, first=(2,))
    with pytest.raises(inverse.PartitionError):
        inverse.recover_from_weyl_set(ws, PoleSet((1.0,), (1,)), GRID)
    with pytest.raises(ValidationError):
        inverse.WeylSetData(ws.zeta, ws.eta, 2 * ws.beta0, ws.psi, ws.M, ws.l)


def test_weyl_set_function_is_psi_for_unit_first_entry():
    zeta = np.linspace(-5, 5, 8)
    psi = np.exp(1j * zeta)[None] * 0.3
    ws = inverse.WeylSetData(zeta, -1.0, [[1.0, 0.0]], psi, 1.0, 1.0)
    np.testing.assert_allclose(inverse.weyl_set_functions(ws), psi)


def test_first_entry_weyl_set_matches_weyl_function_path():
    a = weyl_set_report("smooth").potential
    b = roundtrip("G").potential
    assert np.abs(a.rows - b.rows).max() < 1e-8


def test_weyl_set_recovers_vanishing_first_entry():
    assert vanishing_potential().rows[0, 0, 0] == pytest.approx(0, abs=1e-15)
    assert weyl_set_report("vanishing").projector_error < 5e-2


def test_weyl_set_gauge_freedom():
    ws = weyl_set("vanishing")
    phases = np.exp(1j * np.array([0.7, -1.3]))
    twisted = inverse.recover_from_weyl_set(ws.with_phases(phases), POLES_G, GRID).potential
    assert inverse.projector_error(twisted, weyl_set_report("vanishing").potential) < 1e-8
    with pytest.raises(ValidationError):
        ws.with_phases([2.0, 1.0])


# ---------------------------------------------------------- local uniqueness

def test_borg_marchenko_rates_track_split_point():
    rates = [borg_marchenko_rate(l0) for l0 in (0.25, 0.5, 0.75)]
    for l0, rate in zip((0.25, 0.5, 0.75), rates):
        assert abs(rate - l0) < 0.15 * l0
    assert rates[0] < rates[1] < rates[2]


def test_borg_marchenko_identical_inputs_are_degenerate():
    a, _ = split_pair(0.5, n=64)
    with pytest.raises(inverse.DegenerateFitError):
        inverse.borg_marchenko_gap(a, a, POLES_G, 0.5)


def test_borg_marchenko_validation():
    a, b = split_pair(0.5, n=64)
    with pytest.raises(ValidationError):
        inverse.borg_marchenko_gap(a, b, POLES_G, 2.5)
    with pytest.raises(ValidationError):
        inverse.borg_marchenko_gap(a, b, POLES_G, 0.5, depths=[0.1, 0.2, 0.3], M=4.0)
    with pytest.raises(ValidationError):
        inverse.borg_marchenko_gap(a, smooth_potential(64), POLES_G, 0.5)


def test_stage_label_attached_to_errors():
    data = smooth_weyl()
    bad = direct.WeylData(data.zeta[::-1], data.eta, data.phi, data.M, data.l, 0.0)
    with pytest.raises(ValidationError, match=r"\[synth_phi2\]") as info:
        inverse.recover_from_weyl_function(bad, POLE_SETS["G"], GridSpec(1.0, 32))
    assert info.value.stage == "synth_phi2"
