import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandkrotov.core import (AU_TIME_FS, HARTREE_CM, ControlField, InteractionKind, SystemModel,
                             TargetSet, TimeGrid, UnitError, convert_units, gate_yield, trapezoid)


def test_hartree_definition():
    assert convert_units(219474.6313632, "cm-1", "hartree") == pytest.approx(1.0, rel=1e-15)


def test_wavelength_conversion():
    assert convert_units(800, "nm", "cm-1") == pytest.approx(12500.0)
    # 643 nm is 15552 cm-1 exactly; the rounded 15541 cm-1 is what configs use
    assert convert_units(643, "nm", "cm-1") == pytest.approx(15552.1, abs=0.1)


def test_time_conversion():
    assert convert_units(1.0, "au_time", "fs") == AU_TIME_FS
    assert convert_units(AU_TIME_FS, "fs", "a.u. time") == pytest.approx(1.0)


def test_unit_errors():
    with pytest.raises(UnitError):
        convert_units(1.0, "fs", "cm-1")
    with pytest.raises(UnitError):
        convert_units(1.0, "eV", "cm-1")


@given(st.floats(1e-3, 1e6), st.sampled_from(["cm-1", "hartree", "nm"]),
       st.sampled_from(["cm-1", "hartree", "nm"]))
def test_energy_round_trip(x, a, b):
    y = convert_units(convert_units(x, a, b), b, a)
    assert y == pytest.approx(x, rel=1e-12)


@given(st.floats(1e-3, 1e6), st.sampled_from(["fs", "au_time"]), st.sampled_from(["fs", "au_time"]))
def test_time_round_trip(x, a, b):
    assert convert_units(convert_units(x, a, b), b, a) == pytest.approx(x, rel=1e-12)


def test_grid_basics():
    g = TimeGrid(100, 0.5)
    assert g.T == 50.0
    assert g.n_nodes == 101
    assert g.t[-1] == pytest.approx(50.0)
    assert g.nyquist_cm == pytest.approx(np.pi / 0.5 * HARTREE_CM)
    assert np.max(np.abs(g.freqs_cm)) <= g.nyquist_cm


def test_grid_from_duration_never_exceeds_dt():
    g = TimeGrid.from_duration(1000.0, 3.0)
    assert g.dt <= 3.0
    assert g.T == pytest.approx(1000.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1, 1.0)
    with pytest.raises(ValueError):
        TimeGrid(10, 0.0)


def test_max_dt_rule_gives_twenty_samples_per_period():
    g = TimeGrid(10, 1.0)
    nu = 3000.0
    period = 2 * np.pi / (nu / HARTREE_CM)
    assert g.max_dt_for(nu) == pytest.approx(period / 20)


def test_trapezoid_exact_for_linear():
    t = np.linspace(0, 2, 11)
    assert trapezoid(3 * t + 1, t[1] - t[0]) == pytest.approx(8.0)


def test_system_validation():
    with pytest.raises(ValueError):
        SystemModel(np.array([1.0, 0.0]), np.zeros((2, 2)), InteractionKind.DIPOLE)
    with pytest.raises(ValueError):
        SystemModel(np.array([0.0, 1.0]), np.array([[0, 1.0], [0.5, 0]]), InteractionKind.DIPOLE)
    s = SystemModel.from_cm([0.0, 2000.0], [[0, 1], [1, 0]], "dipole")
    assert s.energies_cm[1] == pytest.approx(2000.0)
    assert s.kind.n_fields == 1
    with pytest.raises(ValueError):
        s.energies[0] = 3.0


def test_control_field_checks():
    g = TimeGrid(10, 1.0)
    f = ControlField(np.ones(11), 100.0, 1)
    f.check_grid(g)
    with pytest.raises(ValueError):
        ControlField(np.ones(10)).check_grid(g)
    with pytest.raises(ValueError):
        ControlField([1.0, np.nan, 0.0])
    assert f.energy(g) == pytest.approx(10.0)
    assert np.allclose(ControlField(np.arange(4.0)).midpoints(), [0.5, 1.5, 2.5])


def test_target_set_requires_orthonormal_states():
    e = np.eye(3)
    TargetSet(e[:, :2], e[:, [1, 0]])
    with pytest.raises(ValueError):
        TargetSet(e[:, :2], np.stack([e[:, 0], e[:, 0]], axis=1))


def _targets(k=4):
    e = np.eye(k, dtype=complex)
    return TargetSet(e, e)


def test_yield_identity():
    rep = gate_yield(np.eye(4), _targets())
    assert rep.sum_sq == pytest.approx(4.0)
    assert rep.avg_fidelity == pytest.approx(1.0)
    assert rep.phase_fidelity == pytest.approx(1.0)


def test_yield_orthogonal():
    psi = np.roll(np.eye(4), 1, axis=0)
    rep = gate_yield(psi, _targets())
    assert rep.sum_sq == 0 and rep.avg_fidelity == 0 and rep.phase_fidelity == 0


def test_yield_phase_example():
    psi = np.eye(4, dtype=complex)
    psi[3, 3] = 1j
    rep = gate_yield(psi, _targets())
    assert rep.sum_sq == pytest.approx(4.0)
    assert rep.avg_fidelity == pytest.approx(1.0)
    assert rep.phase_fidelity == pytest.approx(0.625, abs=1e-15)


def test_yield_accepts_state_list_and_checks_norm():
    vecs = [np.eye(4)[:, i] for i in range(4)]
    assert gate_yield(vecs, _targets()).sum_sq == pytest.approx(4.0)
    with pytest.raises(ValueError):
        gate_yield(2 * np.eye(4), _targets())
    with pytest.raises(ValueError):
        gate_yield(np.eye(3), _targets())


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_yield_bounds_random_states(seed, k):
    rng = np.random.default_rng(seed)
    dim = 6
    psi = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    psi /= np.linalg.norm(psi, axis=0)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    tg = TargetSet(np.eye(dim)[:, :k], q[:, :k])
    rep = gate_yield(psi, tg)
    assert 0 <= rep.avg_fidelity <= 1 + 1e-12
    assert rep.phase_fidelity <= rep.avg_fidelity + 1e-12
