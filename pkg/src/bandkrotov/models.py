"""Model systems, gate target sets and guess fields."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (HARTREE_CM, ControlField, InteractionKind, SystemModel, TargetSet,
                   TimeGrid, cm_to_au, fs_to_au)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TwoModeParams:
    """Two anharmonic vibrational modes; frequencies in cm-1, polarizability in a.u."""

    nu1: float = 2990.0
    nu2: float = 3030.0
    d1: float = 74.0
    d2: float = 103.0
    d12: float = 22.0
    n_states: int = 50
    alpha_lin1: float = 1.0
    alpha_lin2: float = 1.0
    alpha_static: float = 10.0
    level_guard: float = 1.0

    def __post_init__(self):
        if self.n_states < 4:
            raise ModelError("n_states must be >= 4")
        if self.nu1 <= 0 or self.nu2 <= 0:
            raise ModelError("fundamental frequencies must be positive")


@dataclass(frozen=True)
class QubitBasisMap:
    """Indices of |00>, |01>, |10>, |11> in the sorted eigenbasis.

    The first label is mode 1 (control qubit), the second mode 2 (active qubit).
    """

    i00: int
    i01: int
    i10: int
    i11: int

    def __post_init__(self):
        if len({self.i00, self.i01, self.i10, self.i11}) != 4:
            raise ModelError("qubit basis indices must be distinct")

    @property
    def indices(self) -> tuple:
        return (self.i00, self.i01, self.i10, self.i11)

    @property
    def names(self) -> tuple:
        return ("00", "01", "10", "11")


def ladder_energy(v1, v2, p: TwoModeParams):
    """Anharmonic two-mode term values (cm-1) relative to the ground state."""
    return (p.nu1 * v1 - 0.5 * p.d1 * v1 * (v1 - 1)
            + p.nu2 * v2 - 0.5 * p.d2 * v2 * (v2 - 1)
            - p.d12 * v1 * v2)


def _bound_vmax(nu, d):
    # last level whose step up from v-1 is still positive
    return int(nu / d) if d > 0 else 10**6


def qubit_transitions(E_cm: np.ndarray, basis: QubitBasisMap) -> dict:
    """The four one-qubit flip frequencies (cm-1)."""
    E = E_cm
    return {
        "00->01": E[basis.i01] - E[basis.i00],
        "10->11": E[basis.i11] - E[basis.i10],
        "00->10": E[basis.i10] - E[basis.i00],
        "01->11": E[basis.i11] - E[basis.i01],
    }


def build_two_mode_raman_system(p: TwoModeParams) -> tuple[SystemModel, QubitBasisMap]:
    """Lowest ``n_states`` product levels with a linear-in-Q polarizability.

    ``alpha = alpha_static + alpha_lin1 Q1 + alpha_lin2 Q2`` with harmonic
    ladder matrix elements ``<v-1|Q|v> = sqrt(v/2)``.
    """
    vmax1 = min(_bound_vmax(p.nu1, p.d1), p.n_states)
    vmax2 = min(_bound_vmax(p.nu2, p.d2), p.n_states)
    cand = [(v1, v2) for v1 in range(vmax1 + 1) for v2 in range(vmax2 + 1)]
    if len(cand) < p.n_states:
        raise ModelError("not enough bound product levels for n_states")
    energies = np.array([ladder_energy(v1, v2, p) for v1, v2 in cand])
    order = np.lexsort((np.array([c[1] for c in cand]), np.array([c[0] for c in cand]), energies))
    order = order[: p.n_states]
    labels = [cand[i] for i in order]
    E_cm = energies[order]
    index = {lab: i for i, lab in enumerate(labels)}
    for q in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        if q not in index:
            raise ModelError(f"qubit level {q} not among the {p.n_states} lowest states")
    basis = QubitBasisMap(index[(0, 0)], index[(0, 1)], index[(1, 0)], index[(1, 1)])
    if basis.i00 != int(np.argmin(E_cm)):
        raise ModelError("|00> is not the ground state")
    freqs = np.array(list(qubit_transitions(E_cm, basis).values()))
    gaps = np.abs(freqs[:, None] - freqs[None, :])[np.triu_indices(4, 1)]
    if np.min(gaps) < p.level_guard:
        raise ModelError(
            f"qubit transitions closer than {p.level_guard} cm-1: {np.round(np.sort(freqs), 3)}")

    n = p.n_states
    alpha = p.alpha_static * np.eye(n)
    for i, (v1, v2) in enumerate(labels):
        for j, (w1, w2) in enumerate(labels):
            x = 0.0
            if v2 == w2 and w1 == v1 + 1:
                x = p.alpha_lin1 * np.sqrt(w1 / 2)
            elif v1 == w1 and w2 == v2 + 1:
                x = p.alpha_lin2 * np.sqrt(w2 / 2)
            if x:
                alpha[i, j] += x
                alpha[j, i] += x
    system = SystemModel.from_cm(E_cm - E_cm[0], alpha, InteractionKind.RAMAN, tuple(labels))
    return system, basis


def build_nlevel_dipole(energies_cm, dipole, labels=None) -> SystemModel:
    """Dipole-coupled system from level energies (cm-1) and a dipole matrix (a.u.)."""
    mu = np.asarray(dipole)
    if np.iscomplexobj(mu):
        if np.max(np.abs(mu - mu.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(mu))):
            raise ModelError("dipole matrix must be Hermitian")
        if np.max(np.abs(mu.imag)) > 0:
            raise ModelError("complex dipole matrices are not supported")
        mu = mu.real
    mu = np.asarray(mu, float)
    if mu.shape[0] != mu.shape[1] or np.max(np.abs(mu - mu.T)) > 1e-12 * max(1.0, np.max(np.abs(mu))):
        raise ModelError("dipole matrix must be Hermitian")
    E = np.asarray(energies_cm, float)
    order = np.argsort(E, kind="stable")
    if not np.array_equal(order, np.arange(E.size)):
        mu = mu[np.ix_(order, order)]
        E = E[order]
        labels = None if labels is None else [labels[i] for i in order]
    return SystemModel.from_cm(E, 0.5 * (mu + mu.T), InteractionKind.DIPOLE,
                               None if labels is None else tuple(labels))


def random_dipole_system(rng: np.random.Generator, dim: int = 8, e_max: float = 1.0,
                         mu_scale: float = 0.1) -> SystemModel:
    """Random system (energies in hartree) for propagator cross-checks."""
    E = np.sort(rng.uniform(0.0, e_max, dim))
    M = rng.normal(size=(dim, dim)) * mu_scale
    return SystemModel(E, 0.5 * (M + M.T), InteractionKind.DIPOLE)


class Gate(enum.Enum):
    NOT = "NOT"
    CNOT = "CNOT"
    HADAMARD = "Hadamard"
    IDENTITY = "Identity"


_GATE_MATRICES = {
    # columns = images of |00>, |01>, |10>, |11>; second label is the active qubit
    Gate.IDENTITY: np.eye(4),
    Gate.NOT: np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], float),
    Gate.CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], float),
    Gate.HADAMARD: np.kron(np.eye(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2)),
}


def gate_matrix(gate) -> np.ndarray:
    """4x4 gate in the qubit basis (|00>, |01>, |10>, |11>)."""
    return _GATE_MATRICES[Gate(gate)].copy()


def gate_targets(gate, basis: QubitBasisMap, system: SystemModel) -> TargetSet:
    """Pairs ``(|b>, G|b>)`` for the four qubit basis states, embedded in ``system``."""
    G = gate_matrix(gate)
    embed = np.zeros((system.dimension, 4))
    for col, idx in enumerate(basis.indices):
        embed[idx, col] = 1.0
    initial = embed
    target = embed @ G
    return TargetSet(initial, target, basis.names)


def state_targets(system: SystemModel, pairs) -> TargetSet:
    """Targets from ``[(initial_index, target_index), ...]``."""
    ini = np.stack([system.basis_state(i) for i, _ in pairs], axis=1)
    tgt = np.stack([system.basis_state(j) for _, j in pairs], axis=1)
    return TargetSet(ini, tgt, tuple(f"{i}->{j}" for i, j in pairs))


def gaussian_guess(carrier_cm: float, amplitude: float, center_fs: float, fwhm_fs: float,
                   grid: TimeGrid, field_id: int = 1, phase: float = 0.0) -> ControlField:
    """``A exp(-4 ln2 (t-t0)^2 / fwhm^2) cos(omega (t-t0) + phase)``."""
    t0 = fs_to_au(center_fs)
    if not (0 <= t0 <= grid.T):
        raise ModelError("pulse centre outside the time grid")
    if carrier_cm >= grid.nyquist_cm:
        raise ModelError(f"carrier {carrier_cm} cm-1 above Nyquist {grid.nyquist_cm:.1f} cm-1")
    w = cm_to_au(carrier_cm)
    tau = fs_to_au(fwhm_fs)
    t = grid.t
    env = amplitude * np.exp(-4 * np.log(2) * (t - t0) ** 2 / tau**2)
    return ControlField(env * np.cos(w * (t - t0) + phase), carrier_cm, field_id)


def system_to_json(system: SystemModel, path=None) -> str:
    doc = {
        "kind": system.kind.value,
        "energies_cm": [float(x) for x in system.energies * HARTREE_CM],
        "coupling": [float(x) for x in system.coupling.ravel()],
        "dimension": system.dimension,
        "labels": None if system.labels is None else [list(l) if isinstance(l, tuple) else l
                                                      for l in system.labels],
    }
    text = json.dumps(doc, indent=1)
    if path is not None:
        Path(path).write_text(text)
    return text


def system_from_json(source) -> SystemModel:
    """Load a model written by :func:`system_to_json` (text, dict or path)."""
    if isinstance(source, dict):
        doc = source
    else:
        p = Path(source) if not str(source).lstrip().startswith("{") else None
        doc = json.loads(p.read_text() if p is not None else source)
    n = int(doc["dimension"])
    A = np.asarray(doc["coupling"], float).reshape(n, n)
    labels = doc.get("labels")
    return SystemModel(np.asarray(doc["energies_cm"], float) / HARTREE_CM, A,
                       InteractionKind(doc["kind"]),
                       None if labels is None else tuple(tuple(l) if isinstance(l, list) else l
                                                         for l in labels))
