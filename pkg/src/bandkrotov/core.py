"""Shared types: units, time grids, system models, fields, targets and yields.

Everything inside the package runs in atomic units (hbar = 1). Wavenumbers,
femtoseconds and nanometres only appear at configuration and report
boundaries, see :func:`convert_units`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

HARTREE_CM = 219474.6313632
AU_TIME_FS = 0.02418884254

StateVector = np.ndarray  # complex amplitudes, length = system dimension

_UNITS = {"cm-1", "hartree", "fs", "au_time", "nm"}
_UNIT_ALIASES = {
    "cm^-1": "cm-1",
    "cm⁻¹": "cm-1",
    "wavenumber": "cm-1",
    "eh": "hartree",
    "a.u. time": "au_time",
    "au": "au_time",
}


class UnitError(ValueError):
    pass


def _norm_unit(unit: str) -> str:
    u = unit.strip().lower()
    u = _UNIT_ALIASES.get(u, u)
    if u not in _UNITS:
        raise UnitError(f"unsupported unit {unit!r}")
    return u


def convert_units(value: float, src: str, dst: str) -> float:
    """Convert between cm-1, hartree, nm (energy-like) and fs, au_time.

    Wavelength conversion uses ``nu[cm-1] = 1e7 / lambda[nm]``.
    """
    a, b = _norm_unit(src), _norm_unit(dst)
    if a == b:
        return float(value)
    energy = {"cm-1", "hartree", "nm"}
    time = {"fs", "au_time"}
    if a in time and b in time:
        return value * AU_TIME_FS if a == "au_time" else value / AU_TIME_FS
    if a in energy and b in energy:
        # pivot through cm-1
        if a == "hartree":
            cm = value * HARTREE_CM
        elif a == "nm":
            cm = 1e7 / value
        else:
            cm = float(value)
        if b == "hartree":
            return cm / HARTREE_CM
        if b == "nm":
            return 1e7 / cm
        return cm
    raise UnitError(f"cannot convert {src} to {dst}")


def cm_to_au(nu_cm):
    """Wavenumber (cm-1) to angular frequency / energy in hartree."""
    return nu_cm / HARTREE_CM


def fs_to_au(t_fs):
    return t_fs / AU_TIME_FS


def trapezoid(y, dt: float) -> float:
    """Trapezoidal integral of node samples on a uniform grid."""
    y = np.asarray(y)
    return float(dt * (np.sum(y) - 0.5 * (y[0] + y[-1])))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``n_steps + 1`` nodes ``t_j = j * dt``."""

    n_steps: int
    dt: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError("n_steps must be an integer >= 2")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError("dt must be positive")

    @classmethod
    def from_duration(cls, T: float, dt: float) -> "TimeGrid":
        """Grid covering ``[0, T]`` with step at most ``dt`` (atomic units)."""
        n = int(np.ceil(T / dt - 1e-9))
        return cls(n, T / n)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dt

    @property
    def freqs_cm(self) -> np.ndarray:
        """FFT bin frequencies of a node-sampled signal, in cm-1 (signed)."""
        return np.fft.fftfreq(self.n_nodes, self.dt) * 2 * np.pi * HARTREE_CM

    @property
    def nyquist_cm(self) -> float:
        return np.pi / self.dt * HARTREE_CM

    @property
    def bin_width_cm(self) -> float:
        return 2 * np.pi * HARTREE_CM / (self.n_nodes * self.dt)

    def max_dt_for(self, nu_max_cm: float) -> float:
        """Largest step resolving ``nu_max_cm`` with 20 samples per period."""
        f = nu_max_cm / (2 * np.pi * HARTREE_CM)
        return 1.0 / (20.0 * f)


class InteractionKind(enum.Enum):
    RAMAN = "raman"
    DIPOLE = "dipole"

    @property
    def n_fields(self) -> int:
        return 2 if self is InteractionKind.RAMAN else 1


@dataclass(frozen=True)
class SystemModel:
    """Eigenstate-representation model: ``H(t) = diag(E) + p(t) * coupling``.

    ``energies`` are stored in hartree. ``coupling`` is the polarizability
    for Raman systems and the dipole operator for dipole systems.
    """

    energies: np.ndarray
    coupling: np.ndarray
    kind: InteractionKind
    labels: Optional[tuple] = None

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float)
        A = np.asarray(self.coupling, dtype=float)
        if E.ndim != 1 or A.shape != (E.size, E.size):
            raise ValueError("coupling must be a dim x dim matrix matching energies")
        if not np.all(np.isfinite(E)) or not np.all(np.isfinite(A)):
            raise ValueError("non-finite system data")
        if np.any(np.diff(E) < 0):
            raise ValueError("energies must be sorted non-decreasing")
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-14 * max(1.0, np.max(np.abs(A))):
            raise ValueError("coupling operator must be symmetric")
        E.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "energies", E)
        object.__setattr__(self, "coupling", A)
        object.__setattr__(self, "kind", InteractionKind(self.kind))
        if self.labels is not None:
            if len(self.labels) != E.size:
                raise ValueError("one label per state required")
            object.__setattr__(self, "labels", tuple(tuple(x) if isinstance(x, list) else x
                                                     for x in self.labels))

    @classmethod
    def from_cm(cls, energies_cm, coupling, kind, labels=None) -> "SystemModel":
        return cls(np.asarray(energies_cm, float) / HARTREE_CM, coupling, kind, labels)

    @property
    def dimension(self) -> int:
        return self.energies.size

    @property
    def energies_cm(self) -> np.ndarray:
        return self.energies * HARTREE_CM

    def basis_state(self, index: int) -> StateVector:
        psi = np.zeros(self.dimension, complex)
        psi[index] = 1.0
        return psi


@dataclass(frozen=True)
class ControlField:
    """Real field sampled at the ``n_steps + 1`` nodes of a grid."""

    samples: np.ndarray
    carrier_cm: float = 0.0
    id: int = 1

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1:
            raise ValueError("field samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError("field contains non-finite samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def check_grid(self, grid: TimeGrid) -> None:
        if self.samples.size != grid.n_nodes:
            raise ValueError(
                f"field {self.id} has {self.samples.size} samples, grid has {grid.n_nodes} nodes")

    def with_samples(self, samples) -> "ControlField":
        return ControlField(samples, self.carrier_cm, self.id)

    def midpoints(self) -> np.ndarray:
        s = self.samples
        return 0.5 * (s[:-1] + s[1:])

    def energy(self, grid: TimeGrid) -> float:
        """Fluence-like integral of the squared field (trapezoidal)."""
        return trapezoid(self.samples**2, grid.dt)


@dataclass(frozen=True)
class TargetSet:
    """``k`` (initial, target) pairs, weighted ``1/k`` in the averaged yields."""

    initial: np.ndarray  # shape (dim, k)
    target: np.ndarray  # shape (dim, k)
    names: tuple = field(default=())

    def __post_init__(self):
        I = np.array(self.initial, dtype=complex)
        F = np.array(self.target, dtype=complex)
        if I.ndim == 1:
            I, F = I[:, None], F[:, None]
        if I.shape != F.shape:
            raise ValueError("initial and target states must pair up")
        eye = np.eye(I.shape[1])
        for name, M in (("initial", I), ("target", F)):
            if np.max(np.abs(M.conj().T @ M - eye)) > 1e-10:
                raise ValueError(f"{name} states are not orthonormal")
        I.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "initial", I)
        object.__setattr__(self, "target", F)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple], names=()) -> "TargetSet":
        ini = np.stack([np.asarray(a, complex) for a, _ in pairs], axis=1)
        tgt = np.stack([np.asarray(b, complex) for _, b in pairs], axis=1)
        return cls(ini, tgt, tuple(names))

    @property
    def k(self) -> int:
        return self.initial.shape[1]

    @property
    def dimension(self) -> int:
        return self.initial.shape[0]

    @property
    def pairs(self):
        return [(self.initial[:, i], self.target[:, i]) for i in range(self.k)]


@dataclass(frozen=True)
class YieldReport:
    sum_sq: float
    avg_fidelity: float
    phase_fidelity: float
    overlaps: np.ndarray


def gate_yield(final_states, targets: TargetSet, norm_tol: float = 1e-8) -> YieldReport:
    """Phase-insensitive and phase-sensitive gate yields.

    ``final_states`` is either a ``(dim, k)`` array or a list of ``k`` vectors.
    """
    psi = np.asarray(final_states, dtype=complex)
    if psi.ndim == 2 and psi.shape[0] != targets.dimension and psi.shape[1] == targets.dimension:
        psi = psi.T  # list of vectors
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.shape != targets.target.shape:
        raise ValueError(f"final states {psi.shape} do not match targets {targets.target.shape}")
    norms = np.linalg.norm(psi, axis=0)
    if np.max(np.abs(norms - 1.0)) > norm_tol:
        raise ValueError("final states are not normalized")
    tau = np.einsum("ik,ik->k", targets.target.conj(), psi)
    k = targets.k
    sum_sq = float(np.sum(np.abs(tau) ** 2))
    phase = float(np.abs(np.sum(tau) / k) ** 2)
    return YieldReport(sum_sq, sum_sq / k, phase, tau)
