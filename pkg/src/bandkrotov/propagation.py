"""Time evolution under ``H(t) = H0 + p(t) * A`` in the eigenstate basis.

The production path is a Chebyshev expansion of the short-time propagator
with a piecewise-constant Hamiltonian per step (fields sampled at step
midpoints). :func:`reference_propagate` performs the same stepping with
exact eigendecomposition exponentials and only exists to check the former.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import jv

from .core import ControlField, InteractionKind, SystemModel, TimeGrid

MAX_CHEB_ORDER = 4000


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagatorConfig:
    cheb_tolerance: float = 1e-12
    spectral_margin: float = 1.1

    def __post_init__(self):
        if not (0 < self.cheb_tolerance <= 1e-6):
            raise ValueError("cheb_tolerance must lie in (0, 1e-6]")
        if self.spectral_margin < 1:
            raise ValueError("spectral_margin must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """States recorded at grid nodes ``indices``.

    ``states`` has shape ``(n_records, dim)`` for a single initial state and
    ``(n_records, dim, k)`` for a batch.
    """

    states: np.ndarray
    indices: np.ndarray
    grid: TimeGrid

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return self.indices * self.grid.dt


def raman_coupling(eps1_t, eps2_t, system: SystemModel):
    """Scalar prefactor multiplying the polarizability, ``-eps1 * eps2 / 2``."""
    if system.kind is not InteractionKind.RAMAN:
        raise ValueError("raman_coupling requires a Raman system")
    return -0.5 * eps1_t * eps2_t


def dipole_coupling(eps_t, system: SystemModel):
    if system.kind is not InteractionKind.DIPOLE:
        raise ValueError("dipole_coupling requires a dipole system")
    return -eps_t


def coupling_prefactor(system: SystemModel, values: Sequence) -> np.ndarray:
    """Prefactor ``p`` of the coupling operator for given field values."""
    if len(values) != system.kind.n_fields:
        raise ValueError(
            f"{system.kind.value} system needs {system.kind.n_fields} field(s), got {len(values)}")
    if system.kind is InteractionKind.RAMAN:
        return raman_coupling(values[0], values[1], system)
    return dipole_coupling(np.asarray(values[0]), system)


def step_prefactors(system: SystemModel, fields: Sequence[ControlField], grid: TimeGrid) -> np.ndarray:
    """Midpoint prefactors ``p(t_j + dt/2)`` for the ``n_steps`` steps."""
    for f in fields:
        f.check_grid(grid)
    return coupling_prefactor(system, [f.midpoints() for f in fields])


def gershgorin_bounds(H: np.ndarray) -> tuple[float, float]:
    d = np.real(np.diag(H))
    r = np.sum(np.abs(H), axis=1) - np.abs(np.diag(H))
    return float(np.min(d - r)), float(np.max(d + r))


def _cheb_coefficients(x: float, tol: float) -> np.ndarray:
    """``(2 - delta_n0) (-i)^n J_n(x)`` truncated once ``|J_n| < tol`` past ``|x|``."""
    ax = abs(x)
    n_try = int(ax + 10 * ax ** (1 / 3) + 20)
    while True:
        if n_try > MAX_CHEB_ORDER:
            raise PropagationError(
                f"Chebyshev order exceeds {MAX_CHEB_ORDER}; time step too large for the spectral range")
        n = np.arange(n_try + 1)
        J = jv(n, x)
        tail = np.nonzero((np.abs(J) >= tol) | (n <= ax))[0]
        last = int(tail[-1]) + 1 if tail.size else 1
        if last < n_try:
            break
        n_try *= 2
    J = J[: last + 1]
    a = 2.0 * J * (-1j) ** np.arange(J.size)
    a[0] = J[0]
    return a


class ChebyshevPropagator:
    """Short-time propagator ``exp(-i H dt)`` for ``H = diag(E) + p * A``.

    Spectral bounds come from the exact diagonal range plus
    ``p_max * ||A||_inf``, widened by ``spectral_margin``. A step with
    ``|p| > p_max`` widens the bounds and recomputes the coefficients.
    """

    def __init__(self, energies, coupling, dt: float, p_max: float, cfg: PropagatorConfig):
        self.E = np.asarray(energies, float)
        self.A = np.asarray(coupling, float)
        self.dt = float(dt)
        self.cfg = cfg
        self._a_norm = float(np.max(np.sum(np.abs(self.A), axis=1), initial=0.0))
        self._setup(abs(p_max))

    def _setup(self, p_max: float) -> None:
        self.p_max = p_max
        e_lo = float(np.min(self.E)) - p_max * self._a_norm
        e_hi = float(np.max(self.E)) + p_max * self._a_norm
        if not (np.isfinite(e_lo) and np.isfinite(e_hi)) or e_hi < e_lo:
            raise PropagationError("invalid spectral range estimate")
        self.center = 0.5 * (e_hi + e_lo)
        self.radius = 0.5 * (e_hi - e_lo) * self.cfg.spectral_margin
        self.phase = np.exp(-1j * self.center * self.dt)
        if self.radius <= 0:
            self.coeffs = None  # H is a multiple of the identity
            return
        self.coeffs = _cheb_coefficients(self.radius * self.dt, self.cfg.cheb_tolerance)
        self._Es = (self.E - self.center) / self.radius
        self._As = self.A / self.radius
        self._D2 = np.diag(2.0 * self._Es)

    @property
    def order(self) -> int:
        return 0 if self.coeffs is None else len(self.coeffs)

    def _matrix(self, p: float) -> np.ndarray:
        """``2 * Hs`` with ``Hs = (H - center) / radius``."""
        return self._D2 + (2.0 * p) * self._As

    def step(self, psi: np.ndarray, p: float) -> np.ndarray:
        if abs(p) > self.p_max:
            self._setup(abs(p) * 1.25)
        if self.coeffs is None:
            return self.phase * psi
        psi = np.ascontiguousarray(psi, dtype=complex)
        shape = psi.shape
        d = shape[0]
        M2 = self._matrix(p)
        a = self.coeffs
        # real matrix times complex states through float views
        prev = psi.view(float).reshape(d, -1)
        cur = 0.5 * (M2 @ prev)
        out = a[0] * psi + a[1] * cur.view(complex).reshape(shape)
        for n in range(2, a.size):
            nxt = M2 @ cur
            nxt -= prev
            out += a[n] * nxt.view(complex).reshape(shape)
            prev, cur = cur, nxt
        out *= self.phase
        return out


def chebyshev_step(H: np.ndarray, psi: np.ndarray, dt: float, cfg: PropagatorConfig = PropagatorConfig()):
    """``exp(-i H dt) psi`` for a dense Hermitian ``H`` (Gershgorin bounds)."""
    H = np.asarray(H)
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(H))):
        raise ValueError("H must be Hermitian")
    lo, hi = gershgorin_bounds(H)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise PropagationError("invalid spectral range estimate")
    center = 0.5 * (hi + lo)
    radius = 0.5 * (hi - lo) * cfg.spectral_margin
    psi = np.asarray(psi, complex)
    phase = np.exp(-1j * center * dt)
    if radius == 0:
        return phase * psi
    a = _cheb_coefficients(radius * dt, cfg.cheb_tolerance)
    Hs = (H - center * np.eye(H.shape[0])) / radius
    phi_prev, phi = psi, Hs @ psi
    out = a[0] * phi_prev + a[1] * phi
    for n in range(2, a.size):
        phi_next = 2.0 * (Hs @ phi) - phi_prev
        out += a[n] * phi_next
        phi_prev, phi = phi, phi_next
    return phase * out


def make_propagator(system: SystemModel, prefactors: np.ndarray, dt: float,
                    cfg: PropagatorConfig) -> ChebyshevPropagator:
    p_max = float(np.max(np.abs(prefactors), initial=0.0))
    return ChebyshevPropagator(system.energies, system.coupling, dt, p_max, cfg)


def _record_indices(n_steps: int, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValueError("record stride must be >= 1")
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def _check_norm(psi0, psi, where=""):
    n0 = np.linalg.norm(psi0, axis=0)
    n1 = np.linalg.norm(psi, axis=0)
    drift = np.max(np.abs(n1 - n0))
    if drift > 1e-6:
        raise PropagationError(f"norm drift {drift:.2e} {where}; check dt / Chebyshev tolerance")


def propagate(system: SystemModel, fields: Sequence[ControlField], psi0: np.ndarray,
              grid: TimeGrid, cfg: PropagatorConfig = PropagatorConfig(), stride: int = 1,
              backward: bool = False) -> Trajectory:
    """Propagate ``psi0`` (``(dim,)`` or ``(dim, k)``) across the grid.

    With ``backward=True`` ``psi0`` is the state at ``T`` and the evolution
    runs to ``t = 0``; recorded states are still returned in node order.
    """
    p = step_prefactors(system, fields, grid)
    psi = np.array(psi0, dtype=complex)
    if psi.shape[0] != system.dimension:
        raise ValueError("state dimension does not match the system")
    dt = -grid.dt if backward else grid.dt
    prop = make_propagator(system, p, dt, cfg)
    idx = _record_indices(grid.n_steps, stride)
    keep = np.zeros(grid.n_steps + 1, bool)
    keep[idx] = True
    out = np.empty((idx.size,) + psi.shape, complex)
    order = range(grid.n_steps, 0, -1) if backward else range(grid.n_steps)
    start = grid.n_steps if backward else 0
    pos = {j: i for i, j in enumerate(idx)}
    out[pos[start]] = psi
    for j in order:
        if backward:
            psi = prop.step(psi, p[j - 1])
            node = j - 1
        else:
            psi = prop.step(psi, p[j])
            node = j + 1
        if keep[node]:
            out[pos[node]] = psi
    _check_norm(psi0, psi, "during propagation")
    return Trajectory(out, idx, grid)


REFERENCE_MAX_DIM = 64


def reference_step(H: np.ndarray, psi: np.ndarray, dt: float) -> np.ndarray:
    """Exact ``exp(-i H dt) psi`` via eigendecomposition."""
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * dt)) @ V.conj().T
    return U @ psi


def reference_propagate(system: SystemModel, fields: Sequence[ControlField], psi0: np.ndarray,
                        grid: TimeGrid, stride: int = 1, backward: bool = False) -> Trajectory:
    """Same stepping as :func:`propagate` with dense exact exponentials."""
    if system.dimension > REFERENCE_MAX_DIM:
        raise ValueError(f"reference propagator limited to dimension {REFERENCE_MAX_DIM}")
    p = step_prefactors(system, fields, grid)
    H0 = np.diag(system.energies)
    psi = np.array(psi0, dtype=complex)
    dt = -grid.dt if backward else grid.dt
    idx = _record_indices(grid.n_steps, stride)
    out = {}
    nodes = range(grid.n_steps, 0, -1) if backward else range(grid.n_steps)
    out[grid.n_steps if backward else 0] = psi
    for j in nodes:
        pj = p[j - 1] if backward else p[j]
        psi = reference_step(H0 + pj * system.coupling, psi, dt)
        out[j - 1 if backward else j + 1] = psi
    states = np.stack([out[i] for i in idx])
    return Trajectory(states, idx, grid)
