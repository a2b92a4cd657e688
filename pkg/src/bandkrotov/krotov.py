"""Krotov iteration with hard spectral constraints on the control fields.

One iteration, for fields ``eps^n``:

1. propagate the targets backward and the initial states forward under
   ``eps^n``; the node-wise overlap sum predicts the unconstrained update
   ``gamma'_l`` of each field,
2. ``gamma_l`` = band-stop part of ``gamma'_l`` (Lagrange correction field),
3. immediate-feedback sweep per unfrozen field::

       eps_l(t_j) <- eps_l^n(t_j) + s(t_j) / (2 alpha0) * (C_l(t_j) - gamma_l(t_j))

   where ``C_l`` uses the forward states already propagated with the new
   field values and the stored backward states,
4. projection of the updated field onto its pass band.

With ``C_l = -2 sum_k Im[<Phi_k|Psi_k> <Psi_k| dH/d eps_l |Phi_k>]`` the
update ascends ``sum_k |<Psi_k(T)|Phi_k>|^2 - alpha0 int |eps - eps~|^2 / s``.
For the Raman coupling ``dH/d eps_1 = -alpha eps_2 / 2``.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .core import ControlField, InteractionKind, SystemModel, TargetSet, TimeGrid, YieldReport, \
    gate_yield, trapezoid
from .propagation import PropagatorConfig, _check_norm, make_propagator, step_prefactors
from .spectral import (ShapeFunction, SpectralFilter, apply_fourier_filter, complement_mask,
                       out_of_band_energy, out_of_band_fraction, project_onto_band)

log = logging.getLogger(__name__)


class KrotovError(RuntimeError):
    pass


class UpdateOrder(enum.Enum):
    EPS1_THEN_EPS2 = "eps1_then_eps2"
    EPS2_THEN_EPS1 = "eps2_then_eps1"


class Termination(enum.Enum):
    YIELD_TARGET = "yield_target"
    MAX_ITERS = "max_iters"
    STAGNATION = "stagnation"
    NON_MONOTONE = "non_monotone"


@dataclass(frozen=True)
class KrotovConfig:
    filters: tuple  # one SpectralFilter per field
    shape: ShapeFunction
    alpha0: float = 10.0
    max_iters: int = 100
    yield_target: float = 0.99
    freeze_field: Optional[int] = None
    update_order: UpdateOrder = UpdateOrder.EPS1_THEN_EPS2
    propagator: PropagatorConfig = PropagatorConfig()
    backward_storage: str = "full"  # or "checkpoint"
    checkpoint_every: int = 256
    channel_block: int = 0  # channels per propagation block, 0 = all
    threads: int = 1
    monotone_slack: float = 1e-9
    stagnation_window: int = 10
    stagnation_tol: float = 1e-7

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not (0 < self.yield_target <= 1):
            raise ValueError("yield_target must lie in (0, 1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.freeze_field not in (None, 1, 2):
            raise ValueError("freeze_field must be None, 1 or 2")
        if self.backward_storage not in ("full", "checkpoint"):
            raise ValueError("backward_storage must be 'full' or 'checkpoint'")
        object.__setattr__(self, "update_order", UpdateOrder(self.update_order))
        object.__setattr__(self, "filters", tuple(self.filters))


@dataclass(frozen=True)
class FunctionalTerms:
    objective: float
    energy_penalty: float
    filter_penalty: float

    @property
    def total(self) -> float:
        return self.objective - self.energy_penalty - self.filter_penalty


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    yield_sum_sq: float
    avg_fidelity: float
    phase_fidelity: float
    functional: FunctionalTerms
    out_of_band_pre: tuple  # per field, updated field before the band projection
    out_of_band_post: tuple  # per field, stored field
    monotonicity_residual: tuple
    field_energy: tuple
    monotone: bool = True


@dataclass
class OptimizationResult:
    final_fields: List[ControlField]
    records: List[IterationRecord]
    converged: bool
    termination_reason: Termination
    final_states: np.ndarray = field(repr=False, default=None)

    @property
    def yields(self) -> np.ndarray:
        return np.array([r.yield_sum_sq for r in self.records])


# --------------------------------------------------------------------------- helpers


def _overlap_sum(phi: np.ndarray, psi: np.ndarray, A: np.ndarray) -> float:
    """``sum_k Im[<phi_k|psi_k> <psi_k|A|phi_k>]`` for ``(dim, k)`` blocks."""
    ov = np.einsum("ik,ik->k", phi.conj(), psi)
    m = np.einsum("ik,ik->k", psi.conj(), A @ phi)
    return float(np.sum((ov * m).imag))


def gradient_factor(system: SystemModel, values: Sequence, which: int):
    """``-2 * (dH/d eps_which) / A`` evaluated at the given field values."""
    if system.kind is InteractionKind.RAMAN:
        return np.asarray(values[1] if which == 1 else values[0], float)
    return 2.0 * np.ones_like(np.asarray(values[0], float))


def _blocks(k: int, size: int) -> list:
    size = k if size <= 0 else size
    return [slice(i, min(i + size, k)) for i in range(0, k, size)]


class BackwardStore:
    """Backward-propagated targets ``Phi_k(t_j)`` served in forward node order.

    ``full`` keeps every node; ``checkpoint`` keeps every M-th node and
    regenerates each segment on demand, replaying exactly the same steps.
    """

    def __init__(self, system, fields, phi_T, grid, cfg: PropagatorConfig,
                 mode: str = "full", every: int = 256):
        self.grid = grid
        self.mode = mode
        self.every = max(1, int(every))
        self._p = step_prefactors(system, fields, grid)
        self._prop = make_propagator(system, self._p, -grid.dt, cfg)
        n = grid.n_steps
        phi = np.array(phi_T, complex)
        if mode == "full":
            self._data = np.empty((n + 1,) + phi.shape, complex)
            self._data[n] = phi
            for j in range(n, 0, -1):
                phi = self._prop.step(phi, self._p[j - 1])
                self._data[j - 1] = phi
        else:
            self._cp = {n: phi}
            for j in range(n, 0, -1):
                phi = self._prop.step(phi, self._p[j - 1])
                if (j - 1) % self.every == 0:
                    self._cp[j - 1] = phi
            self._replay = make_propagator(system, self._p, -grid.dt, cfg)
        _check_norm(phi_T, phi, "in backward propagation")

    def __iter__(self) -> Iterator[np.ndarray]:
        n = self.grid.n_steps
        if self.mode == "full":
            yield from self._data
            return
        for a in range(0, n, self.every):
            b = min(a + self.every, n)
            phi = self._cp[b]
            seg = [None] * (b - a)
            for j in range(b, a, -1):
                phi = self._replay.step(phi, self._p[j - 1])
                seg[j - 1 - a] = phi
            yield from seg
        yield self._cp[n]


class _Combined:
    """Lock-step iteration over per-block stores, concatenating channels."""

    def __init__(self, stores):
        self.stores = stores

    def __iter__(self):
        if len(self.stores) == 1:
            yield from self.stores[0]
            return
        for parts in zip(*self.stores):
            yield np.concatenate(parts, axis=1)


def _map(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _backward(system, fields, targets, grid, cfg: KrotovConfig):
    blocks = _blocks(targets.k, cfg.channel_block)

    def work(sl):
        return BackwardStore(system, fields, targets.target[:, sl], grid, cfg.propagator,
                             cfg.backward_storage, cfg.checkpoint_every)

    return _Combined(_map(work, blocks, cfg.threads))


def _prediction(system, fields, targets, grid, cfg: KrotovConfig):
    """Backward and forward passes under unchanged fields.

    Returns the backward store, the node-wise overlap sum and the forward
    states at ``T``.
    """
    blocks = _blocks(targets.k, cfg.channel_block)
    p = step_prefactors(system, fields, grid)
    A = system.coupling

    def work(sl):
        store = BackwardStore(system, fields, targets.target[:, sl], grid, cfg.propagator,
                              cfg.backward_storage, cfg.checkpoint_every)
        prop = make_propagator(system, p, grid.dt, cfg.propagator)
        psi0 = np.array(targets.initial[:, sl])
        psi = psi0
        S = np.empty(grid.n_nodes)
        for j, phi in enumerate(store):
            S[j] = _overlap_sum(phi, psi, A)
            if j < grid.n_steps:
                psi = prop.step(psi, p[j])
        _check_norm(psi0, psi, "in forward propagation")
        return store, S, psi

    out = _map(work, blocks, cfg.threads)
    S = out[0][1].copy()
    for _, Sb, _ in out[1:]:
        S += Sb
    psiT = np.concatenate([o[2] for o in out], axis=1)
    return _Combined([o[0] for o in out]), S, psiT


# --------------------------------------------------------------------------- operations


def compute_gamma_prime(system: SystemModel, fields: Sequence[ControlField], targets: TargetSet,
                        grid: TimeGrid, which: int,
                        cfg: PropagatorConfig = PropagatorConfig()) -> np.ndarray:
    """Predicted unconstrained update ``gamma'_which(t)`` under the given fields."""
    kc = KrotovConfig(filters=(), shape=None, propagator=cfg)
    _, S, _ = _prediction(system, fields, targets, grid, kc)
    return gradient_factor(system, [f.samples for f in fields], which) * S


def gamma_prime_from_states(system: SystemModel, fields, phi_t: np.ndarray, psi_t: np.ndarray,
                            which: int) -> np.ndarray:
    """``gamma'`` from stored trajectories of shape ``(n_nodes, dim, k)``."""
    if phi_t.shape != psi_t.shape:
        raise ValueError("trajectory shapes differ")
    if phi_t.shape[0] != np.asarray(fields[0].samples).size:
        raise ValueError("trajectories do not match the field grid")
    S = np.array([_overlap_sum(a, b, system.coupling) for a, b in zip(phi_t, psi_t)])
    return gradient_factor(system, [f.samples for f in fields], which) * S


def compute_gamma(gamma_prime: np.ndarray, band_stop: SpectralFilter) -> np.ndarray:
    """Correction field: the part of ``gamma'`` passed by the band-stop filter."""
    if not np.any(band_stop.mask):
        return np.zeros_like(np.asarray(gamma_prime, float))
    return apply_fourier_filter(np.asarray(gamma_prime, float), band_stop)


def forward_update(system: SystemModel, fields: Sequence[ControlField], which: int,
                   gamma: np.ndarray, backward, targets: TargetSet, cfg: KrotovConfig,
                   grid: TimeGrid):
    """Immediate-feedback sweep updating field ``which`` (1-based).

    ``backward`` iterates the backward states ``Phi(t_j)`` (``(dim, k)``) in
    node order. Returns ``(new_samples, C, psi_T)`` with ``C`` the node-wise
    sum of the feedback terms.
    """
    l = which - 1
    old = fields[l].samples
    s = cfg.shape.samples
    A = system.coupling
    others = [f.samples for f in fields]
    factor = gradient_factor(system, others, which)
    if system.kind is InteractionKind.RAMAN:
        other_mid = fields[1 - l].midpoints()
    p_old = step_prefactors(system, fields, grid)
    prop = make_propagator(system, p_old, grid.dt, cfg.propagator)
    eps = old.copy()
    C = np.empty(grid.n_nodes)
    psi0 = np.array(targets.initial)
    psi = psi0
    scale = 1.0 / (2.0 * cfg.alpha0)
    n = grid.n_steps
    for j, phi in enumerate(backward):
        C[j] = factor[j] * _overlap_sum(phi, psi, A)
        eps[j] = old[j] + s[j] * scale * (C[j] - gamma[j])
        if not np.isfinite(eps[j]):
            raise KrotovError(f"non-finite field update at node {j}; alpha0 is probably too small")
        if j < n:
            mid = 0.5 * (eps[j] + old[j + 1])
            pj = -0.5 * mid * other_mid[j] if system.kind is InteractionKind.RAMAN else -mid
            psi = prop.step(psi, pj)
    _check_norm(psi0, psi, "in the update sweep")
    return eps, C, psi


def post_filter(fields: Sequence[ControlField], filters: Sequence[SpectralFilter]) -> list:
    """Project each field onto its pass band."""
    out = []
    for f, flt in zip(fields, filters):
        out.append(f if flt.is_all_pass else project_onto_band(f, flt))
    return out


def monotonicity_residual(delta_eps: np.ndarray, gamma: np.ndarray, shape: ShapeFunction,
                          alpha0: float, dt: float) -> float:
    """``int [(alpha0/s) d_eps^2 + gamma d_eps] dt`` (trapezoidal); >= 0 for an exact update."""
    s = shape.samples
    d = np.asarray(delta_eps, float)
    return trapezoid(alpha0 / s * d**2 + np.asarray(gamma) * d, dt)


def evaluate_functional(final_states, targets: TargetSet, fields: Sequence[ControlField],
                        reference_fields: Sequence[ControlField], shape: ShapeFunction,
                        alpha0: float, filters: Sequence[SpectralFilter], grid: TimeGrid) -> FunctionalTerms:
    """Objective, field-change penalty and out-of-band energy of a set of fields."""
    rep = gate_yield(final_states, targets)
    s = shape.samples
    pen = sum(alpha0 * trapezoid((f.samples - r.samples) ** 2 / s, grid.dt)
              for f, r in zip(fields, reference_fields))
    filt = sum(out_of_band_energy(f, flt) for f, flt in zip(fields, filters))
    return FunctionalTerms(rep.sum_sq, float(pen), float(filt))


# --------------------------------------------------------------------------- driver


def _safe_oob(f, flt) -> float:
    try:
        return out_of_band_fraction(f, flt)
    except ValueError:
        return 0.0


def _sweep_order(cfg: KrotovConfig, n_fields: int) -> list:
    order = [1, 2] if cfg.update_order is UpdateOrder.EPS1_THEN_EPS2 else [2, 1]
    order = [l for l in order if l <= n_fields]
    return [l for l in order if l != cfg.freeze_field]


def iterate(system: SystemModel, targets: TargetSet, guess: Sequence[ControlField], grid: TimeGrid,
            cfg: KrotovConfig, callback: Optional[Callable] = None) -> OptimizationResult:
    """Run the constrained Krotov optimization until a stop criterion fires.

    The yield trace is checked for monotonicity with slack
    ``monotone_slack * k``; a violation ends the run with
    :attr:`Termination.NON_MONOTONE`. ``callback(record, fields)`` is called
    after every evaluated iteration.
    """
    nf = system.kind.n_fields
    if len(guess) != nf or len(cfg.filters) != nf:
        raise ValueError(f"{system.kind.value} system needs {nf} field(s) and filter(s)")
    if cfg.freeze_field is not None and cfg.freeze_field > nf:
        raise ValueError("frozen field does not exist")
    for g in guess:
        g.check_grid(grid)
    if cfg.shape.samples.size != grid.n_nodes:
        raise ValueError("shape function does not match the grid")
    k = targets.k
    sweeps = _sweep_order(cfg, nf)
    with threadpool_limits(limits=1):
        raw = list(guess)
        pre_oob = tuple(_safe_oob(f, flt) for f, flt in zip(raw, cfg.filters))
        fields = [g if (i + 1) == cfg.freeze_field else pf
                  for i, (g, pf) in enumerate(zip(raw, post_filter(raw, cfg.filters)))]
        reference = list(fields)
        residuals = tuple(0.0 for _ in range(nf))
        records: list = []
        reason = Termination.MAX_ITERS
        psiT = None
        for it in range(cfg.max_iters + 1):
            store, S, psiT = _prediction(system, fields, targets, grid, cfg)
            rep: YieldReport = gate_yield(psiT, targets, norm_tol=1e-6)
            terms = evaluate_functional(psiT, targets, fields, reference, cfg.shape, cfg.alpha0,
                                        cfg.filters, grid)
            monotone = not records or rep.sum_sq >= records[-1].yield_sum_sq - cfg.monotone_slack * k
            rec = IterationRecord(
                it, rep.sum_sq, rep.avg_fidelity, rep.phase_fidelity, terms, pre_oob,
                tuple(_safe_oob(f, flt) for f, flt in zip(fields, cfg.filters)), residuals,
                tuple(f.energy(grid) for f in fields), monotone)
            records.append(rec)
            log.info("iter %d  yield %.10f  F %.8f", it, rep.sum_sq, rep.avg_fidelity)
            if callback is not None:
                callback(rec, fields)
            if not monotone:
                reason = Termination.NON_MONOTONE
                log.error("yield decreased at iteration %d", it)
                break
            if rep.avg_fidelity >= cfg.yield_target:
                reason = Termination.YIELD_TARGET
                break
            if it == cfg.max_iters:
                reason = Termination.MAX_ITERS
                break
            w = cfg.stagnation_window
            if it >= w:
                past = records[-1 - w].yield_sum_sq
                if (rep.sum_sq - past) < cfg.stagnation_tol * max(abs(rep.sum_sq), 1e-300):
                    reason = Termination.STAGNATION
                    break
            if not sweeps:
                reason = Termination.STAGNATION
                break

            values = [f.samples for f in fields]
            new = list(fields)
            pre = list(pre_oob)
            res = [0.0] * nf
            for n_sweep, l in enumerate(sweeps):
                flt = cfg.filters[l - 1]
                gamma_p = gradient_factor(system, values, l) * S
                gamma = compute_gamma(gamma_p, complement_mask(flt))
                backward = store if n_sweep == 0 else _backward(system, new, targets, grid, cfg)
                eps, C, _ = forward_update(system, new, l, gamma, backward, targets, cfg, grid)
                updated = new[l - 1].with_samples(eps)
                res[l - 1] = monotonicity_residual(eps - new[l - 1].samples, gamma, cfg.shape,
                                                   cfg.alpha0, grid.dt)
                pre[l - 1] = _safe_oob(updated, flt)
                new[l - 1] = post_filter([updated], [flt])[0]
            for i in range(nf):
                if (i + 1) not in sweeps:
                    pre[i] = records[-1].out_of_band_post[i]
            reference = fields
            fields = new
            pre_oob = tuple(pre)
            residuals = tuple(res)
    converged = reason is Termination.YIELD_TARGET
    return OptimizationResult(fields, records, converged, reason, psiT)
