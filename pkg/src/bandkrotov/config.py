"""Run configuration: YAML schema, profiles, validation and problem assembly.

A config file is a mapping with a ``schema_version`` and the run sections
(``system``, ``targets``, ``grid``, ``fields``, ``filters``, ``shape``,
``krotov``, ``propagator``, ``output``). An optional ``profiles`` mapping holds
partial overrides keyed by ``full``, ``desk`` and ``ci``; the selected one is
deep-merged over the base before validation. Environment variables with the
``BANDKROTOV_`` prefix override a few top-level settings, and CLI flags
override both.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .core import AU_TIME_FS, SystemModel, TargetSet, TimeGrid, fs_to_au
from .krotov import KrotovConfig, UpdateOrder
from .models import (Gate, ModelError, QubitBasisMap, TwoModeParams, build_nlevel_dipole,
                     build_two_mode_raman_system, gate_targets, gaussian_guess, qubit_transitions,
                     state_targets, system_from_json)
from .propagation import PropagatorConfig
from .spectral import FilterError, all_pass, band_pass_mask, shape_function

SCHEMA_VERSION = 1
PROFILES = ("full", "desk", "ci")
ENV_PREFIX = "BANDKROTOV_"

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 64)."""


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace."""
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def env_overrides(environ=None) -> dict:
    """Settings taken from ``BANDKROTOV_{PROFILE,OUTPUT_DIR,THREADS,SEED}``."""
    env = os.environ if environ is None else environ
    out = {}
    if env.get(ENV_PREFIX + "PROFILE"):
        out["profile"] = env[ENV_PREFIX + "PROFILE"]
    if env.get(ENV_PREFIX + "OUTPUT_DIR"):
        out["output_dir"] = env[ENV_PREFIX + "OUTPUT_DIR"]
    for key in ("THREADS", "SEED"):
        if env.get(ENV_PREFIX + key):
            try:
                out[key.lower()] = int(env[ENV_PREFIX + key])
            except ValueError as exc:
                raise ConfigError(f"{ENV_PREFIX}{key} must be an integer") from exc
    return out


@dataclass
class Problem:
    """Everything :func:`bandkrotov.krotov.iterate` needs, plus reporting context."""

    system: SystemModel
    basis: Optional[QubitBasisMap]
    targets: TargetSet
    grid: TimeGrid
    guess: list
    krotov: KrotovConfig
    filters: tuple


@dataclass
class RunConfig:
    raw: dict
    profile: Optional[str]
    output_dir: Path
    threads: int
    seed: int
    source: Optional[Path] = None

    def section(self, name: str) -> dict:
        return self.raw.get(name) or {}

    @property
    def record_stride(self) -> int:
        return int(self.section("output").get("record_stride", 1))

    @property
    def checkpoint_interval(self) -> int:
        return int(self.section("output").get("checkpoint_interval", 0))

    def resolved(self) -> dict:
        """The merged document as run, including CLI/env settings."""
        doc = copy.deepcopy(self.raw)
        doc["profile"] = self.profile
        doc["threads"] = self.threads
        doc["seed"] = self.seed
        return doc

    def hash(self) -> str:
        """SHA-256 over the resolved config, independent of thread count and output path."""
        doc = self.resolved()
        doc.pop("threads", None)
        doc.get("output", {}).pop("dir", None)
        return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()

    def build(self) -> Problem:
        return build_problem(self)


def load_config(path=None, text: Optional[str] = None, profile: Optional[str] = None,
                output_dir=None, threads: Optional[int] = None, seed: Optional[int] = None,
                environ=None) -> RunConfig:
    """Read, merge and validate a config. Raises :class:`ConfigError`.

    Precedence for profile/output/threads/seed: explicit arguments, then
    environment, then the file.
    """
    if text is None:
        p = Path(path)
        text = p.read_text()  # FileNotFoundError propagates (exit 66)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    env = env_overrides(environ)
    prof = profile or env.get("profile") or doc.get("profile")
    profiles = doc.pop("profiles", None) or {}
    if prof is not None:
        if prof not in PROFILES:
            raise ConfigError(f"unknown profile {prof!r}; choose from {PROFILES}")
        if prof in profiles:
            doc = deep_merge(doc, profiles[prof] or {})
    doc.pop("profile", None)
    out = output_dir or env.get("output_dir") or doc.get("output", {}).get("dir") or "runs/default"
    thr = threads if threads is not None else env.get("threads", doc.get("threads", 1))
    sd = seed if seed is not None else env.get("seed", doc.get("seed", 0))
    if int(thr) < 1:
        raise ConfigError("threads must be >= 1")
    doc.pop("threads", None)
    doc.pop("seed", None)
    cfg = RunConfig(doc, prof, Path(out), int(thr), int(sd), None if path is None else Path(path))
    validate(cfg)
    return cfg


# --------------------------------------------------------------------------- assembly


def _build_system(sec: dict):
    kind = sec.get("kind", "two_mode_raman")
    if kind == "two_mode_raman":
        params = dict(sec.get("params") or {})
        try:
            return build_two_mode_raman_system(TwoModeParams(**params))
        except TypeError as exc:
            raise ConfigError(f"bad two-mode parameters: {exc}") from exc
    if kind == "dipole":
        if "energies_cm" not in sec or "dipole" not in sec:
            raise ConfigError("dipole system needs energies_cm and dipole")
        return build_nlevel_dipole(sec["energies_cm"], sec["dipole"], sec.get("labels")), None
    if kind == "json":
        if "path" not in sec:
            raise ConfigError("json system needs a path")
        return system_from_json(sec["path"]), None
    raise ConfigError(f"unknown system kind {kind!r}")


def _build_targets(sec: dict, system: SystemModel, basis) -> TargetSet:
    if "gate" in sec:
        if basis is None:
            raise ConfigError("gate targets need a two-mode qubit system")
        try:
            gate = Gate(sec["gate"])
        except ValueError as exc:
            raise ConfigError(f"unknown gate {sec['gate']!r}") from exc
        return gate_targets(gate, basis, system)
    if "pairs" in sec:
        pairs = []
        for a, b in sec["pairs"]:
            pairs.append((_state_index(a, basis, system), _state_index(b, basis, system)))
        return state_targets(system, pairs)
    raise ConfigError("targets need either 'gate' or 'pairs'")


def _state_index(x, basis, system) -> int:
    if isinstance(x, str):
        if basis is None or x not in basis.names:
            raise ConfigError(f"unknown qubit label {x!r}")
        return basis.indices[basis.names.index(x)]
    i = int(x)
    if not 0 <= i < system.dimension:
        raise ConfigError(f"state index {i} out of range")
    return i


def _build_grid(sec: dict) -> TimeGrid:
    if "T_fs" not in sec:
        raise ConfigError("grid needs T_fs")
    T = fs_to_au(float(sec["T_fs"]))
    if "n_steps" in sec:
        return TimeGrid(int(sec["n_steps"]), T / int(sec["n_steps"]))
    if "dt_au" in sec:
        return TimeGrid.from_duration(T, float(sec["dt_au"]))
    if "dt_fs" in sec:
        return TimeGrid.from_duration(T, fs_to_au(float(sec["dt_fs"])))
    raise ConfigError("grid needs one of n_steps, dt_au, dt_fs")


def _build_guess(specs, grid: TimeGrid, n_fields: int, rng, noise: float) -> list:
    if len(specs) != n_fields:
        raise ConfigError(f"expected {n_fields} guess field(s), got {len(specs)}")
    out = []
    for i, spec in enumerate(specs, start=1):
        spec = dict(spec)
        center = spec.get("center_fs", 0.5 * grid.T * AU_TIME_FS)
        fwhm = spec.get("fwhm_fs")
        if fwhm is None:
            raise ConfigError(f"field {i} needs fwhm_fs")
        f = gaussian_guess(float(spec.get("carrier_cm", 0.0)), float(spec.get("amplitude", 0.0)),
                           float(center), float(fwhm), grid, i, float(spec.get("phase", 0.0)))
        if noise > 0:
            amp = float(np.max(np.abs(f.samples), initial=0.0))
            f = f.with_samples(f.samples + noise * amp * rng.standard_normal(grid.n_nodes))
        out.append(f)
    return out


def _build_filters(specs, grid: TimeGrid, n_fields: int) -> tuple:
    if len(specs) != n_fields:
        raise ConfigError(f"expected {n_fields} filter(s), got {len(specs)}")
    out = []
    for spec in specs:
        if spec.get("all_pass", False):
            out.append(all_pass(grid))
            continue
        try:
            out.append(band_pass_mask([tuple(w) for w in spec["windows"]],
                                      float(spec.get("edge_width", 0.0)), grid))
        except (KeyError, FilterError) as exc:
            raise ConfigError(f"bad filter: {exc}") from exc
    return tuple(out)


def highest_band_edge(filters, carriers) -> float:
    """Fastest frequency the grid has to resolve (cm-1)."""
    top = max(carriers, default=0.0)
    for f in filters:
        if f.is_all_pass:
            continue
        top = max(top, max(hi for _, hi in f.windows) + f.edge_width)
    return top


def build_problem(cfg: RunConfig) -> Problem:
    try:
        system, basis = _build_system(cfg.section("system"))
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    targets = _build_targets(cfg.section("targets"), system, basis)
    grid = _build_grid(cfg.section("grid"))
    nf = system.kind.n_fields
    rng = np.random.default_rng(cfg.seed)
    noise = float(cfg.raw.get("guess_noise", 0.0))
    try:
        guess = _build_guess(cfg.raw.get("fields") or [], grid, nf, rng, noise)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    filters = _build_filters(cfg.raw.get("filters") or [{"all_pass": True}] * nf, grid, nf)
    sh = cfg.section("shape")
    try:
        shape = shape_function(grid, sh.get("form", "sin_squared"), float(sh.get("s_min", 1e-3)),
                               float(sh.get("ramp_fraction", 0.1)))
    except ValueError as exc:
        raise ConfigError(f"bad shape function: {exc}") from exc
    pr = cfg.section("propagator")
    kr = dict(cfg.section("krotov"))
    try:
        prop = PropagatorConfig(float(pr.get("cheb_tolerance", 1e-12)),
                                float(pr.get("spectral_margin", 1.1)))
        kc = KrotovConfig(
            filters=filters, shape=shape,
            alpha0=float(kr.pop("alpha0", 10.0)),
            max_iters=int(kr.pop("max_iters", 100)),
            yield_target=float(kr.pop("yield_target", 0.99)),
            freeze_field=kr.pop("freeze_field", None),
            update_order=UpdateOrder(kr.pop("update_order", "eps1_then_eps2")),
            propagator=prop,
            backward_storage=kr.pop("backward_storage", "full"),
            checkpoint_every=int(kr.pop("checkpoint_every", 256)),
            channel_block=int(kr.pop("channel_block", 1)),
            threads=cfg.threads,
            monotone_slack=float(kr.pop("monotone_slack", 1e-9)),
            stagnation_window=int(kr.pop("stagnation_window", 10)),
            stagnation_tol=float(kr.pop("stagnation_tol", 1e-7)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad krotov/propagator settings: {exc}") from exc
    if kr:
        raise ConfigError(f"unknown krotov settings: {sorted(kr)}")
    return Problem(system, basis, targets, grid, guess, kc, filters)


# --------------------------------------------------------------------------- validation


def validate(cfg: RunConfig) -> Problem:
    """Cross-check the assembled problem before any propagation starts."""
    prob = build_problem(cfg)
    grid = prob.grid
    carriers = [f.carrier_cm for f in prob.guess]
    for c in carriers:
        if c >= grid.nyquist_cm:
            raise ConfigError(f"carrier {c} cm-1 at or above Nyquist {grid.nyquist_cm:.1f} cm-1")
    nu_max = highest_band_edge(prob.filters, carriers)
    if nu_max > 0:
        limit = grid.max_dt_for(nu_max)
        if grid.dt > limit * (1 + 1e-12):
            msg = (f"dt = {grid.dt:.4g} au does not resolve {nu_max:.1f} cm-1 "
                   f"(needs dt <= {limit:.4g} au, Nyquist {grid.nyquist_cm:.1f} cm-1)")
            if cfg.section("grid").get("allow_coarse_dt", False):
                log.warning("%s; continuing because allow_coarse_dt is set", msg)
            else:
                raise ConfigError(msg)
    for i, (f, c) in enumerate(zip(prob.filters, carriers), start=1):
        if f.is_all_pass or c == 0:
            continue
        if not any(lo <= c <= hi for lo, hi in f.windows):
            raise ConfigError(f"carrier of field {i} ({c} cm-1) lies outside its pass window")
        if not np.any(f.pass_bins):
            raise ConfigError(f"pass window of field {i} contains no FFT bin")
    if prob.krotov.freeze_field is not None and prob.krotov.freeze_field > prob.system.kind.n_fields:
        raise ConfigError("frozen field does not exist")
    return prob


def transition_table(prob: Problem) -> list:
    """``[(name, cm-1), ...]`` for the qubit flips, empty without a qubit map."""
    if prob.basis is None:
        return []
    E = prob.system.energies_cm
    return sorted(qubit_transitions(E, prob.basis).items(), key=lambda kv: -kv[1])


def describe(prob: Problem) -> str:
    g = prob.grid
    lines = [
        f"system      {prob.system.kind.value}, {prob.system.dimension} states",
        f"targets     {prob.targets.k} pair(s): {', '.join(map(str, prob.targets.names))}",
        f"grid        n_steps={g.n_steps} dt={g.dt:.6g} au T={g.T * AU_TIME_FS:.3f} fs",
        f"nyquist     {g.nyquist_cm:.2f} cm-1, bin width {g.bin_width_cm:.4f} cm-1",
    ]
    for i, f in enumerate(prob.filters, start=1):
        if f.is_all_pass:
            lines.append(f"filter {i}    all-pass")
        else:
            wins = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in f.windows)
            lines.append(f"filter {i}    {wins} edge {f.edge_width:g} cm-1, "
                         f"{int(np.sum(f.pass_bins))} pass bins")
    table = transition_table(prob)
    if table:
        lines.append("qubit transitions (cm-1)")
        lines.extend(f"  {name:8s} {nu:10.3f}" for name, nu in table)
    return "\n".join(lines)


def to_jsonable(x: Any):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    return x
