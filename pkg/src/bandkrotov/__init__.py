"""Band-limited Krotov optimal control for Raman and dipole-coupled quantum systems."""

__version__ = "0.1.0"

from .core import (ControlField, InteractionKind, SystemModel, TargetSet, TimeGrid, YieldReport,
                   convert_units, gate_yield)
from .krotov import KrotovConfig, OptimizationResult, Termination, UpdateOrder, iterate
from .models import (Gate, QubitBasisMap, TwoModeParams, build_nlevel_dipole,
                     build_two_mode_raman_system, gate_targets, gaussian_guess)
from .propagation import PropagatorConfig, propagate, reference_propagate
from .spectral import (SpectralFilter, all_pass, apply_fourier_filter, band_pass_mask,
                       complement_mask, out_of_band_fraction, power_spectrum, shape_function)

__all__ = [
    "ControlField", "InteractionKind", "SystemModel", "TargetSet", "TimeGrid", "YieldReport",
    "convert_units", "gate_yield", "KrotovConfig", "OptimizationResult", "Termination",
    "UpdateOrder", "iterate", "Gate", "QubitBasisMap", "TwoModeParams", "build_nlevel_dipole",
    "build_two_mode_raman_system", "gate_targets", "gaussian_guess", "PropagatorConfig",
    "propagate", "reference_propagate", "SpectralFilter", "all_pass", "apply_fourier_filter",
    "band_pass_mask", "complement_mask", "out_of_band_fraction", "power_spectrum",
    "shape_function",
]
