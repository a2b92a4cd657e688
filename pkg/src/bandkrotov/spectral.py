"""Frequency-domain machinery: masks, Fourier and FIR filters, spectra.

FFT convention: the forward transform is unnormalized, the inverse carries
``1/N``. Frequency axes are in cm-1; a signal sampled at the ``N = n_steps + 1``
grid nodes has bins ``grid.freqs_cm``. Masks depend on ``|omega|`` only, so
filtered real fields stay real.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import get_window

from .core import HARTREE_CM, ControlField, TimeGrid

IMAG_TOL = 1e-12
ArrayOrField = Union[np.ndarray, ControlField]


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralFilter:
    """Band-pass mask over the FFT bins of ``grid``.

    ``complement`` flips the filter into its band-stop partner without touching
    the stored base mask, so double complementation is exact.
    """

    windows: tuple
    edge_width: float
    grid: TimeGrid
    base_mask: np.ndarray = field(repr=False)
    complement: bool = False

    @property
    def mask(self) -> np.ndarray:
        return 1.0 - self.base_mask if self.complement else self.base_mask

    @property
    def pass_bins(self) -> np.ndarray:
        """Bins where the (band-pass) mask is exactly one."""
        return self.mask == 1.0

    @property
    def is_all_pass(self) -> bool:
        return bool(np.all(self.mask == 1.0))


def _raised_cosine_window(w: np.ndarray, lo: float, hi: float, edge: float) -> np.ndarray:
    m = ((w >= lo) & (w <= hi)).astype(float)
    if edge > 0:
        rise = (w >= lo - edge) & (w < lo)
        m[rise] = 0.5 * (1 - np.cos(np.pi * (w[rise] - (lo - edge)) / edge))
        fall = (w > hi) & (w <= hi + edge)
        m[fall] = 0.5 * (1 + np.cos(np.pi * (w[fall] - hi) / edge))
    return m


def band_pass_mask(windows: Sequence[tuple], edge_width: float, grid: TimeGrid) -> SpectralFilter:
    """Raised-cosine band-pass over ``windows`` ``[(lo, hi), ...]`` in cm-1.

    Edges ramp outside each window over ``edge_width``: the mask is one on
    ``[lo, hi]`` and zero beyond ``lo - edge_width`` and ``hi + edge_width``.
    """
    if edge_width < 0:
        raise FilterError("edge_width must be non-negative")
    wins = sorted((float(lo), float(hi)) for lo, hi in windows)
    nyq = grid.nyquist_cm
    for lo, hi in wins:
        if not (0 <= lo < hi):
            raise FilterError(f"invalid window ({lo}, {hi})")
        if hi > nyq * (1 + 1e-12):
            raise FilterError(f"window edge {hi} cm-1 above Nyquist {nyq:.1f} cm-1")
    for (_, hi), (lo, _) in zip(wins, wins[1:]):
        if hi + edge_width >= lo - edge_width:
            raise FilterError("windows overlap after edge widening")
    w = np.abs(grid.freqs_cm)
    m = np.zeros_like(w)
    for lo, hi in wins:
        m = np.maximum(m, _raised_cosine_window(w, lo, hi, edge_width))
    m.setflags(write=False)
    return SpectralFilter(tuple(wins), float(edge_width), grid, m)


def all_pass(grid: TimeGrid) -> SpectralFilter:
    return band_pass_mask([(0.0, grid.nyquist_cm)], 0.0, grid)


def complement_mask(f: SpectralFilter) -> SpectralFilter:
    """Band-stop partner ``1 - f`` of a filter."""
    return SpectralFilter(f.windows, f.edge_width, f.grid, f.base_mask, not f.complement)


def _samples(x: ArrayOrField) -> np.ndarray:
    return x.samples if isinstance(x, ControlField) else np.asarray(x, float)


def _wrap(x: ArrayOrField, y: np.ndarray) -> ArrayOrField:
    return x.with_samples(y) if isinstance(x, ControlField) else y


def _filter_samples(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if x.size != mask.size:
        raise FilterError(f"signal has {x.size} samples, filter grid has {mask.size} bins")
    y = np.fft.ifft(mask * np.fft.fft(x))
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    if np.max(np.abs(y.imag), initial=0.0) > IMAG_TOL * scale:
        raise FilterError("filtered signal has a non-negligible imaginary part")
    return y.real.copy()


def apply_fourier_filter(x: ArrayOrField, f: SpectralFilter) -> ArrayOrField:
    """``F^-1[f(omega) F(x)]``; accepts a :class:`ControlField` or a sample array."""
    return _wrap(x, _filter_samples(_samples(x), f.mask))


def project_onto_band(x: ArrayOrField, f: SpectralFilter) -> ArrayOrField:
    """Zero every bin where the band-pass mask is below one.

    Unlike :func:`apply_fourier_filter` with a smooth-edged mask this is a true
    projection: the result has no energy under ``complement_mask(f)``.
    """
    return _wrap(x, _filter_samples(_samples(x), f.pass_bins.astype(float)))


def out_of_band_fraction(x: ArrayOrField, f: SpectralFilter) -> float:
    """Share of the signal energy that passes the band-stop ``1 - f`` (Parseval)."""
    s = _samples(x)
    if s.size != f.mask.size:
        raise FilterError("grid mismatch")
    X = np.fft.fft(s)
    total = float(np.sum(np.abs(X) ** 2))
    if total == 0.0:
        raise FilterError("zero-energy field")
    fc = complement_mask(f).mask
    return float(np.sum(np.abs(fc * X) ** 2) / total)


def out_of_band_energy(x: ArrayOrField, f: SpectralFilter) -> float:
    """Time-integrated square of the band-stop output, ``sum |F(x)|^2 dt``."""
    s = _samples(x)
    X = np.fft.fft(s)
    fc = complement_mask(f).mask
    return float(np.sum(np.abs(fc * X) ** 2) / s.size * f.grid.dt)


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase FIR filter ``F(x)(t) = sum_j c_j x(t - j dt)``."""

    coeffs: np.ndarray
    dt: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, float)
        if c.size % 2 == 0:
            raise FilterError("linear-phase design needs an odd number of taps")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_taps(self) -> int:
        return self.coeffs.size

    @property
    def delay(self) -> float:
        return (self.n_taps - 1) * self.dt / 2

    def response(self, omega_cm) -> np.ndarray:
        """Delay-compensated (real) frequency response at ``omega_cm``."""
        w = np.atleast_1d(np.asarray(omega_cm, float)) / HARTREE_CM
        j = np.arange(self.n_taps) - (self.n_taps - 1) / 2
        return np.real(np.exp(-1j * np.outer(w, j) * self.dt) @ self.coeffs)


def fir_from_mask(f: SpectralFilter, n_taps: int, window: Optional[str] = None) -> FirFilter:
    """Truncated inverse-DFT design approximating ``f.mask``.

    Without a ``window`` this is the least-squares FIR for the mask (smallest
    RMS response error); the raised-cosine mask edges already keep the
    ripple low. ``window`` names a :func:`scipy.signal.get_window` taper.
    """
    if n_taps < 3 or n_taps % 2 == 0:
        raise FilterError("n_taps must be odd and >= 3")
    N = f.mask.size
    if n_taps > N:
        raise FilterError("more taps than grid samples")
    h = np.real(np.fft.ifft(f.mask))
    half = n_taps // 2
    centred = np.concatenate([h[N - half:], h[: half + 1]])
    c = centred if window is None else centred * get_window(window, n_taps, fftbins=False)
    # enforce exact symmetry against FFT roundoff
    c = 0.5 * (c + c[::-1])
    return FirFilter(c, f.grid.dt)


def fir_apply(x: ArrayOrField, fir: FirFilter) -> ArrayOrField:
    """Zero-padded convolution, shifted back by the group delay."""
    s = _samples(x)
    if s.size <= fir.n_taps:
        raise FilterError("signal shorter than the filter")
    return _wrap(x, np.convolve(s, fir.coeffs, mode="same"))


class ShapeForm(enum.Enum):
    SIN_SQUARED = "sin_squared"
    FLAT_TOP = "flat_top"


@dataclass(frozen=True)
class ShapeFunction:
    samples: np.ndarray
    form: ShapeForm
    s_min: float


def shape_function(grid: TimeGrid, form="sin_squared", s_min: float = 1e-3,
                   ramp_fraction: float = 0.1) -> ShapeFunction:
    """Update envelope ``s(t)`` in ``[s_min, 1]``."""
    form = ShapeForm(form)
    if not (0 < s_min <= 0.05):
        raise ValueError("s_min must lie in (0, 0.05]")
    t, T = grid.t, grid.T
    if form is ShapeForm.SIN_SQUARED:
        s = np.sin(np.pi * t / T) ** 2
    else:
        tr = ramp_fraction * T
        s = np.ones_like(t)
        up = t < tr
        down = t > T - tr
        s[up] = np.sin(0.5 * np.pi * t[up] / tr) ** 2
        s[down] = np.sin(0.5 * np.pi * (T - t[down]) / tr) ** 2
    s = np.maximum(s, s_min)
    s.setflags(write=False)
    return ShapeFunction(s, form, s_min)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def power_spectrum(x: ArrayOrField, grid: TimeGrid, two_sided: bool = False):
    """``|dt * FFT(x)|^2`` zero-padded to a power of two >= 4x the length.

    Normalised so that ``sum(power) * d_nu = sum(x**2) * dt`` over the
    two-sided axis, with ``d_nu = 1 / (M dt)`` in cycles per atomic time unit.
    Returns ``(omega_cm, power)``; non-negative bins only unless ``two_sided``.
    """
    s = _samples(x)
    M = _next_pow2(4 * s.size)
    X = np.fft.fft(s, M) * grid.dt
    P = np.abs(X) ** 2
    nu = np.fft.fftfreq(M, grid.dt) * 2 * np.pi * HARTREE_CM
    if two_sided:
        return nu, P
    half = M // 2 + 1
    return np.abs(nu[:half]), P[:half]


def spectral_bands(omega, power, rel_threshold: float = 1e-2):
    """Contiguous frequency intervals where ``power >= rel_threshold * max``."""
    above = power >= rel_threshold * np.max(power)
    bands = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            bands.append((omega[start], omega[i - 1], start + int(np.argmax(power[start:i]))))
            start = None
    if start is not None:
        bands.append((omega[start], omega[-1], start + int(np.argmax(power[start:]))))
    return [(lo, hi, omega[ip]) for lo, hi, ip in bands]
