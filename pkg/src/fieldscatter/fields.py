"""Periodic 2D random fields and the shared wavenumber grid.

Fourier conventions used throughout the package: ``F = fft2(f)`` is the
unnormalized forward DFT, and the power spectrum of a field on a box of side
``L`` sampled on ``N x N`` pixels is ``P(k) = L**2 / N**4 * |F(k)|**2``. With
this convention the pixel variance of a zero-mean field is
``sum_k P(k) / L**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import stream

GRF_TAG = "grf-white-noise"


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class ParamVector:
    values: np.ndarray
    names: tuple[str, ...]

    def __init__(self, values: Sequence[float], names: Sequence[str]):
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        names = tuple(names)
        if values.size != len(names):
            raise ValueError(f"{values.size} values for {len(names)} names")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    def __getitem__(self, name: str) -> float:
        try:
            return float(self.values[self.names.index(name)])
        except ValueError:
            raise KeyError(name) from None

    def get(self, name: str, default: float | None = None) -> float | None:
        return self[name] if name in self.names else default

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass
class Field2D:
    """A real periodic N x N field with its box size and provenance.

    ``g`` is the lognormal strength used to build the field, if any; it sets
    the lower bound ``data > -1/g`` that lognormal fields must respect.
    """

    data: np.ndarray
    box_size: float
    params: ParamVector | None = None
    seed: int | None = None
    g: float = field(default=0.0, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ValueError(f"field must be square, got shape {self.data.shape}")
        n = self.data.shape[0]
        if not is_power_of_two(n) or n < 32:
            raise ValueError(f"field side must be a power of two >= 32, got {n}")
        if not self.box_size > 0:
            raise ValueError("box_size must be positive")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field contains non-finite values")
        if self.g > 0 and self.data.min() <= -1.0 / self.g:
            raise ValueError("lognormal field violates its lower bound -1/g")

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class WavenumberGrid:
    k_magnitude: np.ndarray
    fundamental: float
    nyquist_index: int

    @property
    def n(self) -> int:
        return self.k_magnitude.shape[0]


def signed_indices(n: int) -> np.ndarray:
    """DFT frequency indices in [-n/2, n/2), in fft order."""
    return np.fft.fftfreq(n, d=1.0 / n)


def make_wavenumber_grid(n: int, box_size: float) -> WavenumberGrid:
    if not is_power_of_two(n):
        raise ValueError(f"grid side must be a power of two, got {n}")
    if not box_size > 0:
        raise ValueError("box_size must be positive")
    kf = 2.0 * np.pi / box_size
    idx = signed_indices(n)
    kmag = kf * np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    return WavenumberGrid(k_magnitude=kmag, fundamental=kf, nyquist_index=n // 2)


def power_law_spectrum(kgrid: WavenumberGrid, amplitude: float, slope: float) -> np.ndarray:
    """P(k) = A k**-slope on the grid, with the zero mode set to 0."""
    k = kgrid.k_magnitude
    power = np.zeros_like(k)
    nz = k > 0
    power[nz] = amplitude * k[nz] ** (-slope)
    return power


def _check_grf_params(amplitude: float, slope: float, n: int, box_size: float) -> None:
    if not amplitude > 0:
        raise ValueError(f"amplitude A must be positive, got {amplitude}")
    if not 0 <= slope < 4:
        raise ValueError(f"spectral slope alpha must lie in [0, 4), got {slope}")
    if not is_power_of_two(n) or n < 32:
        raise ValueError(f"grid side must be a power of two >= 32, got {n}")
    if not box_size > 0:
        raise ValueError("box_size must be positive")


def _white_modes(n: int, seed: int) -> np.ndarray:
    noise = stream(seed, GRF_TAG).standard_normal((n, n))
    return np.fft.fft2(noise)


def colour_noise(power: np.ndarray, box_size: float, seed: int) -> np.ndarray:
    """Complex inverse transform of white modes scaled to ``power``.

    The imaginary part is pure roundoff because the white modes come from a
    real noise field and ``power`` is symmetric under k -> -k.
    """
    n = power.shape[0]
    modes = _white_modes(n, seed) * np.sqrt(power * n**2 / box_size**2)
    return np.fft.ifft2(modes)


def make_grf(params: ParamVector, n: int, box_size: float, seed: int) -> Field2D:
    """Gaussian random field with ensemble spectrum ``A k**-alpha``."""
    amplitude, slope = params["A"], params["alpha"]
    _check_grf_params(amplitude, slope, n, box_size)
    power = power_law_spectrum(make_wavenumber_grid(n, box_size), amplitude, slope)
    data = colour_noise(power, box_size, seed).real
    return Field2D(data=data, box_size=box_size, params=params, seed=seed)


def matched_latent_spectrum(power: np.ndarray, box_size: float, g: float) -> np.ndarray:
    """Latent spectrum whose lognormal transform has spectrum ``power``.

    The transformed field has correlation ``(exp(g**2 C_h) - 1) / g**2``, so
    we invert that map in real space and transform back. Negative latent
    power (which the inversion can produce at high k) is clipped to zero, so
    the match is close but not exact for strong ``g``.
    """
    n = power.shape[0]
    corr = np.fft.ifft2(power).real * n**2 / box_size**2
    arg = 1.0 + g**2 * corr
    if np.any(arg <= 0):
        raise ValueError("target correlation too negative for this g")
    corr_h = np.log(arg) / g**2
    latent = np.fft.fft2(corr_h).real * box_size**2 / n**2
    latent[0, 0] = 0.0
    return np.clip(latent, 0.0, None)


def make_lognormal(
    params: ParamVector,
    n: int,
    box_size: float,
    seed: int,
    match_spectrum: bool = False,
) -> Field2D:
    """Lognormal transform of a latent GRF, normalized to be continuous at g=0.

    Returns ``(exp(g h) / E - 1) / g`` with ``E = exp(g**2 var_h / 2)`` the
    analytic mean of ``exp(g h)``; the result has zero ensemble mean, tends to
    ``h`` as ``g -> 0`` and is bounded below by ``-1/g``. With
    ``match_spectrum`` the latent spectrum is adjusted so the output, rather
    than the latent field, follows ``A k**-alpha``.
    """
    g = params["g"]
    if g < 0:
        raise ValueError(f"non-Gaussianity g must be non-negative, got {g}")
    amplitude, slope = params["A"], params["alpha"]
    _check_grf_params(amplitude, slope, n, box_size)
    if g == 0:
        return make_grf(params, n, box_size, seed)
    power = power_law_spectrum(make_wavenumber_grid(n, box_size), amplitude, slope)
    if match_spectrum:
        power = matched_latent_spectrum(power, box_size, g)
    latent = colour_noise(power, box_size, seed).real
    var_h = power.sum() / box_size**2
    data = np.expm1(g * latent - 0.5 * g**2 * var_h) / g
    return Field2D(data=data, box_size=box_size, params=params, seed=seed, g=g)
