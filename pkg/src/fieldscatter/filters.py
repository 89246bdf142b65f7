"""Frequency-domain Morlet filter bank and its Littlewood-Paley diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import is_power_of_two, signed_indices

SIGMA0 = 0.8
XI0 = 3 * np.pi / 4

# period shifts for frequency-domain periodization (3 x 3 copies)
_SHIFTS = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]


@dataclass(frozen=True)
class FilterBank:
    """Wavelets ``psi_hat[j, chi]`` and low-pass ``phi_hat`` on the DFT grid.

    Frequencies are in radians per pixel, laid out in ``fft2`` order. All
    filters are real-valued in frequency (complex Morlet wavelets in space).
    """

    psi_hat: np.ndarray  # (J, L, n, n)
    phi_hat: np.ndarray  # (n, n)
    J: int
    L: int
    n: int
    sigma0: float = SIGMA0
    xi0: float = XI0
    slant: float = 2.0

    def scaled(self, factor: float) -> "FilterBank":
        return replace(self, psi_hat=self.psi_hat * factor, phi_hat=self.phi_hat * factor)

    @property
    def averaging_hat(self) -> np.ndarray:
        """Low-pass with unit DC gain, used for the final averaging step."""
        return self.phi_hat / self.phi_hat[0, 0]


@dataclass(frozen=True)
class FrameReport:
    littlewood_paley_min: float
    littlewood_paley_max: float


def frequency_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    w = 2 * np.pi * signed_indices(n) / n
    return np.meshgrid(w, w, indexing="ij")


def _gaussian(w1, w2, sigma, slant, angle, centre):
    # rotate into the wavelet frame; the envelope is narrower across the
    # oscillation in space, hence wider by `slant` in frequency
    c, s = np.cos(angle), np.sin(angle)
    r1 = c * w1 + s * w2 - centre
    r2 = -s * w1 + c * w2
    return np.exp(-0.5 * sigma**2 * (r1**2 + (r2 / slant) ** 2))


def _periodized(w1, w2, sigma, slant, angle, centre):
    return sum(
        _gaussian(w1 + 2 * np.pi * a, w2 + 2 * np.pi * b, sigma, slant, angle, centre)
        for a, b in _SHIFTS
    )


def morlet_hat(n: int, j: int, angle: float, sigma0=SIGMA0, xi0=XI0, slant=2.0) -> np.ndarray:
    """Unnormalized Morlet wavelet at scale ``2**j``, exactly zero-mean.

    The amplitude factor ``2**j`` keeps the spatial L2 norm constant across
    scales.
    """
    w1, w2 = frequency_grid(n)
    sigma, xi = sigma0 * 2**j, xi0 / 2**j
    gabor = _periodized(w1, w2, sigma, slant, angle, xi)
    envelope = _periodized(w1, w2, sigma, slant, angle, 0.0)
    beta = gabor[0, 0] / envelope[0, 0]
    return 2**j * (gabor - beta * envelope)


def gaussian_lowpass_hat(n: int, J: int, sigma0=SIGMA0) -> np.ndarray:
    w1, w2 = frequency_grid(n)
    phi = _periodized(w1, w2, sigma0 * 2**J, 1.0, 0.0, 0.0)
    return phi / phi[0, 0]


def littlewood_paley(bank: FilterBank) -> np.ndarray:
    return (bank.psi_hat**2).sum(axis=(0, 1)) + bank.phi_hat**2


def build_morlet_bank(
    n: int,
    J: int | None = None,
    L: int = 2,
    sigma0: float = SIGMA0,
    xi0: float = XI0,
    slant: float | None = None,
) -> FilterBank:
    """Morlet bank with ``J`` dyadic scales and ``L`` orientations on ``[0, pi)``.

    The whole bank is divided by ``sqrt`` of its Littlewood-Paley maximum, so
    ``sum |psi_hat|**2 + |phi_hat|**2 <= 1`` at every frequency.
    """
    if not is_power_of_two(n):
        raise ValueError(f"grid side must be a power of two, got {n}")
    if J is None:
        J = int(np.log2(n)) - 1
    if J < 0 or 2**J > n // 2:
        raise ValueError(f"J={J} too large for n={n}: need 2**J <= n/2")
    if L < 1:
        raise ValueError("need at least one orientation")
    if not (sigma0 > 0 and xi0 > 0):
        raise ValueError("sigma0 and xi0 must be positive")
    if slant is None:
        slant = 4.0 / L
    if not slant > 0:
        raise ValueError("slant must be positive")

    psi = np.empty((J, L, n, n))
    for j in range(J):
        for chi in range(L):
            psi[j, chi] = morlet_hat(n, j, np.pi * chi / L, sigma0, xi0, slant)
    phi = gaussian_lowpass_hat(n, J, sigma0)

    bank = FilterBank(psi, phi, J, L, n, sigma0, xi0, slant)
    return bank.scaled(1.0 / np.sqrt(littlewood_paley(bank).max()))


def frame_bounds(bank: FilterBank) -> FrameReport:
    lp = littlewood_paley(bank)
    return FrameReport(float(lp.min()), float(lp.max()))


def peak_frequency(filter_hat: np.ndarray) -> float:
    """Radial frequency (rad/pixel) of a filter's maximum modulus.

    The grid argmax is refined by a parabola through the log-modulus of its
    two neighbours along each axis, which is exact for a Gaussian bump.
    """
    n = filter_hat.shape[0]
    mag = np.abs(filter_hat)
    i, j = np.unravel_index(np.argmax(mag), mag.shape)
    idx = signed_indices(n)

    def refine(lo, mid, hi):
        lo, mid, hi = np.log(lo), np.log(mid), np.log(hi)
        curv = lo - 2 * mid + hi
        return 0.0 if curv >= 0 else 0.5 * (lo - hi) / curv

    tiny = np.finfo(float).tiny
    di = refine(
        max(mag[(i - 1) % n, j], tiny), mag[i, j], max(mag[(i + 1) % n, j], tiny)
    )
    dj = refine(
        max(mag[i, (j - 1) % n], tiny), mag[i, j], max(mag[i, (j + 1) % n], tiny)
    )
    return float(2 * np.pi / n * np.hypot(idx[i] + di, idx[j] + dj))
