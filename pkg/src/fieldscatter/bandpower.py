"""Azimuthally averaged power spectra and log-spaced bandpowers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field2D, signed_indices
from .summaries import SummaryVector

DEFAULT_BANDS = 14


@dataclass(frozen=True)
class PowerSpectrum:
    k_centers: np.ndarray
    power: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class BandpowerVector:
    values: np.ndarray
    edges: np.ndarray

    @property
    def B(self) -> int:
        return self.values.size

    def to_summary(self, provenance: dict | None = None) -> SummaryVector:
        labels = tuple(f"BP_{b}" for b in range(self.B))
        return SummaryVector(self.values, labels, provenance or {})


def fine_bin_index(n: int) -> np.ndarray:
    """Fine bin of every DFT mode; -1 marks the excluded zero mode.

    Bin ``b`` holds modes with ``|k|/k_f`` in ``[b + 0.5, b + 1.5)``.
    """
    idx = signed_indices(n)
    radius = np.sqrt(idx[:, None] ** 2 + idx[None, :] ** 2)
    return np.floor(radius - 0.5).astype(np.int64)


def spectrum_from_modes(mode_power: np.ndarray, box_size: float) -> PowerSpectrum:
    """Bin a per-mode power grid (in fft order) into unit-width shells."""
    n = mode_power.shape[0]
    bins = fine_bin_index(n).ravel()
    keep = bins >= 0
    nbins = int(bins.max()) + 1
    counts = np.bincount(bins[keep], minlength=nbins)[:nbins]
    sums = np.bincount(bins[keep], weights=mode_power.ravel()[keep], minlength=nbins)[:nbins]
    populated = counts > 0
    kf = 2 * np.pi / box_size
    centers = kf * (np.arange(nbins) + 1.0)
    return PowerSpectrum(
        k_centers=centers[populated],
        power=sums[populated] / counts[populated],
        counts=counts[populated],
    )


def power_spectrum(field: Field2D) -> PowerSpectrum:
    n, box = field.n, field.box_size
    mode_power = np.abs(np.fft.fft2(field.data)) ** 2 * box**2 / n**4
    return spectrum_from_modes(mode_power, box)


def log_edges(ps: PowerSpectrum, B: int) -> np.ndarray:
    """Log-uniform band edges with empty bands merged into their lower neighbour."""
    if B < 2:
        raise ValueError(f"need at least 2 bands, got {B}")
    k = ps.k_centers
    if k.size == 0:
        raise ValueError("empty power spectrum")
    if B > k.size:
        raise ValueError(f"{B} bands exceed {k.size} populated fine bins")
    edges = np.geomspace(k[0], k[-1], B + 1)
    band = np.clip(np.searchsorted(edges, k, side="right") - 1, 0, B - 1)
    occupied = np.bincount(band, minlength=B) > 0
    # drop the lower edge of each empty band, folding it into the band below
    keep = np.concatenate([[True], occupied[1:], [True]])
    return edges[keep]


def rebin_log(ps: PowerSpectrum, B: int = DEFAULT_BANDS) -> BandpowerVector:
    """Mode-count-weighted mean power in log-spaced bands.

    ``B`` is the requested band count; fewer bands come back when some are
    empty (coarse grids).
    """
    edges = log_edges(ps, B)
    nb = edges.size - 1
    band = np.clip(np.searchsorted(edges, ps.k_centers, side="right") - 1, 0, nb - 1)
    weight = np.bincount(band, weights=ps.counts, minlength=nb)
    mass = np.bincount(band, weights=ps.counts * ps.power, minlength=nb)
    return BandpowerVector(values=mass / weight, edges=edges)


def bandpowers(field: Field2D, B: int = DEFAULT_BANDS) -> BandpowerVector:
    return rebin_log(power_spectrum(field), B)
