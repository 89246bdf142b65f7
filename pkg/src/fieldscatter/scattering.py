"""Depth-2 scattering transform with global spatial and orientation averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field2D
from .filters import FilterBank
from .summaries import SummaryVector


def count_coefficients(J: int) -> int:
    if J < 1:
        raise ValueError(f"need J >= 1, got {J}")
    return 1 + J + J * (J - 1) // 2


def _as_array(field) -> np.ndarray:
    return field.data if isinstance(field, Field2D) else np.asarray(field)


def _check_shape(data: np.ndarray, bank_or_filter) -> None:
    shape = bank_or_filter.shape[-2:] if isinstance(bank_or_filter, np.ndarray) else (
        bank_or_filter.n, bank_or_filter.n)
    if data.shape != tuple(shape):
        raise ValueError(f"field shape {data.shape} does not match filter shape {tuple(shape)}")


def propagate(field, psi_hat: np.ndarray) -> np.ndarray:
    """One propagator step ``|f * psi|`` via the FFT.

    Accepts a :class:`Field2D` or a bare (possibly complex) array.
    """
    data = _as_array(field)
    _check_shape(data, psi_hat)
    return np.abs(np.fft.ifft2(np.fft.fft2(data) * psi_hat))


@dataclass(frozen=True)
class ScatteringSummary:
    s0: float
    s1: np.ndarray
    s2: np.ndarray
    J: int

    @property
    def schema(self) -> tuple[str, ...]:
        return scattering_schema(self.J)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([[self.s0], self.s1, self.s2])

    def to_summary(self, provenance: dict | None = None) -> SummaryVector:
        return SummaryVector(self.vector, self.schema, provenance or {})


def scattering_pairs(J: int) -> list[tuple[int, int]]:
    return [(j1, j2) for j1 in range(J) for j2 in range(j1 + 1, J)]


def scattering_schema(J: int) -> tuple[str, ...]:
    return (
        ("S0",)
        + tuple(f"S1_{j}" for j in range(J))
        + tuple(f"S2_{j1}_{j2}" for j1, j2 in scattering_pairs(J))
    )


def first_order_fields(data: np.ndarray, bank: FilterBank) -> np.ndarray:
    """U[j, chi] f for every wavelet, shape (J, L, n, n)."""
    return np.abs(np.fft.ifft2(np.fft.fft2(data)[None, None] * bank.psi_hat))


def scatter(field, bank: FilterBank) -> ScatteringSummary:
    """Orientation-averaged global means of order 0, 1 and 2 scattering fields.

    A global spatial mean commutes with low-pass smoothing on a periodic grid,
    so the propagated fields are averaged directly.
    """
    data = _as_array(field)
    _check_shape(data, bank)
    J = bank.J
    u1 = first_order_fields(data, bank)
    s1 = u1.mean(axis=(2, 3))  # (J, L)
    u1_hat = np.fft.fft2(u1)
    s2 = np.empty(len(scattering_pairs(J)))
    for k, (j1, j2) in enumerate(scattering_pairs(J)):
        u2 = np.abs(np.fft.ifft2(u1_hat[j1][:, None] * bank.psi_hat[j2][None, :]))
        s2[k] = u2.mean()
    return ScatteringSummary(float(data.mean()), s1.mean(axis=1), s2, J)


def scattering_maps(field, bank: FilterBank) -> dict[str, np.ndarray]:
    """Per-pixel S maps (low-pass smoothed, orientation averaged) for inspection."""
    data = _as_array(field)
    _check_shape(data, bank)
    phi = bank.averaging_hat

    def smooth(x):
        return np.fft.ifft2(np.fft.fft2(x) * phi).real

    u1 = first_order_fields(data, bank)
    maps = {"S0": smooth(data)}
    for j in range(bank.J):
        maps[f"S1_{j}"] = smooth(u1[j]).mean(axis=0)
    for j1, j2 in scattering_pairs(bank.J):
        u2 = np.abs(np.fft.ifft2(np.fft.fft2(u1[j1])[:, None] * bank.psi_hat[j2][None, :]))
        maps[f"S2_{j1}_{j2}"] = smooth(u2).mean(axis=(0, 1))
    return maps
