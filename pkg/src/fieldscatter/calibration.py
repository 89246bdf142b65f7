"""TARP expected-coverage tests with bootstrap bands.

For realisation ``i`` a reference point ``r_i`` is drawn uniformly in the
prior box and ``f_i`` is the fraction of posterior draws closer to ``r_i``
than the true parameters are. Distances are Euclidean after dividing each
coordinate by its prior width. ``ECP(alpha)`` is the fraction of
realisations with ``f_i <= alpha``; a calibrated posterior gives
``ECP(alpha) = alpha``.

Reading the curve: an over-confident (too narrow) posterior lifts the curve
above the diagonal at small ``alpha`` and drops it below at large ``alpha``;
an under-confident (too wide) posterior does the reverse. A posterior
collapsed exactly onto the truth gives ``f_i = 0`` and hence ECP = 1 for every
``alpha > 0``, the extreme of the over-confident shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .posterior import BoxPrior
from .rng import stream

DIRECTION_NOTE = (
    "over-confident: ecp above diagonal at low alpha and below at high alpha; "
    "under-confident: below at low alpha and above at high alpha; "
    "point mass at truth: ecp=1 for alpha>0"
)


@dataclass(frozen=True)
class CoverageCurve:
    alphas: np.ndarray
    ecp: np.ndarray
    bands: np.ndarray  # (3, len(alphas)): 1, 2 and 3 bootstrap standard deviations
    n_realisations: int
    f_values: np.ndarray

    def within_band(self, sigma: int = 3) -> np.ndarray:
        return np.abs(self.ecp - self.alphas) <= self.bands[sigma - 1]


def default_alphas(n_realisations: int) -> np.ndarray:
    # one credibility bin per ten realisations
    return np.linspace(0.0, 1.0, max(n_realisations // 10, 1) + 1)


def ecp_curve(f_values: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    f_values = np.asarray(f_values, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    ecp = (f_values[None, :] <= alphas[:, None]).mean(axis=1)
    # the alpha = 0 region is empty by definition
    return np.where(alphas > 0, ecp, 0.0)


def tarp_fractions(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]], prior: BoxPrior, seed: int
) -> np.ndarray:
    """Per-realisation fraction of draws closer to the reference point than the truth."""
    rng = stream(seed, "tarp-reference")
    refs = prior.sample(rng, len(pairs))
    f = np.empty(len(pairs))
    for i, (truth, draws) in enumerate(pairs):
        draws = np.atleast_2d(np.asarray(draws, dtype=np.float64))
        if draws.shape[0] == 0:
            raise ValueError(f"realisation {i} has no posterior draws")
        d_draws = np.linalg.norm((draws - refs[i]) / prior.width, axis=1)
        d_true = np.linalg.norm((np.asarray(truth, dtype=np.float64) - refs[i]) / prior.width)
        f[i] = np.mean(d_draws < d_true)
    return f


def bootstrap_bands(f_values, alphas, n_boot: int = 100, seed: int = 0) -> np.ndarray:
    """1, 2 and 3 sigma half-widths of ECP from resampling realisations."""
    f_values = np.asarray(f_values, dtype=np.float64)
    if f_values.size == 0:
        raise ValueError("need at least one realisation")
    rng = stream(seed, "tarp-bootstrap")
    n = f_values.size
    boots = np.stack(
        [ecp_curve(f_values[rng.integers(0, n, n)], alphas) for _ in range(n_boot)]
    )
    sd = boots.std(axis=0)
    return np.stack([sd, 2 * sd, 3 * sd])


def tarp_ecp(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    prior: BoxPrior,
    alphas: np.ndarray | None = None,
    seed: int = 0,
    n_boot: int = 100,
) -> CoverageCurve:
    if len(pairs) == 0:
        raise ValueError("no realisations")
    if alphas is None:
        alphas = default_alphas(len(pairs))
    alphas = np.asarray(alphas, dtype=np.float64)
    f = tarp_fractions(pairs, prior, seed)
    return CoverageCurve(
        alphas=alphas,
        ecp=ecp_curve(f, alphas),
        bands=bootstrap_bands(f, alphas, n_boot, seed),
        n_realisations=len(pairs),
        f_values=f,
    )
