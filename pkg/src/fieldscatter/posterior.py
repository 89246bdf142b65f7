"""Box priors, learned-likelihood posteriors and adaptive Metropolis sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NumericalError
from .rng import stream

log = logging.getLogger(__name__)

# The five-parameter box used for the N-body latin hypercube.
COSMOLOGY_PRIOR = {
    "Omega_m": (0.1, 0.5),
    "Omega_b": (0.03, 0.07),
    "h": (0.5, 0.9),
    "n_s": (0.8, 1.2),
    "sigma_8": (0.6, 1.0),
}


@dataclass(frozen=True)
class BoxPrior:
    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] = ()

    def __init__(self, lower: Sequence[float], upper: Sequence[float], names: Sequence[str] = ()):
        lower = np.asarray(lower, dtype=np.float64).reshape(-1)
        upper = np.asarray(upper, dtype=np.float64).reshape(-1)
        names = tuple(names) or tuple(f"theta{i}" for i in range(lower.size))
        if lower.shape != upper.shape or len(names) != lower.size:
            raise ValueError("prior bounds and names must have matching lengths")
        if not np.all(lower < upper):
            raise ValueError("prior needs lower < upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_names(cls, names: Sequence[str], table: dict = COSMOLOGY_PRIOR) -> "BoxPrior":
        return cls([table[n][0] for n in names], [table[n][1] for n in names], names)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, theta) -> np.ndarray:
        theta = np.atleast_2d(theta)
        return np.all((theta >= self.lower) & (theta <= self.upper), axis=1)

    def log_prob(self, theta) -> np.ndarray:
        inside = self.contains(theta)
        return np.where(inside, -np.log(self.width).sum(), -np.inf)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.dim)) * self.width


class AnalyticGaussianLikelihood:
    """Stand-in for a flow ensemble: ``log N(theta; mean, cov)``, ignoring ``t``."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        self._prec = np.linalg.inv(self.cov)
        _, logdet = np.linalg.slogdet(self.cov)
        self._norm = -0.5 * (logdet + self.mean.size * np.log(2 * np.pi))

    def log_prob(self, t, theta) -> np.ndarray:
        d = np.atleast_2d(theta) - self.mean
        return self._norm - 0.5 * np.einsum("ni,ij,nj->n", d, self._prec, d)


class FlatLikelihood:
    def log_prob(self, t, theta) -> np.ndarray:
        return np.zeros(np.atleast_2d(theta).shape[0])


def log_posterior(ensemble, prior: BoxPrior, t_obs, theta) -> np.ndarray:
    """Unnormalized log posterior; ``-inf`` outside the prior box."""
    t_obs = np.asarray(t_obs, dtype=np.float64)
    if not np.all(np.isfinite(t_obs)):
        raise ValueError("observed summary contains non-finite values")
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    out = prior.log_prob(theta)
    inside = np.isfinite(out)
    if inside.any():
        out[inside] += ensemble.log_prob(t_obs[None, :], theta[inside])
    return out


@dataclass
class SamplerConfig:
    n_chains: int = 8
    n_steps: int = 2000
    burn_fraction: float = 0.25
    target_acceptance: float = 0.3
    adapt_interval: int = 50
    init_scale: float = 0.1  # initial proposal std as a fraction of prior width
    init_candidates: int = 256  # prior draws screened per chain start
    max_init_draws: int = 10_000
    rhat_threshold: float = 1.05
    seed: int = 0


@dataclass
class PosteriorSamples:
    draws: np.ndarray
    log_densities: np.ndarray
    chain_ids: np.ndarray
    acceptance_rate: np.ndarray
    rhat: np.ndarray
    names: tuple[str, ...] = ()
    converged: bool = True
    chains: np.ndarray = field(default=None, repr=False)  # (C, M_c, P) post burn-in


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-R-hat per dimension for chains of shape (C, M, P)."""
    C, M, P = chains.shape
    half = M // 2
    split = np.concatenate([chains[:, :half], chains[:, M - half :]], axis=0)
    n = split.shape[1]
    means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / W)
    # frozen chains that agree exactly count as converged
    return np.where((W == 0) & (B == 0), 1.0, rhat)


def effective_sample_size(chains: np.ndarray) -> np.ndarray:
    """Multi-chain ESS per dimension using Geyer's initial monotone sequence."""
    C, M, P = chains.shape
    ess = np.empty(P)
    for p in range(P):
        x = chains[:, :, p] - chains[:, :, p].mean(axis=1, keepdims=True)
        spec = np.fft.rfft(x, n=2 * M, axis=1)
        acov = np.fft.irfft(np.abs(spec) ** 2, axis=1)[:, :M] / M
        W = (acov[:, 0] * M / (M - 1)).mean()
        between = chains[:, :, p].mean(axis=1).var(ddof=1) if C > 1 else 0.0
        var_plus = W * (M - 1) / M + between
        if var_plus == 0:
            ess[p] = C * M
            continue
        rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        pairs = rho[: M - M % 2].reshape(-1, 2).sum(axis=1)
        tau = -1.0
        running = np.inf
        for val in pairs:
            if val <= 0:
                break
            running = min(running, val)
            tau += 2 * running
        ess[p] = C * M / max(tau, 1e-12)
    return ess


def _initial_points(log_target, prior, rngs, candidates, max_draws):
    # each chain starts at the densest of a batch of prior draws, which keeps
    # chains out of spurious corner modes of an extrapolating likelihood
    starts, values = [], []
    for rng in rngs:
        drawn = 0
        while True:
            if drawn >= max_draws:
                raise NumericalError(f"no finite-density starting point after {max_draws} prior draws")
            batch = min(candidates, max_draws - drawn)
            x = prior.sample(rng, batch)
            lp = log_target(x)
            drawn += batch
            if np.any(np.isfinite(lp)):
                best = int(np.argmax(np.where(np.isfinite(lp), lp, -np.inf)))
                break
        starts.append(x[best])
        values.append(lp[best])
    return np.array(starts), np.array(values)


def sample_posterior(ensemble, prior: BoxPrior, t_obs, config: SamplerConfig | None = None) -> PosteriorSamples:
    """Adaptive random-walk Metropolis over ``config.n_chains`` chains.

    The proposal is a Gaussian whose covariance follows the pooled burn-in
    history of all chains (``2.38**2 / P`` times the sample covariance) and
    whose per-chain size is tuned towards the target acceptance rate. A
    dense covariance matters because learned likelihoods often have nearly
    degenerate parameter directions. Adaptation stops when burn-in ends.
    """
    config = config or SamplerConfig()
    C, P, T = config.n_chains, prior.dim, config.n_steps
    burn = int(config.burn_fraction * T)

    def log_target(x):
        return log_posterior(ensemble, prior, t_obs, x)

    rngs = [stream(config.seed, f"mcmc-chain-{c}") for c in range(C)]
    x, lp = _initial_points(log_target, prior, rngs, config.init_candidates, config.max_init_draws)
    # separate streams keep a longer run's prefix identical to a shorter one
    noise = np.stack(
        [stream(config.seed, f"mcmc-proposal-{c}").standard_normal((T, P)) for c in range(C)], axis=1
    )  # (T, C, P)
    log_u = np.log(np.stack([stream(config.seed, f"mcmc-accept-{c}").random(T) for c in range(C)], axis=1))

    chol = np.diag(config.init_scale * prior.width)
    log_lam = np.zeros(C)
    trace = np.empty((T, C, P))
    trace_lp = np.empty((T, C))
    accepted = np.zeros((T, C), dtype=bool)
    jitter = np.diag((1e-6 * prior.width) ** 2)

    for step in range(T):
        prop = x + np.exp(log_lam)[:, None] * (noise[step] @ chol.T)
        lp_prop = log_target(prop)
        if np.any(np.isnan(lp_prop)):
            raise NumericalError("NaN log posterior during sampling")
        acc = log_u[step] < lp_prop - lp
        x = np.where(acc[:, None], prop, x)
        lp = np.where(acc, lp_prop, lp)
        trace[step], trace_lp[step], accepted[step] = x, lp, acc

        if step < burn and (step + 1) % config.adapt_interval == 0:
            window = accepted[step + 1 - config.adapt_interval : step + 1].mean(axis=0)
            log_lam += window - config.target_acceptance
            history = trace[(step + 1) // 2 : step + 1].reshape(-1, P)
            cov = np.atleast_2d(np.cov(history, rowvar=False)) * 2.38**2 / P
            chol = np.linalg.cholesky(cov + jitter)

    kept = trace[burn:].transpose(1, 0, 2)  # (C, M, P)
    kept_lp = trace_lp[burn:].T
    rhat = split_rhat(kept)
    converged = bool(np.all(rhat < config.rhat_threshold))
    if not converged:
        log.warning("R-hat %s exceeds %.3f", np.array2string(rhat, precision=3), config.rhat_threshold)
    M = kept.shape[1]
    return PosteriorSamples(
        draws=kept.reshape(C * M, P),
        log_densities=kept_lp.reshape(C * M),
        chain_ids=np.repeat(np.arange(C), M),
        acceptance_rate=accepted[burn:].mean(axis=0),
        rhat=rhat,
        names=prior.names,
        converged=converged,
        chains=kept,
    )


def summarize_marginals(samples: PosteriorSamples) -> dict[str, dict[str, float]]:
    draws = samples.draws
    names = samples.names or tuple(f"theta{i}" for i in range(draws.shape[1]))
    out = {}
    for i, name in enumerate(names):
        col = draws[:, i]
        p16, p50, p84 = np.percentile(col, [16, 50, 84])
        out[name] = {
            "mean": float(col.mean()),
            "std": float(col.std()),
            "p16": float(p16),
            "p50": float(p50),
            "p84": float(p84),
        }
    return out
