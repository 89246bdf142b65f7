"""Repeated-observation comparison of summary statistics.

Fits one likelihood per summary choice (scattering, bandpowers, both) on a
shared simulation set, then compares posterior widths over many independent
observations at a fixed truth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .flows import train_ensemble
from .pipeline import (
    PipelineConfig,
    check_support,
    design_points,
    inactive_columns,
    make_bank,
    sampler_config,
    simulate_field,
    summarize_field,
    train_config,
)
from .posterior import sample_posterior
from .rng import derive_seed, stream

log = logging.getLogger(__name__)

SUMMARY_KINDS = ("scattering", "bandpower", "combined")


@dataclass
class ComparisonResult:
    truth: np.ndarray
    names: tuple[str, ...]
    posterior_std: dict  # kind -> (n_obs, P)
    posterior_mean: dict
    rhat: dict
    stack_weights: dict

    def std_of(self, kind: str, name: str) -> np.ndarray:
        return self.posterior_std[kind][:, self.names.index(name)]


def _columns(labels, kind):
    if kind == "scattering":
        return np.array([lab.startswith("S") for lab in labels])
    if kind == "bandpower":
        return np.array([lab.startswith("BP_") for lab in labels])
    return np.ones(len(labels), dtype=bool)


def simulate_summaries(config: PipelineConfig, thetas, tag: str):
    """Combined summaries of one field per parameter row."""
    bank = make_bank(config)
    rows, labels = [], None
    for i, theta in enumerate(thetas):
        f = simulate_field(config, theta, derive_seed(config.seed, f"{tag}-{i}"))
        s = summarize_field(f, config, bank)
        labels = s.schema
        rows.append(s.values)
    return np.array(rows), labels


def compare_summaries(config: PipelineConfig, truth, n_obs: int = 20) -> ComparisonResult:
    if config.summary.kind != "combined":
        raise ValueError("the comparison needs combined summaries")
    prior = config.prior.box()
    truth = np.asarray(truth, dtype=np.float64)
    sim = config.simulate
    thetas = design_points(prior, sim.n_sims * sim.fields_per_sim, sim.design, stream(config.seed, "design"))
    check_support(prior, thetas, config.coverage.support_tolerance)
    t_train, labels = simulate_summaries(config, thetas, "train")
    t_obs, _ = simulate_summaries(config, np.tile(truth, (n_obs, 1)), "observation")
    log.info("simulated %d training and %d observed fields", thetas.shape[0], n_obs)

    stds, means, rhats, weights = {}, {}, {}, {}
    for kind in SUMMARY_KINDS:
        cols = _columns(labels, kind)
        sub_labels = [lab for lab, c in zip(labels, cols) if c]
        inactive = inactive_columns(config, sub_labels)
        ensemble = train_ensemble(thetas, t_train[:, cols], train_config(config), inactive)
        weights[kind] = ensemble.stack_weights
        s_rows, m_rows, r_rows = [], [], []
        for i in range(n_obs):
            samples = sample_posterior(ensemble, prior, t_obs[i, cols], sampler_config(config, f"obs-{i}"))
            s_rows.append(samples.draws.std(axis=0))
            m_rows.append(samples.draws.mean(axis=0))
            r_rows.append(samples.rhat)
        stds[kind], means[kind], rhats[kind] = np.array(s_rows), np.array(m_rows), np.array(r_rows)
        log.info("%s: median posterior std %s", kind, np.array2string(np.median(stds[kind], axis=0), precision=4))
    return ComparisonResult(truth, prior.names, stds, means, rhats, weights)
