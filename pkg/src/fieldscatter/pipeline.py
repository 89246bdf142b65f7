"""Five-stage pipeline: simulate -> summarize -> train -> sample -> coverage.

Configuration is a single TOML file::

    seed = 1234

    [family]
    kind = "grf"              # "grf" or "lognormal"
    match_spectrum = false    # lognormal only: output spectrum follows A k^-alpha
    fixed = { g = 0.0 }       # generator parameters not being inferred

    [prior]                   # inferred parameters and their uniform box
    names = ["A", "alpha"]
    lower = [0.5, 1.0]
    upper = [2.0, 3.0]

    [grid]
    n = 128
    box_size = 1.0

    [simulate]
    n_sims = 100
    fields_per_sim = 20
    design = "uniform"        # or "latin_hypercube"
    n_test = 100              # held-out (theta, field) pairs for coverage
    observation = [1.0, 2.0]  # theta of the designated observation

    [summary]
    kind = "scattering"       # "scattering", "bandpower" or "combined"
    L = 2                     # J defaults to log2(n) - 1; B to 14

    [train]    # fields of flows.TrainConfig (seed is derived, not read)
    [sampler]  # fields of posterior.SamplerConfig (seed is derived)
    [coverage]
    n_boot = 100
    support_tolerance = 0.05  # allowed gap to the training bounding box, in prior widths

Every artifact records the config hash, code version and master seed, and
each stage refuses inputs produced under a different configuration.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bandpower import DEFAULT_BANDS, bandpowers
from .calibration import DIRECTION_NOTE, tarp_ecp
from .errors import ConfigError, FormatError, MissingArtifactError
from .fields import Field2D, ParamVector, make_grf, make_lognormal
from .filters import FilterBank, build_morlet_bank
from .flows import TrainConfig, train_ensemble
from .io import (
    SummaryDataset,
    read_dataset,
    read_ensemble,
    read_fld1,
    write_curve,
    write_dataset,
    write_ensemble,
    write_fld1,
    write_samples,
)
from .posterior import BoxPrior, SamplerConfig, sample_posterior, summarize_marginals
from .rng import derive_seed, stream
from .scattering import scatter
from .summaries import SummaryVector, combine

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("simulate", "summarize", "train", "sample", "coverage", "dump-filters")
FAMILY_PARAMS = ("A", "alpha", "g")
FAMILY_DEFAULTS = {"A": 1.0, "alpha": 2.0, "g": 0.0}


@dataclass
class FamilyConfig:
    kind: str = "grf"
    match_spectrum: bool = False
    fixed: dict = field(default_factory=dict)


@dataclass
class PriorConfig:
    names: list = field(default_factory=lambda: ["A", "alpha"])
    lower: list = field(default_factory=lambda: [0.5, 1.0])
    upper: list = field(default_factory=lambda: [2.0, 3.0])

    def box(self) -> BoxPrior:
        return BoxPrior(self.lower, self.upper, self.names)


@dataclass
class GridConfig:
    n: int = 128
    box_size: float = 1.0


@dataclass
class SimulateConfig:
    n_sims: int = 100
    fields_per_sim: int = 20
    design: str = "uniform"
    n_test: int = 100
    observation: list | None = None


@dataclass
class SummaryConfig:
    kind: str = "scattering"
    J: int | None = None
    L: int = 2
    B: int = DEFAULT_BANDS


@dataclass
class CoverageConfig:
    n_boot: int = 100
    support_tolerance: float = 0.05


@dataclass
class PipelineConfig:
    seed: int = 0
    family: FamilyConfig = field(default_factory=FamilyConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    summary: SummaryConfig = field(default_factory=SummaryConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    coverage: CoverageConfig = field(default_factory=CoverageConfig)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        sections = {f.name: f.type for f in fields(cls)}
        unknown = set(raw) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name == "seed":
                kwargs["seed"] = int(raw.get("seed", 0))
                continue
            section_cls = type(f.default_factory())
            values = dict(raw.get(f.name, {}))
            allowed = {sf.name for sf in fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{f.name}]: {sorted(bad)}")
            if "block_counts" in values:
                values["block_counts"] = tuple(values["block_counts"])
            try:
                kwargs[f.name] = section_cls(**values)
            except TypeError as exc:
                raise ConfigError(f"[{f.name}]: {exc}") from None
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw)

    def validate(self) -> None:
        try:
            prior = self.prior.box()
        except ValueError as exc:
            raise ConfigError(f"[prior]: {exc}") from None
        if self.family.kind not in ("grf", "lognormal"):
            raise ConfigError(f"unknown field family {self.family.kind!r}")
        for name in prior.names:
            if name not in FAMILY_PARAMS:
                raise ConfigError(f"parameter {name!r} is not generated by the {self.family.kind} family")
        if self.family.kind == "grf" and ("g" in prior.names or self.family.fixed.get("g", 0)):
            raise ConfigError("the grf family has no g parameter; use kind = 'lognormal'")
        n = self.grid.n
        if n < 32 or n & (n - 1):
            raise ConfigError(f"grid n must be a power of two >= 32, got {n}")
        if self.summary.kind not in ("scattering", "bandpower", "combined"):
            raise ConfigError(f"unknown summary kind {self.summary.kind!r}")
        if self.summary.J is not None and 2**self.summary.J > n // 2:
            raise ConfigError(f"J={self.summary.J} exceeds log2(n) - 1 for n={n}")
        if self.simulate.design not in ("uniform", "latin_hypercube"):
            raise ConfigError(f"unknown design {self.simulate.design!r}")
        obs = self.simulate.observation
        if obs is not None and (len(obs) != prior.dim or not np.all(prior.contains(np.array(obs)))):
            raise ConfigError("observation theta must lie inside the prior box")

    def content(self) -> dict:
        out = asdict(self)
        out.pop("seed")
        out["train"].pop("seed")
        out["sampler"].pop("seed")
        return out

    @property
    def hash(self) -> str:
        blob = json.dumps(self.content(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed(self, seed: int | None) -> "PipelineConfig":
        return self if seed is None else replace(self, seed=int(seed))


# ---- helpers --------------------------------------------------------------------


def provenance(config: PipelineConfig) -> dict:
    return {"config_hash": config.hash, "code_version": __version__, "seed": config.seed}


def check_provenance(meta: dict, config: PipelineConfig, what: str) -> None:
    expected = provenance(config)
    for key in ("config_hash", "seed"):
        if str(meta.get(key)) != str(expected[key]):
            raise FormatError(
                f"{what} was produced with {key}={meta.get(key)!r}, current run has {expected[key]!r}"
            )


def generator_params(config: PipelineConfig, theta) -> ParamVector:
    values = dict(FAMILY_DEFAULTS)
    values.update(config.family.fixed)
    values.update(zip(config.prior.names, np.asarray(theta, dtype=float)))
    return ParamVector([values[k] for k in FAMILY_PARAMS], FAMILY_PARAMS)


def simulate_field(config: PipelineConfig, theta, seed: int) -> Field2D:
    params = generator_params(config, theta)
    n, box = config.grid.n, config.grid.box_size
    if config.family.kind == "lognormal":
        field_ = make_lognormal(params, n, box, seed, match_spectrum=config.family.match_spectrum)
    else:
        field_ = make_grf(params, n, box, seed)
    # record only the inferred parameters on the field
    return Field2D(field_.data, box, ParamVector(theta, config.prior.names), seed, field_.g)


def design_points(prior: BoxPrior, n: int, design: str, rng: np.random.Generator) -> np.ndarray:
    if design == "latin_hypercube":
        # one point per stratum in every dimension, strata shuffled independently
        strata = np.stack([rng.permutation(n) for _ in range(prior.dim)], axis=1)
        unit = (strata + rng.random((n, prior.dim))) / n
        return prior.lower + unit * prior.width
    return prior.sample(rng, n)


def make_bank(config: PipelineConfig) -> FilterBank:
    return build_morlet_bank(config.grid.n, config.summary.J, config.summary.L)


def summarize_field(field_: Field2D, config: PipelineConfig, bank: FilterBank | None) -> SummaryVector:
    kind = config.summary.kind
    prov = {"seed": field_.seed}
    parts = []
    if kind in ("scattering", "combined"):
        parts.append(scatter(field_, bank).to_summary(prov))
    if kind in ("bandpower", "combined"):
        parts.append(bandpowers(field_, config.summary.B).to_summary(prov))
    out = parts[0]
    for extra in parts[1:]:
        out = combine(out, extra)
    return out


def check_support(prior: BoxPrior, theta_train: np.ndarray, tolerance: float) -> None:
    """The sampling prior must sit inside the training parameter bounding box."""
    slack = tolerance * prior.width
    lo, hi = theta_train.min(axis=0), theta_train.max(axis=0)
    if np.any(prior.lower < lo - slack) or np.any(prior.upper > hi + slack):
        raise ConfigError(
            f"prior box [{prior.lower}, {prior.upper}] exceeds training support [{lo}, {hi}]"
        )


class Paths:
    def __init__(self, out):
        self.root = Path(out)
        self.fields = self.root / "fields"
        self.manifest = self.root / "simulate.json"
        self.summaries = self.root / "summaries"
        self.models = self.root / "models"
        self.posterior = self.root / "posterior.csv"
        self.marginals = self.root / "posterior_summary.json"
        self.coverage = self.root / "coverage.csv"
        self.filters = self.root / "filters"


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{path} is missing; run the {stage!r} stage first")
    return path


# ---- stages ---------------------------------------------------------------------


def stage_simulate(config: PipelineConfig, paths: Paths) -> int:
    prior = config.prior.box()
    seed = derive_seed(config.seed, "simulate")
    sim = config.simulate
    rng = stream(seed, "design")
    thetas = design_points(prior, sim.n_sims, sim.design, rng)
    test_thetas = prior.sample(rng, sim.n_test)
    obs_theta = np.array(sim.observation) if sim.observation is not None else test_thetas[0]

    for sub in ("train", "test"):
        (paths.fields / sub).mkdir(parents=True, exist_ok=True)
    entries = {"train": [], "test": []}
    for i, theta in enumerate(thetas):
        for s in range(sim.fields_per_sim):
            name = f"train/sim{i:05d}_f{s:02d}.fld1"
            write_fld1(paths.fields / name, simulate_field(config, theta, derive_seed(seed, f"train-{i}-{s}")))
            entries["train"].append(name)
    for i, theta in enumerate(test_thetas):
        name = f"test/test{i:05d}.fld1"
        write_fld1(paths.fields / name, simulate_field(config, theta, derive_seed(seed, f"test-{i}")))
        entries["test"].append(name)
    write_fld1(paths.fields / "observation.fld1", simulate_field(config, obs_theta, derive_seed(seed, "observation")))
    manifest = {**provenance(config), "names": list(prior.names), **entries, "observation": "observation.fld1"}
    paths.manifest.write_text(json.dumps(manifest, indent=1))
    log.info("simulated %d training and %d test fields", len(entries["train"]), len(entries["test"]))
    return 0


def _load_manifest(config: PipelineConfig, paths: Paths) -> dict:
    manifest = json.loads(_require(paths.manifest, "simulate").read_text())
    check_provenance(manifest, config, "simulate.json")
    return manifest


def stage_summarize(config: PipelineConfig, paths: Paths) -> int:
    manifest = _load_manifest(config, paths)
    names = manifest["names"]
    bank = make_bank(config) if config.summary.kind != "bandpower" else None
    paths.summaries.mkdir(parents=True, exist_ok=True)
    header = {
        **provenance(config),
        "summary": config.summary.kind,
        "J": bank.J if bank is not None else "",
        "L": config.summary.L,
        "B": config.summary.B,
        "n": config.grid.n,
        "box_size": config.grid.box_size,
    }
    groups = {"train": manifest["train"], "test": manifest["test"], "observation": [manifest["observation"]]}
    for group, files in groups.items():
        theta, rows, labels = [], [], None
        for name in files:
            f = read_fld1(_require(paths.fields / name, "simulate"), names)
            summary = summarize_field(f, config, bank)
            if labels is None:
                labels = summary.schema
            elif summary.schema != labels:
                raise FormatError(f"{name}: summary schema changed within a dataset")
            theta.append(f.params.values)
            rows.append(summary.values)
        ds = SummaryDataset(np.array(theta), np.array(rows), tuple(names), labels, header)
        write_dataset(paths.summaries / f"{group}.csv", ds)
    return 0


def _load_summaries(config: PipelineConfig, paths: Paths, group: str) -> SummaryDataset:
    ds = read_dataset(_require(paths.summaries / f"{group}.csv", "summarize"))
    check_provenance(ds.header, config, f"summaries/{group}.csv")
    if list(ds.theta_names) != list(config.prior.names):
        raise FormatError(f"summaries/{group}.csv parameters {ds.theta_names} differ from the prior")
    return ds


def inactive_columns(config: PipelineConfig, labels) -> np.ndarray:
    # Gaussian fields have zero mean by construction, so S0 is pure roundoff
    return np.array([config.family.kind == "grf" and lab == "S0" for lab in labels])


def train_config(config: PipelineConfig) -> TrainConfig:
    return replace(config.train, seed=derive_seed(config.seed, "train"))


def stage_train(config: PipelineConfig, paths: Paths) -> int:
    ds = _load_summaries(config, paths, "train")
    try:
        ensemble = train_ensemble(ds.theta, ds.t, train_config(config), inactive_columns(config, ds.labels))
    except ValueError as exc:
        raise ConfigError(f"cannot train on summaries/train.csv: {exc}") from None
    meta = {**provenance(config), "labels": list(ds.labels), "names": list(ds.theta_names)}
    write_ensemble(paths.models, ensemble, meta)
    degraded = sum(m.degraded for m in ensemble.members)
    log.info("stacking weights %s", np.array2string(ensemble.stack_weights, precision=3))
    return 4 if degraded == len(ensemble.members) else 0


def _load_ensemble(config: PipelineConfig, paths: Paths, labels):
    _require(paths.models / "ensemble.json", "train")
    ensemble, meta = read_ensemble(paths.models)
    check_provenance(meta, config, "models/ensemble.json")
    if list(meta["labels"]) != list(labels):
        raise FormatError("summary schema differs from the one the flows were trained on")
    return ensemble


def sampler_config(config: PipelineConfig, tag: str) -> SamplerConfig:
    return replace(config.sampler, seed=derive_seed(config.seed, tag))


def stage_sample(config: PipelineConfig, paths: Paths, strict: bool = False) -> int:
    prior = config.prior.box()
    train = _load_summaries(config, paths, "train")
    obs = _load_summaries(config, paths, "observation")
    check_support(prior, train.theta, config.coverage.support_tolerance)
    ensemble = _load_ensemble(config, paths, obs.labels)
    samples = sample_posterior(ensemble, prior, obs.t[0], sampler_config(config, "sample"))
    meta = {
        **provenance(config),
        "theta_true": " ".join(format(v, ".17g") for v in obs.theta[0]),
        "rhat": " ".join(format(v, ".6g") for v in samples.rhat),
        "converged": samples.converged,
    }
    write_samples(paths.posterior, samples, meta)
    marginals = summarize_marginals(samples)
    paths.marginals.write_text(json.dumps({"meta": meta, "marginals": marginals}, indent=2))
    if not samples.converged and strict:
        return 5
    return 0


def stage_coverage(config: PipelineConfig, paths: Paths, strict: bool = False) -> int:
    prior = config.prior.box()
    train = _load_summaries(config, paths, "train")
    test = _load_summaries(config, paths, "test")
    check_support(prior, train.theta, config.coverage.support_tolerance)
    ensemble = _load_ensemble(config, paths, test.labels)
    pairs, unconverged = [], 0
    for i in range(test.t.shape[0]):
        samples = sample_posterior(ensemble, prior, test.t[i], sampler_config(config, f"coverage-{i}"))
        unconverged += not samples.converged
        pairs.append((test.theta[i], samples.draws))
    curve = tarp_ecp(pairs, prior, seed=derive_seed(config.seed, "tarp"), n_boot=config.coverage.n_boot)
    meta = {
        **provenance(config),
        "n_realisations": curve.n_realisations,
        "unconverged_posteriors": unconverged,
        "within_3sigma": bool(curve.within_band(3).all()),
        "direction": DIRECTION_NOTE,
    }
    write_curve(paths.coverage, curve, meta)
    if unconverged and strict:
        return 5
    return 0


def stage_dump_filters(config: PipelineConfig, paths: Paths) -> int:
    bank = make_bank(config)
    paths.filters.mkdir(parents=True, exist_ok=True)
    for j in range(bank.J):
        for chi in range(bank.L):
            f = Field2D(np.abs(bank.psi_hat[j, chi]), float(bank.n))
            write_fld1(paths.filters / f"psi_j{j}_l{chi}.fld1", f)
    write_fld1(paths.filters / "phi.fld1", Field2D(np.abs(bank.phi_hat), float(bank.n)))
    return 0


def run_stage(config: PipelineConfig, stage: str, out, strict: bool = False) -> int:
    paths = Paths(out)
    paths.root.mkdir(parents=True, exist_ok=True)
    if stage == "simulate":
        return stage_simulate(config, paths)
    if stage == "summarize":
        return stage_summarize(config, paths)
    if stage == "train":
        return stage_train(config, paths)
    if stage == "sample":
        return stage_sample(config, paths, strict)
    if stage == "coverage":
        return stage_coverage(config, paths, strict)
    if stage == "dump-filters":
        return stage_dump_filters(config, paths)
    raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")


def run_all(config: PipelineConfig, out, strict: bool = False) -> int:
    for stage in ("simulate", "summarize", "train", "sample", "coverage"):
        status = run_stage(config, stage, out, strict)
        if status:
            return status
    return 0
