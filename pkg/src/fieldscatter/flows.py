"""Conditional masked autoregressive flows for neural likelihood estimation.

Each MADE block maps a summary ``x`` (dimension D) and conditioning
parameters ``theta`` (dimension P) to per-dimension shifts ``mu`` and
log-scales ``s`` with ``mu_i, s_i`` depending only on ``x_{<i}`` and
``theta``. Density evaluation runs ``u = (x - mu) * exp(-s)`` through every
block in one pass; sampling inverts the blocks one dimension at a time.

Gradients are derived by hand (no autodiff framework); ``loss_and_grad`` is
checked against finite differences in the test suite.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .rng import stream

log = logging.getLogger(__name__)

LOG_SCALE_CLAMP = 7.0
HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


@dataclass
class TrainConfig:
    block_counts: tuple[int, ...] = (3, 4, 5, 6)
    hidden_layers: int = 4
    hidden_width: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 500
    patience: int = 30
    validation_fraction: float = 0.1
    lr_decay: float = 0.5  # applied after each third of `patience` without improvement
    seed: int = 0


def hidden_degrees(D: int, width: int) -> np.ndarray:
    # degree 0 units see only theta, so the first output still depends on it
    return np.arange(width) % max(D, 1)


class MadeBlock:
    """Masked feed-forward network with tanh hidden layers."""

    def __init__(self, D: int, P: int, hidden: list[int], degrees: list[np.ndarray] | None = None):
        self.D, self.P, self.hidden = D, P, list(hidden)
        if degrees is None:
            degrees = [hidden_degrees(D, w) for w in hidden]
        self.degrees = [np.asarray(d, dtype=np.int64) for d in degrees]
        in_deg = np.arange(1, D + 1)
        masks = {"W0": (in_deg[None, :] <= self.degrees[0][:, None]).astype(float)}
        for l in range(1, len(hidden)):
            masks[f"W{l}"] = (self.degrees[l - 1][None, :] <= self.degrees[l][:, None]).astype(float)
        out = (self.degrees[-1][None, :] < in_deg[:, None]).astype(float)
        masks["Wmu"] = out
        masks["Ws"] = out
        self.masks = masks
        self.params = self._zero_params()

    def _zero_params(self) -> dict[str, np.ndarray]:
        h = self.hidden
        p = {"W0": np.zeros((h[0], self.D)), "V0": np.zeros((h[0], self.P)), "b0": np.zeros(h[0])}
        for l in range(1, len(h)):
            p[f"W{l}"] = np.zeros((h[l], h[l - 1]))
            p[f"b{l}"] = np.zeros(h[l])
        p["Wmu"] = np.zeros((self.D, h[-1]))
        p["bmu"] = np.zeros(self.D)
        p["Ws"] = np.zeros((self.D, h[-1]))
        p["bs"] = np.zeros(self.D)
        return p

    def initialize(self, rng: np.random.Generator, output_scale: float = 0.01) -> None:
        for name, value in self.params.items():
            if name.startswith("b"):
                value[...] = 0.0
                continue
            bound = 1.0 / np.sqrt(value.shape[1])
            if name in ("Wmu", "Ws"):
                bound *= output_scale
            value[...] = rng.uniform(-bound, bound, size=value.shape)
            if name in self.masks:
                value *= self.masks[name]

    def _weight(self, name):
        w = self.params[name]
        return w * self.masks[name] if name in self.masks else w

    def forward(self, x: np.ndarray, theta: np.ndarray, keep: bool = False):
        p = self.params
        acts = []
        h = np.tanh(x @ self._weight("W0").T + theta @ p["V0"].T + p["b0"])
        acts.append(h)
        for l in range(1, len(self.hidden)):
            h = np.tanh(h @ self._weight(f"W{l}").T + p[f"b{l}"])
            acts.append(h)
        mu = h @ self._weight("Wmu").T + p["bmu"]
        raw = h @ self._weight("Ws").T + p["bs"]
        s = np.clip(raw, -LOG_SCALE_CLAMP, LOG_SCALE_CLAMP)
        if keep:
            return mu, s, (acts, raw)
        return mu, s

    def transform(self, x, theta, keep=False):
        """Density direction: returns ``u`` and per-sample log|det du/dx|."""
        out = self.forward(x, theta, keep)
        mu, s = out[0], out[1]
        u = (x - mu) * np.exp(-s)
        logdet = -s.sum(axis=1)
        if keep:
            return u, logdet, (x, theta, mu, s, u) + out[2]
        return u, logdet

    def inverse(self, u, theta):
        x = np.zeros_like(u)
        for i in range(self.D):
            mu, s = self.forward(x, theta)
            x[:, i] = u[:, i] * np.exp(s[:, i]) + mu[:, i]
        return x

    def backward(self, gu, gld, cache):
        """Gradients of a loss given dL/du and dL/dlogdet (per sample).

        Returns ``(param_grads, dL/dx)``.
        """
        x, theta, mu, s, u, acts, raw = cache
        es = np.exp(-s)
        gx = gu * es
        gmu = -gx
        gs = -gu * u - gld[:, None]
        graw = gs * (np.abs(raw) < LOG_SCALE_CLAMP)
        grads = {}
        h = acts[-1]
        grads["Wmu"] = (gmu.T @ h) * self.masks["Wmu"]
        grads["bmu"] = gmu.sum(axis=0)
        grads["Ws"] = (graw.T @ h) * self.masks["Ws"]
        grads["bs"] = graw.sum(axis=0)
        gh = gmu @ self._weight("Wmu") + graw @ self._weight("Ws")
        for l in range(len(self.hidden) - 1, 0, -1):
            ga = gh * (1.0 - acts[l] ** 2)
            grads[f"W{l}"] = (ga.T @ acts[l - 1]) * self.masks[f"W{l}"]
            grads[f"b{l}"] = ga.sum(axis=0)
            gh = ga @ self._weight(f"W{l}")
        ga = gh * (1.0 - acts[0] ** 2)
        grads["W0"] = (ga.T @ x) * self.masks["W0"]
        grads["V0"] = ga.T @ theta
        grads["b0"] = ga.sum(axis=0)
        gx = gx + ga @ self._weight("W0")
        return grads, gx


def made_forward(block: MadeBlock, t, theta):
    """Shifts and clamped log-scales for a single summary or a batch."""
    t = np.asarray(t, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    single = t.ndim == 1
    t2, th2 = np.atleast_2d(t), np.atleast_2d(theta)
    if t2.shape[1] != block.D or th2.shape[1] != block.P:
        raise ValueError(
            f"expected dims (D={block.D}, P={block.P}), got ({t2.shape[1]}, {th2.shape[1]})"
        )
    if not (np.all(np.isfinite(t2)) and np.all(np.isfinite(th2))):
        raise ValueError("non-finite inputs to MADE block")
    mu, s = block.forward(t2, th2)
    return (mu[0], s[0]) if single else (mu, s)


@dataclass
class Standardizer:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Standardizer":
        shift = data.mean(axis=0)
        scale = data.std(axis=0)
        return cls(shift, np.where(scale > 0, scale, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, data):
        return (data - self.shift) / self.scale


def degenerate_columns(t: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Columns whose spread is negligible next to the largest column magnitude."""
    spread = t.std(axis=0)
    magnitude = np.sqrt(t.mean(axis=0) ** 2 + spread**2).max()
    return spread <= rel_tol * magnitude


class MafModel:
    """Stack of MADE blocks with a fixed reversal between consecutive blocks.

    Summary columns flagged in ``~active`` (constant across the training set)
    are ignored by the density.
    """

    def __init__(
        self,
        D: int,
        P: int,
        n_blocks: int,
        hidden_layers: int = 4,
        hidden_width: int = 50,
        active: np.ndarray | None = None,
        t_std: Standardizer | None = None,
        theta_std: Standardizer | None = None,
    ):
        self.D_full, self.P = D, P
        self.active = np.ones(D, bool) if active is None else np.asarray(active, bool)
        self.D = int(self.active.sum())
        self.hidden = [hidden_width] * hidden_layers
        self.blocks = [MadeBlock(self.D, P, self.hidden) for _ in range(n_blocks)]
        self.t_std = t_std or Standardizer.identity(D)
        self.theta_std = theta_std or Standardizer.identity(P)
        self.degraded = False
        self.best_validation_ll: float | None = None
        self.history: list[float] = []

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    # ---- internal coordinates -------------------------------------------------

    def _prepare(self, t, theta):
        t = np.atleast_2d(np.asarray(t, dtype=np.float64))
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        if t.shape[1] != self.D_full or theta.shape[1] != self.P:
            raise ValueError(
                f"expected dims (D={self.D_full}, P={self.P}), got ({t.shape[1]}, {theta.shape[1]})"
            )
        if t.shape[0] != theta.shape[0]:
            if t.shape[0] == 1:
                t = np.broadcast_to(t, (theta.shape[0], t.shape[1]))
            elif theta.shape[0] == 1:
                theta = np.broadcast_to(theta, (t.shape[0], theta.shape[1]))
            else:
                raise ValueError("batch sizes of t and theta differ")
        z = self.t_std(t)[:, self.active]
        return z, self.theta_std(theta)

    def _log_jacobian_of_standardizer(self) -> float:
        return -float(np.log(self.t_std.scale[self.active]).sum())

    def to_base(self, z, th, keep=False):
        """Internal summary ``z`` -> base ``u`` with total log|det|."""
        x = z
        logdet = np.zeros(z.shape[0])
        caches = []
        for b, block in enumerate(self.blocks):
            if b > 0:
                x = x[:, ::-1]
            out = block.transform(x, th, keep)
            x, ld = out[0], out[1]
            logdet = logdet + ld
            if keep:
                caches.append(out[2])
        return (x, logdet, caches) if keep else (x, logdet)

    def from_base(self, u, th):
        x = u
        for b in range(self.n_blocks - 1, -1, -1):
            x = self.blocks[b].inverse(x, th)
            if b > 0:
                x = x[:, ::-1]
        return x

    def internal_log_prob(self, z, th):
        u, logdet = self.to_base(z, th)
        return -0.5 * (u**2).sum(axis=1) - self.D * HALF_LOG_2PI + logdet

    # ---- public API -----------------------------------------------------------

    def log_prob(self, t, theta) -> np.ndarray:
        """log q(t | theta) in the original units; batched over rows."""
        z, th = self._prepare(t, theta)
        with np.errstate(over="ignore", invalid="ignore"):
            lp = self.internal_log_prob(z, th) + self._log_jacobian_of_standardizer()
        if not np.all(np.isfinite(lp)):
            raise NumericalError("non-finite log density in flow evaluation")
        return lp

    def sample(self, theta, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` summaries at one ``theta``; inactive columns get their mean."""
        th = self.theta_std(np.broadcast_to(np.asarray(theta, float), (n, self.P)))
        z = self.from_base(rng.standard_normal((n, self.D)), th)
        t = np.tile(self.t_std.shift, (n, 1))
        t[:, self.active] = z * self.t_std.scale[self.active] + self.t_std.shift[self.active]
        return t

    def parameters(self):
        """Yield ``(block_index, name, array)`` for every trainable array."""
        for b, block in enumerate(self.blocks):
            for name, value in block.params.items():
                yield b, name, value

    def loss_and_grad(self, z, th):
        """Mean negative log-likelihood in internal coordinates and its gradient."""
        n = z.shape[0]
        u, logdet, caches = self.to_base(z, th, keep=True)
        lp = -0.5 * (u**2).sum(axis=1) - self.D * HALF_LOG_2PI + logdet
        loss = -lp.mean()
        gu = u / n
        gld = np.full(n, -1.0 / n)
        grads = [None] * self.n_blocks
        for b in range(self.n_blocks - 1, -1, -1):
            grads[b], gx = self.blocks[b].backward(gu, gld, caches[b])
            if b > 0:
                gu = gx[:, ::-1]
        return loss, grads


def log_prob(model: MafModel, t, theta) -> float:
    """Scalar convenience wrapper around :meth:`MafModel.log_prob`."""
    return float(model.log_prob(t, theta)[0])


maf_logprob = log_prob


class Adam:
    def __init__(self, model: MafModel, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [{k: np.zeros_like(v) for k, v in blk.params.items()} for blk in model.blocks]
        self.v = copy.deepcopy(self.m)
        self.t = 0

    def step(self, model: MafModel, grads) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for b, block in enumerate(model.blocks):
            for name, value in block.params.items():
                g = grads[b][name]
                m = self.m[b][name]
                v = self.v[b][name]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def split_indices(n: int, validation_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = stream(seed, "train-validation-split").permutation(n)
    n_val = max(1, int(round(validation_fraction * n)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _check_dataset(theta, t):
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if theta.shape[0] != t.shape[0]:
        raise ValueError("theta and t have different numbers of rows")
    if theta.shape[0] < 100:
        raise ValueError(f"need at least 100 training pairs, got {theta.shape[0]}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(t))):
        raise ValueError("training data contains NaN or inf")
    return theta, t


def fit_flow(
    theta_train,
    t_train,
    theta_val,
    t_val,
    n_blocks: int,
    config: TrainConfig,
    inactive: np.ndarray | None = None,
) -> MafModel:
    """Train one flow on a fixed train/validation split.

    ``inactive`` marks summary columns to ignore on top of those detected as
    constant.
    """
    active = ~degenerate_columns(t_train)
    if inactive is not None:
        active &= ~np.asarray(inactive, dtype=bool)
    if not active.any():
        raise ValueError("every summary column is constant")
    model = MafModel(
        t_train.shape[1],
        theta_train.shape[1],
        n_blocks,
        config.hidden_layers,
        config.hidden_width,
        active=active,
        t_std=Standardizer.fit(t_train),
        theta_std=Standardizer.fit(theta_train),
    )
    init_rng = stream(config.seed, f"maf-init-{n_blocks}")
    for block in model.blocks:
        block.initialize(init_rng)
    batch_rng = stream(config.seed, f"maf-batches-{n_blocks}")

    z, th = model._prepare(t_train, theta_train)
    zv, thv = model._prepare(t_val, theta_val)
    offset = model._log_jacobian_of_standardizer()

    def validation_ll():
        with np.errstate(over="ignore", invalid="ignore"):
            val = model.internal_log_prob(zv, thv).mean() + offset
        return float(val) if np.isfinite(val) else -np.inf

    opt = Adam(model, config.learning_rate)
    initial = best = validation_ll()
    best_params = copy.deepcopy([blk.params for blk in model.blocks])
    stale = 0
    n = z.shape[0]
    for epoch in range(config.max_epochs):
        order = batch_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = model.loss_and_grad(z[idx], th[idx])
            opt.step(model, grads)
        current = validation_ll()
        model.history.append(current)
        if current > best:
            best, stale = current, 0
            best_params = copy.deepcopy([blk.params for blk in model.blocks])
        else:
            stale += 1
            if stale >= config.patience:
                break
            if stale % max(1, config.patience // 3) == 0:
                opt.lr *= config.lr_decay
    for block, params in zip(model.blocks, best_params):
        block.params = params
    model.best_validation_ll = best
    model.degraded = not best > initial
    if model.degraded:
        log.warning("flow with %d blocks did not improve on its initialization", n_blocks)
    log.info("flow %d blocks: %d epochs, best validation LL %.4f", n_blocks, len(model.history), best)
    return model


def train_flow(theta, t, config: TrainConfig, n_blocks: int | None = None, inactive=None) -> MafModel:
    """Maximum-likelihood training with early stopping on a held-out split."""
    theta, t = _check_dataset(theta, t)
    tr, va = split_indices(theta.shape[0], config.validation_fraction, config.seed)
    if n_blocks is None:
        n_blocks = config.block_counts[0]
    return fit_flow(theta[tr], t[tr], theta[va], t[va], n_blocks, config, inactive)


@dataclass
class FlowEnsemble:
    members: list[MafModel]
    stack_weights: np.ndarray
    validation_ll: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def log_prob(self, t, theta) -> np.ndarray:
        logs = np.stack([m.log_prob(t, theta) for m in self.members])
        with np.errstate(divide="ignore"):
            logw = np.log(self.stack_weights)[:, None]
        peak = (logs + logw).max(axis=0)
        return peak + np.log(np.exp(logs + logw - peak).sum(axis=0))


def stacking_weights(validation_ll) -> np.ndarray:
    v = np.asarray(validation_ll, dtype=np.float64)
    w = np.exp(v - v.max())
    return w / w.sum()


def stack_ensemble(members: list[MafModel], theta_val, t_val) -> FlowEnsemble:
    """Weight members by the softmax of their mean validation log-likelihood."""
    if not members:
        raise ValueError("cannot stack an empty member list")
    val = np.array([m.log_prob(t_val, theta_val).mean() for m in members])
    return FlowEnsemble(list(members), stacking_weights(val), val)


def train_ensemble(theta, t, config: TrainConfig, inactive=None) -> FlowEnsemble:
    """One flow per entry of ``config.block_counts``, on a shared split."""
    theta, t = _check_dataset(theta, t)
    tr, va = split_indices(theta.shape[0], config.validation_fraction, config.seed)
    members = [
        fit_flow(theta[tr], t[tr], theta[va], t[va], nb, config, inactive)
        for nb in config.block_counts
    ]
    return stack_ensemble(members, theta[va], t[va])
