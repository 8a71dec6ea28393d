"""Empirical risk minimization of the transformer over episode corpora.

Training minimizes the average squared prediction error over episodes,
by Adam (default) or momentum SGD, with a constant or cosine learning
rate.  Streaming mode draws fresh episodes every step, approximating the
infinite-corpus regime; fixed-corpus mode cycles through the first T
stream episodes.  The loss is computed on the unclipped network; the
clip is applied only at evaluation.

Everything is deterministic given the seed: per-step data comes from
counter-derived streams and gradients reduce in a fixed order.
"""

from dataclasses import dataclass, field, asdict
import csv
import time

import numpy as np

from . import autodiff as ad
from . import priors as pr
from . import tasks as tk
from . import transformer as tfm
from .errors import DivergenceError
from .seeding import STREAM_INIT, STREAM_TRAIN, STREAM_VALIDATION, child_rng


@dataclass(frozen=True)
class TrainConfig:
    corpus_size: int = 100_000
    batch_size: int = 32
    steps: int = 2_000
    optimizer: str = "adam"        # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.0
    learning_rate: float = 1e-3
    schedule: str = "cosine"       # "constant" | "cosine"
    seed: int = 0
    regenerate: bool = True        # stream fresh episodes each step
    vary_context: bool = False
    val_every: int = 0
    val_episodes: int = 200

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.steps < 1 or self.batch_size < 1 or self.corpus_size < 1:
            raise ValueError("steps, batch_size and corpus_size must be positive")
        if self.vary_context and not self.regenerate:
            raise ValueError("variable-length contexts need streaming mode")

    def epochs(self) -> float:
        """Corpus passes implied by steps x batch in fixed-corpus mode."""
        return self.steps * self.batch_size / self.corpus_size


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (step, loss, lr, val_risk|None)
    wall_time: float = 0.0

    def record(self, step, loss, lr, val_risk=None):
        self.rows.append((step, float(loss), float(lr),
                          None if val_risk is None else float(val_risk)))

    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss", "lr", "val_risk"])
            for step, loss, lr, val in self.rows:
                w.writerow([step, repr(loss), repr(lr), "" if val is None else repr(val)])


def lr_at(cfg: TrainConfig, step: int) -> float:
    if cfg.schedule == "constant":
        return cfg.learning_rate
    frac = step / max(cfg.steps, 1)
    return cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * frac))


class OptimizerState:
    """Adam moments or SGD velocity, one slot per parameter tensor."""

    def __init__(self, cfg: TrainConfig, arrays):
        self.cfg = cfg
        self.step = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays] if cfg.optimizer == "adam" else None

    def apply(self, arrays, grads, lr: float):
        self.step += 1
        c = self.cfg
        if c.optimizer == "adam":
            bc1 = 1.0 - c.beta1 ** self.step
            bc2 = 1.0 - c.beta2 ** self.step
            for a, g, m, v in zip(arrays, grads, self.m, self.v):
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * g * g
                a -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)
        else:
            for a, g, m in zip(arrays, grads, self.m):
                m *= c.momentum
                m += g
                a -= lr * m

    def tensors(self, names):
        out = {}
        for i, name in enumerate(names):
            out[f"opt.m.{name}"] = self.m[i]
            if self.v is not None:
                out[f"opt.v.{name}"] = self.v[i]
        return out

    def restore(self, names, extra):
        for i, name in enumerate(names):
            if f"opt.m.{name}" in extra:
                self.m[i][...] = extra[f"opt.m.{name}"]
            if self.v is not None and f"opt.v.{name}" in extra:
                self.v[i][...] = extra[f"opt.v.{name}"]


# ---------------------------------------------------------------------------
# Batch assembly
# ---------------------------------------------------------------------------

def _episodes_to_arrays(episodes):
    xs = np.stack([ep.xs for ep in episodes])
    ys = np.stack([ep.ys for ep in episodes])
    queries = np.stack([ep.query for ep in episodes])
    targets = np.array([ep.target for ep in episodes])
    return xs, ys, queries, targets


def _stream_batch(prior, n, noise, sampler, cfg: TrainConfig, step: int):
    """Fresh batch for one streaming step; vectorized on the fast Haar path."""
    rng = child_rng(cfg.seed, STREAM_TRAIN, step)
    B = cfg.batch_size
    n_t = int(rng.integers(1, n + 1)) if cfg.vary_context else n
    batch = pr.sample_function_batch(prior, B, rng)
    tables = batch.cell_tables()
    if tables is not None and sampler.kind == "unit-cube" and sampler.dim == 1:
        table, width = tables
        pts = rng.uniform(0.0, 1.0, (B, n_t + 1))
        vals = np.take_along_axis(table, pr._cells_of(pts, width), axis=1)
        eps = noise.sigma * rng.standard_normal((B, n_t + 1))
        out = (pts[:, :n_t, None], vals[:, :n_t] + eps[:, :n_t],
               pts[:, n_t:], vals[:, n_t] + eps[:, n_t])
        return out
    episodes = [
        tk.make_episode(batch.function_at(b)[1], n_t, noise, sampler, rng)
        for b in range(B)
    ]
    return _episodes_to_arrays(episodes)


def _corpus_batch(corpus, cfg: TrainConfig, step: int):
    B = cfg.batch_size
    idx = [(step * B + b) % len(corpus) for b in range(B)]
    return _episodes_to_arrays([corpus[i] for i in idx])


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

def erm_train(prior, tf_cfg: tfm.TFConfig, train_cfg: TrainConfig, n: int,
              noise: tk.NoiseSpec, params: tfm.TransformerParams = None,
              opt_state: OptimizerState = None, start_step: int = 0,
              log: TrainLog = None, corpus=None):
    """Stochastic minimization of the empirical squared loss.

    Returns (params, log).  Pass ``params``/``opt_state``/``start_step``
    to resume.  ``corpus`` supplies pre-loaded episodes for fixed-corpus
    mode; otherwise the first ``corpus_size`` stream episodes are drawn.
    """
    sampler = tk.domain_for(prior)
    if params is None:
        params = tfm.init_params(tf_cfg, "default", child_rng(train_cfg.seed, STREAM_INIT))
    arrays = params.tensor_arrays()
    names = [name for name, _ in params.named_tensors()]
    if opt_state is None:
        opt_state = OptimizerState(train_cfg, arrays)
    log = log or TrainLog()

    if not train_cfg.regenerate and corpus is None:
        corpus = list(tk.pretraining_stream(
            prior, train_cfg.corpus_size, n, noise, sampler, train_cfg.seed))

    t0 = time.monotonic()
    for step in range(start_step, train_cfg.steps):
        if train_cfg.regenerate:
            xs, ys, queries, targets = _stream_batch(
                prior, n, noise, sampler, train_cfg, step)
        else:
            xs, ys, queries, targets = _corpus_batch(corpus, train_cfg, step)
        Zb = tfm.embed_batch(xs, ys, queries, tf_cfg)
        tape = ad.Tape()
        tensors = tfm.params_to_tape(tape, params)
        loss = tfm.batch_loss(tape, tf_cfg, tensors, Zb, targets)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise DivergenceError(step)
        ad.backward(loss)
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data)
                 for t in tensors]
        lr = lr_at(train_cfg, step)
        opt_state.apply(arrays, grads, lr)

        val = None
        if train_cfg.val_every and (step + 1) % train_cfg.val_every == 0:
            est = validation_pi_risk(
                params, prior, n, noise, train_cfg.val_episodes,
                child_rng(train_cfg.seed, STREAM_VALIDATION, step))
            val = est.mean
        log.record(step, loss_val, lr, val)
    log.wall_time += time.monotonic() - t0
    return params, log


def validation_pi_risk(params, prior, n: int, noise: tk.NoiseSpec, J: int,
                       rng: np.random.Generator, predictor=None):
    """Monte-Carlo estimate of the pi-risk E(Y - f(X, D_n))^2.

    ``predictor`` overrides the clipped transformer, so the same
    evaluator can score the oracle or any baseline on identical logic.
    """
    from .evaluation import RiskEstimate  # deferred: avoids a module cycle
    if J < 1:
        raise ValueError("validation needs at least one episode")
    sampler = tk.domain_for(prior)
    if predictor is None:
        def predictor(ep, prng):
            return tfm.predict_clipped(params, ep.xs, ep.ys, ep.query)

    errs = np.empty(J)
    for j in range(J):
        _, g = pr.sample_mixture(pr.as_mixture(prior), rng)
        ep = tk.make_episode(g, n, noise, sampler, rng)
        pred = predictor(ep, rng)
        errs[j] = (ep.target - pred) ** 2
    stderr = float(errs.std(ddof=1) / np.sqrt(J)) if J > 1 else 0.0
    return RiskEstimate(float(errs.mean()), stderr, J, n, "validation", errs)


# ---------------------------------------------------------------------------
# Checkpoint helpers carrying optimizer state
# ---------------------------------------------------------------------------

def save_training_checkpoint(path, params, opt_state, train_cfg, step, extra_meta=None):
    names = [name for name, _ in params.named_tensors()]
    meta = {"step": step, "train_config": asdict(train_cfg)}
    meta.update(extra_meta or {})
    tfm.save_checkpoint(params, path, extra_tensors=opt_state.tensors(names), meta=meta)


def load_training_checkpoint(path):
    params, extra, meta = tfm.load_checkpoint(path)
    cfg = TrainConfig(**meta["train_config"]) if "train_config" in meta else TrainConfig()
    state = OptimizerState(cfg, params.tensor_arrays())
    state.step = int(meta.get("step", 0))
    names = [name for name, _ in params.named_tensors()]
    state.restore(names, extra)
    return params, state, cfg, meta
