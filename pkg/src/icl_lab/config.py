"""Declarative experiment configuration (TOML or JSON).

One file describes the prior mixture, noise, domain, transformer and
training settings, the evaluation grid and any shifted test laws.
``load_config`` parses and validates, collecting every violation rather
than stopping at the first.
"""

from dataclasses import dataclass, field
import hashlib
import json
import os

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import oracle as orc
from . import priors as pr
from . import tasks as tk
from . import training as tr
from . import transformer as tfm
from .errors import ConfigError
from .evaluation import ShiftSpec, chi_squared_of_shift, single_tilt_for_kappa


@dataclass
class ExperimentConfig:
    raw: dict
    root_seed: int
    output_dir: str
    prior: pr.MixtureSpec
    noise: tk.NoiseSpec
    domain: tk.DomainSampler
    tf_config: tfm.TFConfig
    train_config: tr.TrainConfig
    train_n: int
    eval_grid: list
    eval_episodes: int
    oracle_samples: int
    shifts: list = field(default_factory=list)   # [ShiftSpec]
    kappa_budget: float = None
    rate_beta: float = None
    rate_dim: int = 1

    @property
    def clip_bound(self) -> float:
        return pr.sup_norm_bound(self.prior)

    def oracle_config(self, m_samples: int = None) -> orc.OracleConfig:
        return orc.OracleConfig(m_samples or self.oracle_samples,
                                self.noise.sigma, self.clip_bound)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]


def _basis_from_family(family: str, dim: int, problems, where: str):
    try:
        if family == "haar":
            return pr.wv.WaveletSpec("haar", 0, 0, dim)
        if family.startswith("db"):
            K = int(family[2:])
            return pr.wv.WaveletSpec("db", K, pr.wv._min_periodization_level(K), dim)
        problems.append(f"{where}: unknown wavelet family {family!r}")
    except (ValueError, KeyError) as exc:
        problems.append(f"{where}: {exc}")
    return None


def _parse_component(doc: dict, problems, where: str):
    kind = doc.get("kind", "besov")
    alpha = doc.get("alpha")
    if alpha is None:
        problems.append(f"{where}: missing alpha")
        return None, 0.0
    dim = int(doc.get("effective_dim", doc.get("dim", 1)))
    basis = _basis_from_family(doc.get("family", "haar"), dim, problems, where)
    if basis is None:
        return None, 0.0
    try:
        base = pr.BesovPriorSpec(
            alpha=float(alpha),
            C0=float(doc.get("c0_scale", 1.0)),
            max_level=int(doc.get("max_level", 6)),
            basis=basis,
        )
        if doc.get("tilts"):
            tilts = tuple((_parse_tilt_key(k), float(e)) for k, e in doc["tilts"])
            base = pr.tilt_spec(base, tilts)
        if kind == "multi-index":
            spec = pr.MultiIndexPriorSpec(base, int(doc["ambient_dim"]))
        elif kind == "besov":
            spec = base
        else:
            problems.append(f"{where}: unknown component kind {kind!r}")
            return None, 0.0
    except (ValueError, KeyError) as exc:
        problems.append(f"{where}: {exc}")
        return None, 0.0
    return (doc.get("label", pr.component_label(spec)), spec), float(doc.get("weight", 1.0))


def _parse_tilt_key(key):
    """["father", [k...]] or ["mother", level, [k...], [bits...]]."""
    if key[0] == "father":
        return ("father", tuple(int(v) for v in key[1]))
    return ("mother", int(key[1]), tuple(int(v) for v in key[2]),
            tuple(int(v) for v in key[3]))


def _parse_shift(doc: dict, components, problems, where: str):
    label = doc.get("label")
    if label is None and len(components) == 1:
        label = components[0][0]
    if label not in [lab for lab, _ in components]:
        problems.append(f"{where}: shift label {label!r} matches no component")
        return None
    if "tilts" in doc:
        tilts = tuple((_parse_tilt_key(k), float(e)) for k, e in doc["tilts"])
    elif "kappa" in doc:
        try:
            # a single tilt on the coarsest mother realizes the target kappa
            tilts = (((("mother", 0, (0,), (1,))), single_tilt_for_kappa(float(doc["kappa"]))),)
        except ConfigError as exc:
            problems.append(f"{where}: {exc}")
            return None
    else:
        tilts = ()
    return ShiftSpec(label, tilts)


def parse_config(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    problems = []

    root_seed = doc.get("root_seed")
    if not isinstance(root_seed, int):
        problems.append("root_seed: required integer")
        root_seed = 0
    output_dir = doc.get("output_dir", "runs/out")
    if not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)

    comp_docs = doc.get("prior", {}).get("components", [])
    if not comp_docs:
        problems.append("prior.components: at least one component required")
    parsed = [_parse_component(c, problems, f"prior.components[{i}]")
              for i, c in enumerate(comp_docs)]
    components = [c for c, _ in parsed if c is not None]
    weights = [w for c, w in parsed if c is not None]
    prior = None
    if components:
        total = sum(weights)
        try:
            prior = pr.MixtureSpec(tuple(components), tuple(w / total for w in weights))
        except ValueError as exc:
            problems.append(f"prior: {exc}")

    try:
        noise = tk.NoiseSpec(float(doc.get("noise", {}).get("sigma", 0.25)))
    except ValueError as exc:
        problems.append(f"noise: {exc}")
        noise = tk.NoiseSpec(0.25)

    domain = None
    if prior is not None:
        try:
            default_domain = tk.domain_for(prior)
            dd = doc.get("domain", {})
            domain = tk.DomainSampler(dd.get("kind", default_domain.kind),
                                      int(dd.get("dim", default_domain.dim)))
            if domain.kind != default_domain.kind or domain.dim != default_domain.dim:
                problems.append(
                    f"domain: {domain.kind}/{domain.dim} mismatches the prior's "
                    f"{default_domain.kind}/{default_domain.dim}")
        except ValueError as exc:
            problems.append(f"domain: {exc}")

    tf_doc = doc.get("transformer", {})
    tf_config = None
    try:
        clip = tf_doc.get("clip")
        if clip is None and prior is not None:
            clip = pr.sup_norm_bound(prior)
        tf_config = tfm.TFConfig(
            blocks=int(tf_doc.get("blocks", 3)),
            heads=int(tf_doc.get("heads", 1)),
            d_model=int(tf_doc.get("d_model", 32)),
            d_ffn=int(tf_doc.get("d_ffn", 64)),
            activation=tf_doc.get("activation", "gelu"),
            max_context=int(tf_doc.get("max_context", 512)),
            clip=float(clip if clip is not None else 10.0),
            input_dim=int(tf_doc.get("input_dim",
                                     pr.ambient_dim(components[0][1]) if components else 1)),
            layer_norm=bool(tf_doc.get("layer_norm", False)),
        )
    except ValueError as exc:
        problems.append(f"transformer: {exc}")

    tr_doc = doc.get("train", {})
    train_config = None
    train_n = int(tr_doc.get("n", 16))
    try:
        train_config = tr.TrainConfig(
            corpus_size=int(tr_doc.get("corpus_size", 100_000)),
            batch_size=int(tr_doc.get("batch_size", 32)),
            steps=int(tr_doc.get("steps", 2_000)),
            optimizer=tr_doc.get("optimizer", "adam"),
            beta1=float(tr_doc.get("beta1", 0.9)),
            beta2=float(tr_doc.get("beta2", 0.999)),
            adam_eps=float(tr_doc.get("adam_eps", 1e-8)),
            momentum=float(tr_doc.get("momentum", 0.0)),
            learning_rate=float(tr_doc.get("learning_rate", 1e-3)),
            schedule=tr_doc.get("schedule", "cosine"),
            seed=int(tr_doc.get("seed", root_seed)),
            regenerate=bool(tr_doc.get("regenerate", True)),
            vary_context=bool(tr_doc.get("vary_context", False)),
            val_every=int(tr_doc.get("val_every", 0)),
            val_episodes=int(tr_doc.get("val_episodes", 200)),
        )
    except ValueError as exc:
        problems.append(f"train: {exc}")
    if tf_config is not None and train_n > tf_config.max_context:
        problems.append(f"train.n={train_n} exceeds transformer.max_context")

    ev_doc = doc.get("eval", {})
    eval_grid = [int(v) for v in ev_doc.get("n_grid", [8, 16, 32, 64, 128, 256, 512])]
    if sorted(set(eval_grid)) != eval_grid:
        problems.append("eval.n_grid: must be strictly increasing")
    eval_episodes = int(ev_doc.get("episodes", 2000))
    oracle_samples = int(ev_doc.get("oracle_samples", 2 ** 12))
    if eval_episodes < 1 or oracle_samples < 1:
        problems.append("eval: episodes and oracle_samples must be positive")

    kappa_budget = doc.get("kappa_budget")
    shifts = []
    if prior is not None:
        for i, sdoc in enumerate(doc.get("shifts", [])):
            shift = _parse_shift(sdoc, components, problems, f"shifts[{i}]")
            if shift is None:
                continue
            if kappa_budget is not None and shift.kappa > float(kappa_budget) + 1e-12:
                problems.append(
                    f"shifts[{i}]: kappa {shift.kappa:.6g} exceeds budget {kappa_budget}")
            shifts.append(shift)

    rate_doc = doc.get("rate", {})
    rate_beta = rate_doc.get("beta")
    rate_dim = int(rate_doc.get("effective_dim", 1))

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        raw=doc, root_seed=root_seed, output_dir=output_dir, prior=prior,
        noise=noise, domain=domain, tf_config=tf_config, train_config=train_config,
        train_n=train_n, eval_grid=eval_grid, eval_episodes=eval_episodes,
        oracle_samples=oracle_samples, shifts=shifts,
        kappa_budget=None if kappa_budget is None else float(kappa_budget),
        rate_beta=None if rate_beta is None else float(rate_beta),
        rate_dim=rate_dim,
    )


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError([f"config file not found: {path}"])
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
    else:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    return parse_config(doc, base_dir=os.path.dirname(os.path.abspath(path)))
