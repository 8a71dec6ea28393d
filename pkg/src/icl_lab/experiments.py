"""Experiment orchestration shared by the CLI and the acceptance suite.

An evaluation run scores one or more subject predictors, plus the
oracle matched to every test distribution, on identical episode streams
per (test distribution, context length), and emits rows in the
risks.csv schema.  Rate fits group rows by predictor and shift.
"""

from dataclasses import dataclass, field
import csv
import datetime
import hashlib
import json
import os

import numpy as np

from . import evaluation as ev
from . import oracle as orc
from . import priors as pr
from . import tasks as tk
from .seeding import STREAM_EVAL, child_seed

MATCHED_TAG = "oracle-matched"

RISK_COLUMNS = ["predictor", "prior", "shift_kappa", "n", "J", "mean", "stderr"]


@dataclass
class TestDistribution:
    label: str            # component label the test law targets
    prior: pr.MixtureSpec  # single-component (possibly tilted) sampler
    kappa: float = 0.0


def base_test_distributions(prior) -> list:
    """Each mixture component as an unshifted test distribution."""
    mix = pr.as_mixture(prior)
    return [TestDistribution(label, pr.MixtureSpec(((label, spec),), (1.0,)), 0.0)
            for label, spec in mix.components]


def shifted_test_distribution(prior, shift: ev.ShiftSpec) -> TestDistribution:
    return TestDistribution(shift.component_label,
                            ev.make_shifted_prior(prior, shift), shift.kappa)


@dataclass
class EvalResult:
    rows: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)  # (pred, label, kappa, n) -> RiskEstimate

    def estimate(self, predictor_id, label, kappa, n) -> ev.RiskEstimate:
        return self.estimates[(predictor_id, label, float(kappa), int(n))]

    def series(self, predictor_id, label, kappa):
        ests = [e for (p, lab, k, _n), e in sorted(self.estimates.items(),
                                                   key=lambda kv: kv[0][3])
                if p == predictor_id and lab == label and k == float(kappa)]
        return ests


def eval_seed(root_seed: int, test_index: int, n: int) -> int:
    """Episode-stream root for one (test distribution, grid point)."""
    return int(child_seed(root_seed, STREAM_EVAL, test_index, n).generate_state(
        1, np.uint64)[0] % (2 ** 63))


def evaluate_predictors(subjects, tests, n_grid, noise: tk.NoiseSpec, J: int,
                        oracle_cfg: orc.OracleConfig, root_seed: int,
                        threads: int = 1, include_matched: bool = True) -> EvalResult:
    """Paired excess-risk table over predictors x test laws x grid.

    The oracle matched to each test distribution is appended unless a
    subject already is that oracle, so every row has a Bayes floor to
    compare against on the same episodes.
    """
    result = EvalResult()
    for ti, test in enumerate(tests):
        preds = list(subjects)
        matched_alias = None
        if include_matched:
            for p in preds:
                if isinstance(p, ev.OraclePredictor) and p.prior == test.prior:
                    matched_alias = p.id
                    break
            if matched_alias is None:
                preds.append(ev.OraclePredictor(test.prior, oracle_cfg, MATCHED_TAG))
        for n in n_grid:
            seed = eval_seed(root_seed, ti, n)
            ests = ev.paired_excess_risks(preds, test.prior, n, noise, J,
                                          seed, threads)
            if matched_alias is not None:
                alias = next(e for e in ests if e.predictor_id == matched_alias)
                ests.append(ev.RiskEstimate(alias.mean, alias.stderr, alias.J,
                                            alias.n, MATCHED_TAG, alias.errors))
            for est in ests:
                key = (est.predictor_id, test.label, float(test.kappa), int(n))
                result.estimates[key] = est
                result.rows.append({
                    "predictor": est.predictor_id,
                    "prior": test.label,
                    "shift_kappa": float(test.kappa),
                    "n": int(n),
                    "J": int(J),
                    "mean": est.mean,
                    "stderr": est.stderr,
                })
    return result


# ---------------------------------------------------------------------------
# risks.csv and rates.json
# ---------------------------------------------------------------------------

def write_risks_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RISK_COLUMNS)
        for r in rows:
            w.writerow([r["predictor"], r["prior"], repr(float(r["shift_kappa"])),
                        r["n"], r["J"], repr(float(r["mean"])), repr(float(r["stderr"]))])


def read_risks_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({
                "predictor": rec["predictor"],
                "prior": rec["prior"],
                "shift_kappa": float(rec["shift_kappa"]),
                "n": int(rec["n"]),
                "J": int(rec["J"]),
                "mean": float(rec["mean"]),
                "stderr": float(rec["stderr"]),
            })
    return rows


def fit_rates_from_rows(rows, target: float):
    """One RateFit per (predictor, prior, shift_kappa) series with a full grid."""
    groups = {}
    for r in rows:
        groups.setdefault((r["predictor"], r["prior"], r["shift_kappa"]), []).append(r)
    fits = []
    for (pred, prior_label, kappa), grp in sorted(groups.items()):
        ests = [ev.RiskEstimate(g["mean"], g["stderr"], g["J"], g["n"], pred)
                for g in grp]
        fit = ev.fit_rate(ests, target)
        fits.append({
            "predictor": pred,
            "prior": prior_label,
            "shift_kappa": kappa,
            "grid": fit.ns,
            "means": fit.means,
            "stderrs": [e.stderr for e in sorted(ests, key=lambda e: e.n)],
            "slope": fit.slope,
            "slope_stderr": fit.slope_stderr,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "target": fit.target,
            "deviation": fit.deviation,
        })
    return fits


def write_rates_json(path, fits, target: float):
    with open(path, "w") as fh:
        json.dump({"target_slope": target, "fits": fits}, fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

def update_manifest(output_dir: str, config_hash: str, produced: dict,
                    started: str = None):
    """Record config hash, code version and the produced-file index."""
    from . import __version__
    path = os.path.join(output_dir, "manifest.json")
    manifest = {"config_hash": config_hash, "code_version": __version__,
                "files": {}, "history": []}
    if os.path.exists(path):
        with open(path) as fh:
            manifest = json.load(fh)
        manifest.setdefault("files", {})
        manifest.setdefault("history", [])
    now = datetime.datetime.now(datetime.timezone.utc).isoformat()
    for name, fpath in produced.items():
        digest = ""
        if os.path.exists(fpath):
            with open(fpath, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()[:16]
        manifest["files"][name] = {"path": os.path.basename(fpath), "sha256": digest}
    manifest["config_hash"] = config_hash
    manifest["history"].append({"started": started or now, "finished": now,
                                "wrote": sorted(produced)})
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    missing = [name for name, fpath in produced.items() if not os.path.exists(fpath)]
    if missing:
        raise RuntimeError(f"manifest lists files that were not produced: {missing}")
    return path
