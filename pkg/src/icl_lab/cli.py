"""Command-line front end: reproducible experiment runs from one config.

Subcommands: gen-tasks, train, eval, rate, verify, report.  Every run
validates the config up front, derives all randomness from the config's
root seed, and records produced artifacts in the output directory's
manifest.  Exit codes: 0 success, 1 runtime failure, 2 usage or config
error.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import evaluation as ev
from . import experiments as ex
from . import plotting
from . import priors as pr
from . import tasks as tk
from . import training as tr
from . import transformer as tfm
from .config import load_config
from .errors import ConfigError, DivergenceError


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("ICL_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _outdir(cfg, args) -> str:
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_tasks(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    path = os.path.join(out, "tasks.jsonl")
    stream = tk.pretraining_stream(cfg.prior, max(args.count, 1), cfg.train_n,
                                   cfg.noise, tk.domain_for(cfg.prior),
                                   cfg.root_seed)
    count = tk.write_episodes(path, [] if args.count == 0 else stream)
    ex.update_manifest(out, cfg.config_hash(), {"tasks": path})
    print(f"wrote {count} episodes to {path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    ckpt_path = os.path.join(out, "checkpoint.json")
    log_csv = os.path.join(out, "train_log.csv")

    params, opt_state, start_step = None, None, 0
    train_cfg = cfg.train_config
    if args.resume:
        if not os.path.exists(args.resume):
            print(f"checkpoint not found: {args.resume}", file=sys.stderr)
            return 2
        params, opt_state, saved_cfg, meta = tr.load_training_checkpoint(args.resume)
        start_step = int(meta.get("step", 0))
    if args.steps is not None:
        from dataclasses import replace
        train_cfg = replace(train_cfg, steps=start_step + args.steps)

    corpus = None
    if not train_cfg.regenerate:
        tasks_path = os.path.join(out, "tasks.jsonl")
        if os.path.exists(tasks_path):
            corpus = tk.read_episodes(tasks_path)

    params, log = tr.erm_train(cfg.prior, cfg.tf_config, train_cfg, cfg.train_n,
                               cfg.noise, params=params, opt_state=opt_state,
                               start_step=start_step, corpus=corpus)
    tr.save_training_checkpoint(ckpt_path, params, opt_state or
                                tr.OptimizerState(train_cfg, params.tensor_arrays()),
                                train_cfg, train_cfg.steps)
    log.to_csv(log_csv)
    ex.update_manifest(out, cfg.config_hash(),
                       {"checkpoint": ckpt_path, "train_log": log_csv})
    final = log.rows[-1][1] if log.rows else float("nan")
    print(f"trained to step {train_cfg.steps}; final loss {final:.6g}; "
          f"checkpoint {ckpt_path}")
    return 0


def _subject_predictors(cfg, which: str):
    if which == "oracle":
        return [ev.OraclePredictor(cfg.prior, cfg.oracle_config(), "oracle")]
    if which == "zero":
        return [ev.ConstantPredictor(0.0, "zero")]
    if not os.path.exists(which):
        raise FileNotFoundError(f"checkpoint not found: {which}")
    params, _, _ = tfm.load_checkpoint(which)
    return [ev.TransformerPredictor(params, "transformer")]


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    try:
        subjects = _subject_predictors(cfg, args.predictor)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    tests = ex.base_test_distributions(cfg.prior)
    for shift in cfg.shifts:
        tests.append(ex.shifted_test_distribution(cfg.prior, shift))
    result = ex.evaluate_predictors(subjects, tests, cfg.eval_grid, cfg.noise,
                                    cfg.eval_episodes, cfg.oracle_config(),
                                    cfg.root_seed, threads=_threads(args))
    path = os.path.join(out, "risks.csv")
    ex.write_risks_csv(path, result.rows)
    ex.update_manifest(out, cfg.config_hash(), {"risks": path})
    print(f"wrote {len(result.rows)} risk rows to {path}")
    return 0


def cmd_rate(args) -> int:
    if not os.path.exists(args.risks):
        print(f"risks file not found: {args.risks}", file=sys.stderr)
        return 2
    rows = ex.read_risks_csv(args.risks)
    target = ev.target_exponent(args.beta, args.effective_dim)
    fits = ex.fit_rates_from_rows(rows, target)
    out = args.out or os.path.dirname(os.path.abspath(args.risks))
    os.makedirs(out, exist_ok=True)
    rates_path = os.path.join(out, "rates.json")
    ex.write_rates_json(rates_path, fits, target)
    svg_path = os.path.join(out, "rate_plot.svg")
    series = [{
        "ns": f["grid"], "means": f["means"], "stderrs": f["stderrs"],
        "label": f"{f['predictor']} ({f['prior']}, kappa={f['shift_kappa']:g}): "
                 f"slope {f['slope']:.3f}",
    } for f in fits]
    plotting.rate_plot(svg_path, series, target)
    for f in fits:
        print(f"{f['predictor']} ({f['prior']}, kappa={f['shift_kappa']:g}): "
              f"slope {f['slope']:.4f} +- {f['slope_stderr']:.4f} "
              f"(target {target:.4f}, r2 {f['r_squared']:.3f})")
    print(f"wrote {rates_path} and {svg_path}")
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    try:
        subjects = _subject_predictors(cfg, args.predictor)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    oracle_pred = ev.OraclePredictor(cfg.prior, cfg.oracle_config(), "oracle")
    shifts = [None] + list(cfg.shifts)
    n = args.n or cfg.train_n
    J = args.episodes or max(200, cfg.eval_episodes // 4)
    reports = []
    for subject in subjects:
        for shift in shifts:
            rep = ev.verify_decomposition_bound(
                subject, oracle_pred, cfg.prior, shift, n, cfg.noise,
                cfg.clip_bound, J, cfg.root_seed, threads=_threads(args))
            reports.append(rep)
            print(f"{rep['predictor']} kappa={rep['kappa']:g}: "
                  f"LHS {rep['lhs_excess_risk']['mean']:.5f} <= "
                  f"RHS {rep['rhs']:.5f} + slack {rep['slack']:.5f} "
                  f"-> {'OK' if rep['holds'] else 'VIOLATED'}")
    path = os.path.join(out, "bound_report.json")
    with open(path, "w") as fh:
        json.dump({"reports": reports}, fh, indent=1, sort_keys=True)
    ex.update_manifest(out, cfg.config_hash(), {"bound_report": path})
    print(f"wrote {path}")
    return 0 if all(r["holds"] for r in reports) else 1


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg, args)
    report_dir = os.path.join(out, "report")
    os.makedirs(report_dir, exist_ok=True)
    produced = {}
    summary = []

    risks_path = os.path.join(out, "risks.csv")
    if os.path.exists(risks_path):
        rows = ex.read_risks_csv(risks_path)
        groups = {}
        for r in rows:
            groups.setdefault((r["predictor"], r["prior"], r["shift_kappa"]), []).append(r)
        series = []
        for (pred, label, kappa), grp in sorted(groups.items()):
            grp = sorted(grp, key=lambda r: r["n"])
            series.append({"ns": [g["n"] for g in grp],
                           "means": [g["mean"] for g in grp],
                           "stderrs": [g["stderr"] for g in grp],
                           "label": f"{pred} ({label}, kappa={kappa:g})"})
            summary.append(("risk_curve", f"{pred}|{label}|{kappa:g}",
                            grp[-1]["mean"]))
        target = ev.target_exponent(cfg.rate_beta, cfg.rate_dim) \
            if cfg.rate_beta is not None else -0.5
        fig_path = os.path.join(report_dir, "risk_curves.svg")
        plotting.rate_plot(fig_path, series, target)
        produced["report_risks"] = fig_path

    log_path = os.path.join(out, "train_log.csv")
    if os.path.exists(log_path):
        import csv as _csv
        with open(log_path, newline="") as fh:
            recs = list(_csv.DictReader(fh))
        steps = [int(r["step"]) for r in recs]
        losses = [float(r["loss"]) for r in recs]
        fig_path = os.path.join(report_dir, "train_loss.svg")
        plotting.loss_plot(fig_path, steps, losses)
        produced["report_loss"] = fig_path
        if losses:
            summary.append(("final_loss", "train", losses[-1]))

    bound_path = os.path.join(out, "bound_report.json")
    if os.path.exists(bound_path):
        with open(bound_path) as fh:
            reports = json.load(fh)["reports"]
        fig_path = os.path.join(report_dir, "bound_terms.svg")
        plotting.bound_plot(fig_path, reports)
        produced["report_bounds"] = fig_path
        for r in reports:
            summary.append(("bound_holds", f"{r['predictor']}|{r['kappa']:g}",
                            float(r["holds"])))

    if not produced:
        print("nothing to report: run eval/train/verify first", file=sys.stderr)
        return 1
    summary_path = os.path.join(report_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        import csv as _csv
        w = _csv.writer(fh)
        w.writerow(["kind", "key", "value"])
        for kind, key, value in summary:
            w.writerow([kind, key, repr(float(value))])
    produced["report_summary"] = summary_path
    ex.update_manifest(out, cfg.config_hash(), produced)
    print(f"report written under {report_dir}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="icl-lab",
        description="in-context-learning regression laboratory")
    p.add_argument("--threads", "-j", type=int, default=None,
                   help="worker processes (default: ICL_LAB_THREADS or cores)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-tasks", help="write an episode corpus (JSONL)")
    g.add_argument("config")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", default=None)
    g.set_defaults(fn=cmd_gen_tasks)

    t = sub.add_parser("train", help="pretrain the transformer")
    t.add_argument("config")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--steps", type=int, default=None,
                   help="extra steps when resuming (default: config steps)")
    t.add_argument("--out", default=None)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="estimate excess risks over the grid")
    e.add_argument("config")
    e.add_argument("predictor", help='"oracle", "zero", or a checkpoint path')
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("rate", help="fit log-log rate slopes from risks.csv")
    r.add_argument("risks")
    r.add_argument("--beta", type=float, required=True)
    r.add_argument("--effective-dim", type=int, required=True,
                   help="d for Besov tasks, r for multi-index tasks")
    r.add_argument("--out", default=None)
    r.set_defaults(fn=cmd_rate)

    v = sub.add_parser("verify", help="check the excess-risk decomposition bound")
    v.add_argument("config")
    v.add_argument("predictor", help='"oracle", "zero", or a checkpoint path')
    v.add_argument("--n", type=int, default=None)
    v.add_argument("--episodes", type=int, default=None)
    v.add_argument("--out", default=None)
    v.set_defaults(fn=cmd_verify)

    rep = sub.add_parser("report", help="render figures and a summary table")
    rep.add_argument("config")
    rep.add_argument("--out", default=None)
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
