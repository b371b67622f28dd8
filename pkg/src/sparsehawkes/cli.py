"""Command-line interface.

Subcommands: simulate, fit, two-step, loss, loglik, rate-study, diagnose.
All outputs are plain CSV/JSON with documented schemas; everything is
deterministic given the seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import experiments
from .events import save_events
from .likelihood import log_likelihood
from .losses import l1_distance
from .mcmc import MOVES, McmcConfig, PosteriorSample, run_chain, summarize
from .params import _kernel_from_dict, _kernel_to_dict, load_params
from .params import ComponentParams
from .priors import PriorSpecs
from .simulate import simulate_cluster, simulate_thinning
from .twostep import default_threshold, two_step


def load_fit_config(path: str):
    """Fit config file: JSON {"horizon": A, "prior": {...}, "mcmc": {...}}.

    `horizon` is the kernel memory length A (default 1.0). Keys inside each
    block follow the study-config schema; unknown keys are hard errors.
    size_cap defaults to the event dimension when omitted.
    """
    with open(path) as fh:
        raw = json.load(fh)
    top = experiments._require_keys(
        raw, {"horizon": 1.0, "prior": {}, "mcmc": {}}, os.path.basename(path)
    )
    return float(top["horizon"]), top["prior"], top["mcmc"]


def _read_events(path: str, T: float, A: float, dimension=None):
    """Read an event CSV, inferring the dimension when not given."""
    with open(path) as fh:
        text = fh.read()
    body = [line for line in text.strip().splitlines()[1:] if line.strip()]
    comps = [int(line.split(",")[0]) for line in body]
    times = [float(line.split(",")[1]) for line in body]
    if dimension is None:
        dimension = (max(comps) + 1) if comps else 1
    t_start = min([-A] + times)
    t_end = max([T] + times)
    from .events import events_from_csv

    return events_from_csv(text, dimension, t_start, t_end)


def _build_specs(prior_raw: dict, mcmc_raw: dict, K: int, horizon: float):
    prior_raw = dict(prior_raw)
    prior_raw.setdefault("size_cap", K)
    prior = experiments._require_keys(prior_raw, experiments.PRIOR_KEYS, "prior")
    mcmc = experiments._require_keys(mcmc_raw, experiments.MCMC_KEYS, "mcmc")
    return experiments.build_priors(prior, horizon), experiments.build_mcmc_config(mcmc)


def _draws_to_json(sample: PosteriorSample) -> str:
    payload = {
        "component": sample.component,
        "horizon": sample.horizon,
        "draws": [
            {
                "nu": repr(d.nu),
                "kernels": {str(l): _kernel_to_dict(k) for l, k in d.kernels.items()},
            }
            for d in sample.draws
        ],
    }
    return json.dumps(payload, indent=1)


def load_draws(path: str):
    """Read a per-component draw file written by `fit`."""
    with open(path) as fh:
        payload = json.load(fh)
    horizon = float(payload["horizon"])
    draws = tuple(
        ComponentParams(
            nu=float(d["nu"]),
            kernels={int(l): _kernel_from_dict(kd, horizon) for l, kd in d["kernels"].items()},
        )
        for d in payload["draws"]
    )
    return int(payload["component"]), horizon, draws


def _write_rows(path: str, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    params = load_params(args.params)
    os.makedirs(args.out, exist_ok=True)
    for rep in range(args.replicates):
        seed = [args.seed, rep]
        if args.method == "cluster":
            events, report = simulate_cluster(params, args.horizon, seed)
        else:
            events, report = simulate_thinning(params, args.horizon, seed=seed)
        save_events(events, os.path.join(args.out, f"events_{rep:03d}.csv"))
        with open(os.path.join(args.out, f"report_{rep:03d}.json"), "w") as fh:
            json.dump(
                {
                    "counts": [int(c) for c in report.counts],
                    "empirical_rates": [float(r) for r in report.empirical_rates],
                    "target_rates": [float(r) for r in report.target_rates],
                    "warmup": float(report.warmup),
                },
                fh,
                indent=1,
            )
    return 0


def cmd_loglik(args) -> int:
    params = load_params(args.params)
    events = _read_events(args.events, args.horizon, params.horizon, params.dimension)
    value = log_likelihood(
        params.components[args.component], events, args.horizon, args.component
    )
    print(f"{value:.17g}")
    return 0


def _components_arg(spec: str, K: int):
    if spec == "all":
        return list(range(K))
    k = int(spec)
    if not 0 <= k < K:
        raise SystemExit(f"component {k} out of range for dimension {K}")
    return [k]


def _run_fit(events, prior_raw, mcmc_raw, comps, seed, out, horizon):
    K = events.dimension
    priors, mcfg = _build_specs(prior_raw, mcmc_raw, K, horizon)
    os.makedirs(out, exist_ok=True)
    summary_rows = []
    diag_rows = []
    for k in comps:
        sample = run_chain(k, events, priors, mcfg, [seed, k])
        summary = summarize(sample, K)
        with open(os.path.join(out, f"draws_{k:03d}.json"), "w") as fh:
            fh.write(_draws_to_json(sample))
        for l in range(K):
            summary_rows.append(
                [k, l, k, f"{summary.rho_hat[l]:.12g}", f"{summary.inclusion[l]:.12g}"]
            )
        for m in MOVES:
            diag_rows.append(
                [k, m, sample.proposed[m], f"{sample.acceptance[m]:.6g}",
                 f"{sample.max_audit_delta:.6g}"]
            )
    _write_rows(
        os.path.join(out, "summary.csv"),
        ["component", "source", "target", "rho_hat", "inclusion_prob"],
        summary_rows,
    )
    _write_rows(
        os.path.join(out, "diagnostics.csv"),
        ["component", "move", "proposed", "acceptance_rate", "max_audit_delta"],
        diag_rows,
    )


def cmd_fit(args) -> int:
    A, prior_raw, mcmc_raw = load_fit_config(args.params_prior)
    events = _read_events(args.events, args.horizon, A)
    comps = _components_arg(args.components, events.dimension)
    _run_fit(events, prior_raw, mcmc_raw, comps, args.seed, args.out, A)
    return 0


def cmd_two_step(args) -> int:
    A, prior_raw, mcmc_raw = load_fit_config(args.prior)
    events = _read_events(args.events, args.horizon, A)
    K = events.dimension
    priors, mcfg = _build_specs(prior_raw, mcmc_raw, K, A)
    threshold = None if args.threshold == "auto" else float(args.threshold)
    os.makedirs(args.out, exist_ok=True)
    graph_rows = []
    summary_rows = []
    for k in range(K):
        result = two_step(k, events, priors, mcfg, [args.seed, k], threshold=threshold)
        graph_rows.append([k, " ".join(str(l) for l in sorted(result.selected))])
        with open(os.path.join(args.out, f"refit_draws_{k:03d}.json"), "w") as fh:
            fh.write(_draws_to_json(result.refit_sample))
        for l in range(K):
            summary_rows.append(
                [
                    k,
                    l,
                    k,
                    f"{result.refit_summary.rho_hat[l]:.12g}",
                    f"{result.refit_summary.inclusion[l]:.12g}",
                ]
            )
    _write_rows(
        os.path.join(args.out, "selected_graph.csv"),
        ["component", "selected_sources"],
        graph_rows,
    )
    _write_rows(
        os.path.join(args.out, "summary.csv"),
        ["component", "source", "target", "rho_hat", "inclusion_prob"],
        summary_rows,
    )
    return 0


def cmd_loss(args) -> int:
    truth = load_params(args.truth)
    rows = []
    header = ["component", "draw", "l1_total", "l1_nu", "l1_false_mass", "l1_active"]
    with open(args.estimate) as fh:
        payload = json.load(fh)
    if "draws" in payload:
        k, _, draws = load_draws(args.estimate)
        pairs = [(k, i, truth.components[k], d) for i, d in enumerate(draws)]
    else:
        estimate = load_params(args.estimate)
        pairs = [
            (k, 0, truth.components[k], estimate.components[k])
            for k in range(truth.dimension)
        ]
    for k, i, t_k, e_k in pairs:
        rep = l1_distance(e_k, t_k, k)
        rows.append(
            [
                k,
                i,
                f"{rep.total:.12g}",
                f"{rep.l1_nu:.12g}",
                f"{rep.l1_false_mass:.12g}",
                f"{rep.l1_active:.12g}",
            ]
        )
    _write_rows(args.out, header, rows)
    return 0


def cmd_rate_study(args) -> int:
    config = experiments.load_config(args.config)
    result = experiments.rate_study(config)
    print(f"rows={len(result.rows)} slope_d1T={result.slope_d1T:.6g} "
          f"slope_l1={result.slope_l1:.6g} errors={len(result.errors)}")
    return 0


def cmd_diagnose(args) -> int:
    config = experiments.load_config(args.config)
    result = experiments.diagnose(config)
    n_fail = sum(1 for r in result.rows if int(r[5]) != 1)
    print(f"checks={len(result.rows)} failed={n_fail}")
    return 0 if result.all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsehawkes")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate event data from a parameter file")
    s.add_argument("--params", required=True)
    s.add_argument("--horizon", type=float, required=True, help="observation end time T")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--method", choices=["cluster", "thinning"], default="cluster")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("loglik", help="print the exact log-likelihood")
    s.add_argument("--params", required=True)
    s.add_argument("--events", required=True)
    s.add_argument("--component", type=int, required=True)
    s.add_argument("--horizon", type=float, required=True)
    s.set_defaults(func=cmd_loglik)

    s = sub.add_parser("fit", help="run the RJ-MCMC sampler")
    s.add_argument("--params-prior", required=True, help="JSON prior/mcmc config")
    s.add_argument("--events", required=True)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--components", default="all", help="'all' or a component index")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("two-step", help="threshold selection plus fixed-set refit")
    s.add_argument("--events", required=True)
    s.add_argument("--prior", required=True)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--threshold", default="auto", help="'auto' or a numeric value")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_two_step)

    s = sub.add_parser("loss", help="L1 loss report for an estimate or draw file")
    s.add_argument("--truth", required=True)
    s.add_argument("--estimate", required=True)
    s.add_argument("--events", default=None, help="unused for L1; reserved")
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("rate-study", help="run a contraction-rate study from a config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_rate_study)

    s = sub.add_parser("diagnose", help="run the moment-bound diagnostic battery")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
