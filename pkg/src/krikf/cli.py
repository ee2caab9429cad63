"""``reconstruct`` command line: run experiments, check the filter against the batch solver, emit scenarios."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as csvio
from .errors import ConfigInvalid, ReconstructionError
from .filter import FilterConfig, initial_state, kekrikf_step
from .harness import _Topology, build_scenario, draw_sampling, load_config, observe, run_experiment
from .oracle import MAX_SIZE, batch_oracle

log = logging.getLogger("krikf")


def _rel(a, b):
    scale = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def _trial_inputs(cfg):
    scenario, sampling_rng, noise_rng = build_scenario(cfg, cfg.seed)
    n = scenario.graphs.num_nodes
    plan = draw_sampling(n, cfg.resolve_sample_count(n), sampling_rng)
    obs = [observe(x, plan, cfg.scenario.noise_std, t, noise_rng) for t, x in enumerate(scenario.signals, start=1)]
    return scenario, obs


def cmd_run(args) -> int:
    overrides = {"trials": args.trials, "seed": args.seed}
    cfg = load_config(args.config, overrides)
    out = Path(args.output) if args.output else Path(cfg.output_dir)
    report = run_experiment(cfg, out)
    for m in report.methods:
        print(f"{m}: final NMSE {report.nmse[m][-1]:.6g}")
    failures = report.metadata["failures"]
    if failures:
        print(f"{len(failures)} trial(s) failed; see report.json", file=sys.stderr)
    print(f"wrote {out}")
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    scenario, obs = _trial_inputs(cfg)
    n = scenario.graphs.num_nodes
    horizon = min(args.horizon, cfg.horizon, MAX_SIZE // n)
    topo = _Topology(scenario.graphs)
    worst = 0.0
    checked = 0
    for method in cfg.methods:
        if method.kind != "kekrikf":
            continue
        configs = []
        for t in range(1, horizon + 1):
            epoch = scenario.graphs.epoch_index(t)
            configs.append(FilterConfig(method.lambda1, method.lambda2, topo.transition(t, method.transition),
                                        topo.kernel(epoch, method.kernel_nu), topo.kernel(epoch, method.kernel_eta)))
        state = initial_state(configs[0])
        for t in range(horizon):
            state, est = kekrikf_step(state, obs[t], configs[t])
        batch = batch_oracle(obs, configs, horizon)
        err_chi, err_nu = _rel(state.chi, batch.chi[-1]), _rel(est.nu, batch.nu[-1])
        worst = max(worst, err_chi, err_nu)
        checked += 1
        print(json.dumps({"method": method.name, "horizon": horizon, "rel_err_chi": err_chi, "rel_err_nu": err_nu}))
    if not checked:
        print("no kekrikf methods in config", file=sys.stderr)
        return 2
    ok = worst <= args.tol
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (tol {args.tol:g})")
    return 0 if ok else 1


def cmd_gen(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed})
    out = csvio.ensure_dir(args.output or cfg.output_dir)
    scenario, _, _ = build_scenario(cfg, cfg.seed)
    csvio.write_signals_csv(out / "signals.csv", scenario.signals)
    manifest = {"num_nodes": scenario.graphs.num_nodes, "horizon": cfg.horizon, "seed": cfg.seed,
                "signals": "signals.csv", "epochs": []}
    if scenario.nu is not None:
        csvio.write_signals_csv(out / "nu.csv", scenario.nu)
        csvio.write_signals_csv(out / "chi.csv", scenario.chi)
        manifest["components"] = {"nu": "nu.csv", "chi": "chi.csv"}
    for k, (first, g) in enumerate(scenario.graphs.snapshots):
        name = f"graph_epoch_{k:03d}.csv"
        csvio.write_graph_csv(out / name, g)
        manifest["epochs"].append({"first_slot": first, "graph": name})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(manifest['epochs'])} graph epoch(s) and {cfg.horizon} slots to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reconstruct", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--output")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_run)

    orc = sub.add_parser("oracle", help="compare the filter with the batch solver on trial 0")
    orc.add_argument("--config", required=True)
    orc.add_argument("--seed", type=int)
    orc.add_argument("--horizon", type=int, default=5)
    orc.add_argument("--tol", type=float, default=1e-7)
    orc.set_defaults(func=cmd_oracle)

    gen = sub.add_parser("gen", help="write the trial-0 scenario as CSV files plus manifest.json")
    gen.add_argument("--config", required=True)
    gen.add_argument("--output")
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ReconstructionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
