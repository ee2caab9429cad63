"""Monte Carlo experiments: sampling, observation, per-method runs and NMSE.

A run is described by one JSON document (see :func:`parse_config`). Every
trial draws its own signal, sampling set and noise from
``np.random.SeedSequence(seed + trial)``, runs every configured method on the
same observations and records the squared error on the unsampled nodes.
Synthetic Kronecker graphs are drawn once per scenario from the graph's own
``rng_seed`` unless ``per_trial_graph`` is set.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as csvio
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    ReconstructionError,
    SampleCountExceedsNodes,
    SlotError,
    ZeroDenominator,
)
from .filter import (
    FilterConfig,
    Observation,
    initial_state,
    instantaneous_estimate,
    kekrikf_step,
    kf_only_step,
    kkr_only_step,
)
from .graph import GraphSequence, TransitionSpec, eigendecompose, graph_from_routing, laplacian, transition_matrix
from .kernels import KernelDictionary, KernelSpec, build_kernel, combine
from .mkl import CorrelationAccumulator, MKLConfig, PGDParams, first_basis_vector, mkrikf_step
from .synth import KroneckerConfig, Scenario, SignalModelConfig, gen_scenario, kronecker_sequence

log = logging.getLogger(__name__)

METHOD_KINDS = ("kekrikf", "mkrikf", "ie", "kf", "kkr")


# sampling and scoring

@dataclass(frozen=True, eq=False)
class SamplingPlan:
    indices: np.ndarray
    num_nodes: int
    rng_seed: Optional[int] = None
    mode: str = "fixed_uniform"

    @property
    def sample_count(self) -> int:
        return self.indices.size

    def complement(self) -> np.ndarray:
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[self.indices] = False
        return np.flatnonzero(mask)


def draw_sampling(n: int, s: int, rng) -> SamplingPlan:
    """``s`` distinct nodes drawn uniformly without replacement, sorted."""
    if not 0 <= s <= n:
        raise SampleCountExceedsNodes(f"cannot sample {s} of {n} nodes")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=s, replace=False)) if s else np.zeros(0, dtype=int)
    return SamplingPlan(idx.astype(int), n, seed)


def observe(signal, plan: SamplingPlan, noise_std: float, slot: int, rng) -> Observation:
    x = np.asarray(signal, dtype=float)
    if x.shape != (plan.num_nodes,):
        raise DimensionMismatch(f"signal has shape {x.shape}, plan expects {plan.num_nodes} nodes")
    values = x[plan.indices]
    if noise_std > 0:
        values = values + rng.normal(0.0, noise_std, size=values.shape)
    return Observation(slot, plan.indices, values)


def nmse_terms(truth, estimates, plan: SamplingPlan):
    """Per-slot numerator and denominator of the NMSE on unsampled nodes."""
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if truth.shape != estimates.shape:
        raise DimensionMismatch(f"truth {truth.shape} vs estimates {estimates.shape}")
    comp = plan.complement()
    err = truth[:, comp] - estimates[:, comp]
    return (err ** 2).sum(axis=1), (truth[:, comp] ** 2).sum(axis=1)


def nmse(truth, estimates, plan: SamplingPlan, horizon: Optional[int] = None) -> float:
    """Cumulative NMSE over slots ``1..horizon`` on the unsampled nodes."""
    num, den = nmse_terms(truth, estimates, plan)
    if horizon is None:
        horizon = num.size
    if not 1 <= horizon <= num.size:
        raise ReconstructionError(f"horizon {horizon} outside 1..{num.size}")
    if plan.complement().size == 0:
        raise ZeroDenominator("every node is sampled; NMSE is undefined")
    d = den[:horizon].sum()
    if d == 0:
        raise ZeroDenominator("truth is identically zero on the unsampled nodes")
    return float(num[:horizon].sum() / d)


# method descriptors

@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str
    lambda1: float = 1.0
    lambda2: float = 1.0
    kernel_nu: Optional[KernelSpec] = None
    kernel_eta: Optional[KernelSpec] = None
    transition: TransitionSpec = field(default_factory=TransitionSpec)
    dict_nu: tuple = ()
    dict_eta: tuple = ()
    mkl: MKLConfig = field(default_factory=MKLConfig)

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ReconstructionError(f"unknown method kind {self.kind!r}")
        if self.kind == "mkrikf":
            if not self.dict_nu or not self.dict_eta:
                raise ReconstructionError("mkrikf needs dict_nu and dict_eta")
        elif self.kernel_nu is None or (self.kind != "ie" and self.kernel_eta is None):
            raise ReconstructionError(f"{self.kind} needs kernel_nu and kernel_eta")


class _Topology:
    """Per-epoch eigenbases, kernels, dictionaries and transitions, built lazily."""

    def __init__(self, graphs: GraphSequence):
        self.graphs = graphs
        self._bases = {}
        self._kernels = {}
        self._dicts = {}
        self._transitions = {}

    def basis(self, epoch):
        if epoch not in self._bases:
            self._bases[epoch] = eigendecompose(laplacian(self.graphs.snapshots[epoch][1]))
        return self._bases[epoch]

    def kernel(self, epoch, spec: KernelSpec):
        key = (epoch, json.dumps(spec.to_dict(), sort_keys=True))
        if key not in self._kernels:
            self._kernels[key] = build_kernel(self.basis(epoch), spec)
        return self._kernels[key]

    def dictionary(self, epoch, specs):
        key = (epoch, tuple(json.dumps(s.to_dict(), sort_keys=True) for s in specs))
        if key not in self._dicts:
            self._dicts[key] = KernelDictionary.from_specs(self.basis(epoch), specs)
        return self._dicts[key]

    def transition(self, slot, spec: TransitionSpec):
        # B(t, t-1) is built from the graph of the previous slot
        epoch = self.graphs.epoch_index(max(slot - 1, 1))
        key = (epoch, json.dumps(spec.to_dict(), sort_keys=True))
        if key not in self._transitions:
            self._transitions[key] = transition_matrix(spec, self.graphs.snapshots[epoch][1])
        return self._transitions[key]


@dataclass(eq=False)
class MethodRun:
    estimates: np.ndarray
    theta_nu: Optional[np.ndarray] = None
    theta_eta: Optional[np.ndarray] = None
    eta_fallbacks: int = 0
    wall_time: float = 0.0


_STEPS = {"kekrikf": kekrikf_step, "kf": kf_only_step, "kkr": kkr_only_step}


def run_method(method: MethodSpec, graphs: GraphSequence, observations, topology: _Topology = None) -> MethodRun:
    """Run one method over all slots.

    On a topology change the kernels (or dictionaries) are rebuilt on the new
    eigenbasis while the filter state, accumulators and coefficients carry
    over.
    """
    topo = topology or _Topology(graphs)
    n = graphs.num_nodes
    horizon = len(observations)
    est = np.zeros((horizon, n))
    start = time.perf_counter()
    run = MethodRun(est)
    if method.kind == "mkrikf":
        run.theta_nu = np.zeros((horizon, len(method.dict_nu)))
        run.theta_eta = np.zeros((horizon, len(method.dict_eta)))
        theta_nu = first_basis_vector(len(method.dict_nu))
        theta_eta = first_basis_vector(len(method.dict_eta))
        acc = CorrelationAccumulator.empty(n, method.mkl)
    state = None
    for t, obs in enumerate(observations, start=1):
        try:
            epoch = graphs.epoch_index(t)
            b = topo.transition(t, method.transition)
            if method.kind == "ie":
                est[t - 1] = instantaneous_estimate(obs, topo.kernel(epoch, method.kernel_nu), method.lambda2)
                continue
            base = FilterConfig(method.lambda1, method.lambda2, b)
            if method.kind == "mkrikf":
                dicts = (topo.dictionary(epoch, method.dict_nu), topo.dictionary(epoch, method.dict_eta))
                if state is None:
                    state = initial_state(base.with_kernels(dicts[0].kernel(0), combine(dicts[1], theta_eta)))
                out = mkrikf_step(state, acc, (theta_nu, theta_eta), obs, dicts, base, method.mkl)
                state, acc, theta_nu, theta_eta = out.state, out.accumulator, out.theta_nu, out.theta_eta
                run.eta_fallbacks += int(out.eta_fallback)
                run.theta_nu[t - 1], run.theta_eta[t - 1] = theta_nu, theta_eta
                est[t - 1] = out.estimate.f
                continue
            cfg = base.with_kernels(topo.kernel(epoch, method.kernel_nu), topo.kernel(epoch, method.kernel_eta))
            if state is None:
                state = initial_state(cfg)
            state, slot_est = _STEPS[method.kind](state, obs, cfg)
            est[t - 1] = slot_est.f
        except SlotError:
            raise
        except ReconstructionError as exc:
            raise SlotError(t, exc) from exc
    run.wall_time = time.perf_counter() - start
    return run


# configuration

@dataclass(frozen=True)
class ScenarioSpec:
    kind: str  # "synthetic" or "dataset"
    graph_source: str = "kronecker"  # kronecker | edge_list | routing
    kronecker: KroneckerConfig = field(default_factory=KroneckerConfig)
    graph_path: Optional[str] = None
    routing_path: Optional[str] = None
    signal: SignalModelConfig = field(default_factory=SignalModelConfig)
    signals_path: Optional[str] = None
    manifest_path: Optional[str] = None
    noise_std: float = 0.0
    per_trial_graph: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    methods: tuple
    horizon: int
    sample_count: Optional[int] = None
    sample_fraction: Optional[float] = None
    trials: int = 1
    seed: int = 0
    output_dir: str = "results"
    save_estimates: bool = False
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False)

    def resolve_sample_count(self, n: int) -> int:
        if self.sample_count is not None:
            return self.sample_count
        return int(math.ceil(self.sample_fraction * n - 1e-9))


def _get(d, key, path, kind=None, default=...):
    if key not in d:
        if default is ...:
            raise ConfigInvalid(f"{path}.{key}" if path else key, "missing required field")
        return default
    v = d[key]
    if kind is not None and not isinstance(v, kind) or isinstance(v, bool) and kind in (int, float, (int, float)):
        raise ConfigInvalid(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}, got {v!r}")
    return v


def _wrap(path, fn, *args):
    try:
        return fn(*args)
    except ConfigInvalid:
        raise
    except (ReconstructionError, TypeError, KeyError, ValueError) as exc:
        raise ConfigInvalid(path, str(exc)) from exc


def _kernel_specs(raw, path):
    """A kernel spec, or a list of them; list-valued parameters expand into a grid."""
    items = raw if isinstance(raw, list) else [raw]
    out = []
    for i, item in enumerate(items):
        p = f"{path}[{i}]" if isinstance(raw, list) else path
        if not isinstance(item, dict):
            raise ConfigInvalid(p, "kernel spec must be an object")
        grid = [dict(item)]
        for key, value in item.items():
            if isinstance(value, list):
                grid = [dict(g, **{key: v}) for g in grid for v in value]
        out.extend(_wrap(p, KernelSpec.from_dict, g) for g in grid)
    return out


def _transition(raw, path):
    if not isinstance(raw, dict):
        raise ConfigInvalid(path, "transition must be an object")
    return _wrap(path, TransitionSpec.from_dict, raw)


def _method(raw, path):
    if not isinstance(raw, dict):
        raise ConfigInvalid(path, "method must be an object")
    kind = _get(raw, "kind", path, str)
    name = _get(raw, "name", path, str, default=kind)
    kw = dict(
        name=name,
        kind=kind,
        lambda1=float(_get(raw, "lambda1", path, (int, float), 1.0)),
        lambda2=float(_get(raw, "lambda2", path, (int, float), 1.0)),
        transition=_transition(_get(raw, "transition", path, dict, {"form": "scaled_identity", "alpha": 1.0}),
                               f"{path}.transition"),
    )
    for key in ("kernel_nu", "kernel_eta"):
        if key in raw:
            kw[key] = _kernel_specs(raw[key], f"{path}.{key}")[0]
    for key in ("dict_nu", "dict_eta"):
        if key in raw:
            kw[key] = tuple(_kernel_specs(raw[key], f"{path}.{key}"))
    if kind == "mkrikf":
        pgd = _wrap(f"{path}.pgd", lambda d: PGDParams(**d), _get(raw, "pgd", path, dict, {}))
        kw["mkl"] = _wrap(path, lambda: MKLConfig(
            mu_theta_nu=float(raw.get("mu_theta_nu", 0.0)),
            mu_theta_eta=float(raw.get("mu_theta_eta", 0.0)),
            gamma_nu=float(raw.get("gamma_nu", 0.99)),
            gamma_eta=float(raw.get("gamma_eta", 0.99)),
            accumulator_mode=raw.get("accumulator_mode", "forgetting"),
            pgd=pgd,
        ))
    return _wrap(path, lambda: MethodSpec(**kw))


def _resolve(base_dir, p):
    if p is None:
        return None
    p = Path(p)
    return str(p if p.is_absolute() or base_dir is None else Path(base_dir) / p)


def _scenario(raw, path, base_dir):
    if not isinstance(raw, dict):
        raise ConfigInvalid(path, "scenario must be an object")
    kind = _get(raw, "type", path, str, "synthetic")
    noise = float(_get(raw, "noise_std", path, (int, float), 0.0))
    if kind == "dataset":
        manifest = _resolve(base_dir, raw.get("manifest"))
        if manifest is None and "signals" not in raw:
            raise ConfigInvalid(f"{path}.signals", "dataset scenario needs 'signals' or 'manifest'")
        source = "routing" if "routing" in raw else "edge_list"
        if manifest is None and "graph" not in raw and "routing" not in raw:
            raise ConfigInvalid(f"{path}.graph", "dataset scenario needs 'graph' or 'routing'")
        return ScenarioSpec("dataset", source, graph_path=_resolve(base_dir, raw.get("graph")),
                            routing_path=_resolve(base_dir, raw.get("routing")),
                            signals_path=_resolve(base_dir, raw.get("signals")),
                            manifest_path=manifest, noise_std=noise)
    if kind != "synthetic":
        raise ConfigInvalid(f"{path}.type", f"unknown scenario type {kind!r}")
    graph = _get(raw, "graph", path, dict, {"kind": "kronecker"})
    gpath = f"{path}.graph"
    source = _get(graph, "kind", gpath, str, "kronecker")
    kron = KroneckerConfig()
    if source == "kronecker":
        fields = {k: v for k, v in graph.items() if k not in ("kind", "per_trial_graph")}
        kron = _wrap(gpath, lambda: KroneckerConfig(**fields))
    elif source not in ("edge_list", "routing"):
        raise ConfigInvalid(f"{gpath}.kind", f"unknown graph kind {source!r}")
    elif "path" not in graph:
        raise ConfigInvalid(f"{gpath}.path", "missing required field")
    sig = _get(raw, "signal", path, dict, {})
    spath = f"{path}.signal"
    trend = _get(sig, "trend", spath, dict, {})
    model = _wrap(spath, lambda: SignalModelConfig(
        model=sig.get("model", "bandlimited_plus_trend"),
        bandwidth=int(sig.get("bandwidth", 5)),
        trend_transition=_transition(trend.get("transition", {"form": "scaled_adjacency_plus_identity",
                                                               "alpha": 0.03}), f"{spath}.trend.transition"),
        trend_noise=_kernel_specs(trend.get("noise_kernel", {"family": "diffusion", "sigma2": 0.25}),
                                  f"{spath}.trend.noise_kernel")[0],
        gamma_f=float(sig.get("gamma_f", 1e-2)),
    ))
    gfile = _resolve(base_dir, graph.get("path"))
    return ScenarioSpec("synthetic", source, kron,
                        graph_path=gfile if source == "edge_list" else None,
                        routing_path=gfile if source == "routing" else None,
                        signal=model, noise_std=noise,
                        per_trial_graph=bool(_get(graph, "per_trial_graph", gpath, bool, False)))


def parse_config(raw: dict, base_dir=None) -> ExperimentConfig:
    """Validate a JSON experiment document; errors carry the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("$", "config must be a JSON object")
    scenario = _scenario(_get(raw, "scenario", ""), "scenario", base_dir)
    methods_raw = _get(raw, "methods", "", list)
    if not methods_raw:
        raise ConfigInvalid("methods", "at least one method is required")
    methods = tuple(_method(m, f"methods[{i}]") for i, m in enumerate(methods_raw))
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigInvalid("methods", f"method names must be unique, got {names}")
    horizon = _get(raw, "horizon", "", int)
    if horizon < 1:
        raise ConfigInvalid("horizon", "must be >= 1")
    sampling = _get(raw, "sampling", "", dict)
    count = _get(sampling, "sample_count", "sampling", int, None)
    frac = _get(sampling, "sample_fraction", "sampling", (int, float), None)
    if (count is None) == (frac is None):
        raise ConfigInvalid("sampling", "give exactly one of sample_count or sample_fraction")
    if count is not None and count < 0:
        raise ConfigInvalid("sampling.sample_count", "must be >= 0")
    if frac is not None and not 0 <= frac <= 1:
        raise ConfigInvalid("sampling.sample_fraction", "must lie in [0, 1]")
    trials = _get(raw, "trials", "", int, 1)
    if trials < 1:
        raise ConfigInvalid("trials", "must be >= 1")
    return ExperimentConfig(
        scenario=scenario,
        methods=methods,
        horizon=horizon,
        sample_count=count,
        sample_fraction=None if frac is None else float(frac),
        trials=trials,
        seed=_get(raw, "seed", "", int, 0),
        output_dir=_resolve(base_dir, _get(raw, "output_dir", "", str, "results")),
        save_estimates=bool(_get(raw, "save_estimates", "", bool, False)),
        workers=_get(raw, "workers", "", int, 1),
        raw=raw,
    )


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("$", f"invalid JSON: {exc}") from exc
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return parse_config(raw, base_dir=path.parent)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# scenario materialization

def _load_manifest(path):
    path = Path(path)
    m = json.loads(path.read_text())
    snaps = tuple((e["first_slot"], csvio.load_graph_csv(path.parent / e["graph"], m.get("num_nodes")))
                  for e in m["epochs"])
    return GraphSequence(snaps), csvio.load_signals_csv(path.parent / m["signals"])


def _static_graph(spec: ScenarioSpec):
    if spec.graph_source == "routing":
        return GraphSequence.static(graph_from_routing(csvio.load_routing_csv(spec.routing_path)))
    return GraphSequence.static(csvio.load_graph_csv(spec.graph_path))


def build_scenario(config: ExperimentConfig, trial_seed: int) -> tuple:
    """Graphs, true signals and the random streams for one trial.

    Returns ``(scenario, sampling_rng, noise_rng)``.
    """
    graph_ss, signal_ss, sampling_ss, noise_ss = np.random.SeedSequence(trial_seed).spawn(4)
    spec = config.scenario
    horizon = config.horizon
    if spec.kind == "dataset":
        if spec.manifest_path:
            graphs, signals = _load_manifest(spec.manifest_path)
        else:
            graphs, signals = _static_graph(spec), csvio.load_signals_csv(spec.signals_path)
        if signals.shape[0] < horizon:
            raise ConfigInvalid("horizon", f"dataset has only {signals.shape[0]} slots")
        if signals.shape[1] != graphs.num_nodes:
            raise ConfigInvalid("scenario", f"signals have {signals.shape[1]} columns, graph has "
                                            f"{graphs.num_nodes} nodes")
        scenario = Scenario(signals[:horizon], None, None, graphs)
    else:
        if spec.graph_source == "kronecker":
            # by default one graph sequence per scenario; trials vary signal, sampling and noise
            graph_rng = np.random.default_rng(graph_ss if spec.per_trial_graph else spec.kronecker.rng_seed)
            graphs = kronecker_sequence(spec.kronecker, horizon, graph_rng)
        else:
            graphs = _static_graph(spec)
        scenario = gen_scenario(spec.signal, graphs, horizon, np.random.default_rng(signal_ss))
    return scenario, np.random.default_rng(sampling_ss), np.random.default_rng(noise_ss)


# experiments

@dataclass(eq=False)
class TrialResult:
    seed: int
    num: dict = field(default_factory=dict)  # method -> per-slot numerator
    den: Optional[np.ndarray] = None
    thetas: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)
    wall_time: dict = field(default_factory=dict)
    error: Optional[str] = None


def run_trial(config: ExperimentConfig, trial: int, keep_estimates: bool = False) -> TrialResult:
    seed = config.seed + trial
    result = TrialResult(seed)
    try:
        scenario, sampling_rng, noise_rng = build_scenario(config, seed)
        n = scenario.graphs.num_nodes
        plan = draw_sampling(n, config.resolve_sample_count(n), sampling_rng)
        obs = [observe(x, plan, config.scenario.noise_std, t, noise_rng)
               for t, x in enumerate(scenario.signals, start=1)]
        topo = _Topology(scenario.graphs)
        for method in config.methods:
            run = run_method(method, scenario.graphs, obs, topo)
            num, den = nmse_terms(scenario.signals, run.estimates, plan)
            result.num[method.name] = num
            result.den = den
            result.wall_time[method.name] = run.wall_time
            if run.theta_nu is not None:
                result.thetas[method.name] = (run.theta_nu, run.theta_eta)
            if keep_estimates:
                result.estimates[method.name] = run.estimates
    except ConfigInvalid:
        raise
    except ReconstructionError as exc:
        log.warning("trial %d (seed %d) failed: %s", trial, seed, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


@dataclass(eq=False)
class RunReport:
    methods: list
    nmse: dict  # method -> cumulative NMSE per slot
    nmse_instant: dict  # method -> per-slot NMSE
    trial_nmse: dict  # method -> final cumulative NMSE per successful trial
    thetas: dict  # method -> (mean theta_nu, mean theta_eta) per slot
    wall_time: dict
    metadata: dict
    estimates: dict = field(default_factory=dict)


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def _nanmean(rows):
    finite = np.isfinite(rows)
    count = finite.sum(axis=0)
    total = np.where(finite, rows, 0.0).sum(axis=0)
    return np.where(count > 0, total / np.maximum(count, 1), np.nan)


def aggregate(config: ExperimentConfig, results) -> RunReport:
    ok = [r for r in results if r.error is None]
    if not ok:
        raise ReconstructionError("all trials failed: " + "; ".join(r.error for r in results))
    names = [m.name for m in config.methods]
    nmse_cum, nmse_inst, per_trial, thetas, wall = {}, {}, {}, {}, {}
    for name in names:
        # expectation over trials = sample mean of each trial's NMSE curve
        cum = np.array([_ratio(np.cumsum(r.num[name]), np.cumsum(r.den)) for r in ok])
        inst = np.array([_ratio(r.num[name], r.den) for r in ok])
        nmse_cum[name] = _nanmean(cum)
        nmse_inst[name] = _nanmean(inst)
        per_trial[name] = [float(c[-1]) for c in cum]
        wall[name] = float(sum(r.wall_time[name] for r in ok))
        if name in ok[0].thetas:
            thetas[name] = tuple(np.mean([r.thetas[name][k] for r in ok], axis=0) for k in (0, 1))
    metadata = {
        "config_hash": config_hash(config.raw),
        "trial_seeds": [r.seed for r in results],
        "successful_trials": len(ok),
        "failures": {str(r.seed): r.error for r in results if r.error is not None},
        "horizon": config.horizon,
    }
    estimates = ok[0].estimates if ok[0].seed == config.seed else {}
    return RunReport(names, nmse_cum, nmse_inst, per_trial, thetas, wall, metadata, estimates)


def run_experiment(config: ExperimentConfig, output_dir=None, write: bool = True) -> RunReport:
    trials = range(config.trials)
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_trial, [config] * config.trials, trials,
                                    [config.save_estimates and t == 0 for t in trials]))
    else:
        results = [run_trial(config, t, config.save_estimates and t == 0) for t in trials]
    report = aggregate(config, results)
    if write:
        write_report(report, output_dir or config.output_dir)
    return report


def _slug(name):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def write_report(report: RunReport, output_dir) -> Path:
    """Write the CSV/JSON outputs. Timing goes to ``timing.json`` so the rest is reproducible."""
    out = csvio.ensure_dir(output_dir)
    horizon = report.metadata["horizon"]
    slots = range(1, horizon + 1)
    for fname, table in (("nmse.csv", report.nmse), ("nmse_instant.csv", report.nmse_instant)):
        csvio.write_rows(out / fname, ["slot", *report.methods],
                         ([t, *(table[m][t - 1] for m in report.methods)] for t in slots))
    for name, (tn, te) in report.thetas.items():
        header = ["slot", *(f"nu_{p + 1}" for p in range(tn.shape[1])),
                  *(f"eta_{p + 1}" for p in range(te.shape[1]))]
        csvio.write_rows(out / f"thetas_{_slug(name)}.csv", header,
                         ([t, *tn[t - 1], *te[t - 1]] for t in slots))
    for name, est in report.estimates.items():
        csvio.write_signals_csv(out / f"estimates_{_slug(name)}.csv", est)
    summary = {
        "metadata": report.metadata,
        "final_nmse": {m: _json_float(report.nmse[m][-1]) for m in report.methods},
        "trial_nmse": {m: [_json_float(v) for v in report.trial_nmse[m]] for m in report.methods},
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"wall_time_s": report.wall_time}, indent=2) + "\n")
    return out


def _json_float(x):
    x = float(x)
    return None if not math.isfinite(x) else float(csvio.fmt(x))
