"""Synthetic dynamic graphs and graph signals.

Graphs follow a Kronecker edge-probability model that is perturbed every
``t_change`` slots ("rich get richer": weight is added preferentially between
high-degree nodes) and thinned every ``t_delete`` slots without ever
disconnecting. Signals are a bandlimited part plus either a state-space trend
or an autoregressive term driven by the adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import NamedTuple, Optional

import numpy as np

from .errors import DisconnectedAfterRetries, ReconstructionError, SingularNoiseKernel
from .graph import (
    EigenBasis,
    Graph,
    GraphSequence,
    TransitionSpec,
    build_graph,
    eigendecompose,
    is_connected,
    laplacian,
    transition_matrix,
)
from .kernels import KernelSpec, kernel_spectrum

DEFAULT_SEED_MATRIX = ((1.0, 0.1, 0.7), (0.3, 0.1, 0.5), (0.0, 1.0, 0.1))
MAX_RETRIES = 100


@dataclass(frozen=True)
class KroneckerConfig:
    seed_matrix: tuple = DEFAULT_SEED_MATRIX
    power: int = 4
    omega: float = 0.0
    t_change: int = 10
    t_delete: int = 20
    delete_prob: float = 0.1
    # seed 0 gives no connected draw of the default N=81 model within the retry budget
    rng_seed: int = 1

    def __post_init__(self):
        s = np.asarray(self.seed_matrix, dtype=float)
        if s.shape != (3, 3) or (s < 0).any() or (s > 1).any():
            raise ReconstructionError("seed matrix must be 3x3 with entries in [0, 1]")
        if self.power < 1 or self.omega < 0 or self.t_change < 1 or self.t_delete < 1:
            raise ReconstructionError("invalid Kronecker configuration")
        if not 0 <= self.delete_prob <= 1:
            raise ReconstructionError("delete_prob must lie in [0, 1]")
        object.__setattr__(self, "seed_matrix", tuple(map(tuple, s.tolist())))


@dataclass(frozen=True)
class SignalModelConfig:
    model: str = "bandlimited_plus_trend"
    bandwidth: int = 5
    trend_transition: TransitionSpec = field(
        default_factory=lambda: TransitionSpec("scaled_adjacency_plus_identity", 0.03))
    trend_noise: KernelSpec = field(default_factory=lambda: KernelSpec("diffusion", {"sigma2": 0.25}))
    gamma_f: float = 1e-2
    noise_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.model not in ("bandlimited_plus_trend", "autoregressive_plus_bandlimited"):
            raise ReconstructionError(f"unknown signal model {self.model!r}")
        if self.bandwidth < 0 or self.gamma_f < 0 or self.noise_std < 0:
            raise ReconstructionError("bandwidth, gamma_f and noise_std must be >= 0")


def kronecker_expand(seed, power: int) -> np.ndarray:
    if power < 1:
        raise ReconstructionError("power must be >= 1")
    s = np.asarray(seed, dtype=float)
    return reduce(np.kron, [s] * power)


def bernoulli_adjacency(s, rng: np.random.Generator) -> np.ndarray:
    """One draw: ``A[n, n'] ~ Bernoulli(s[n, n'])`` for ``n > n'``, mirrored, zero diagonal."""
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    lower = np.tril_indices(n, -1)
    a = np.zeros((n, n))
    a[lower] = (rng.random(lower[0].size) < s[lower]).astype(float)
    return a + a.T


def sample_initial_adjacency(s, rng: np.random.Generator) -> Graph:
    """Bernoulli draw retried until connected."""
    for _ in range(MAX_RETRIES):
        a = bernoulli_adjacency(s, rng)
        if is_connected(a):
            return build_graph(a)
    raise DisconnectedAfterRetries(f"no connected draw in {MAX_RETRIES} attempts")


def _perturb(a, omega, rng):
    total = a.sum()
    if total == 0 or omega == 0:
        return a
    deg = a.sum(axis=1)
    n = a.shape[0]
    lower = np.tril_indices(n, -1)
    # the degree-product ratio can exceed 1 for hubs; it is a probability
    prob = np.minimum(1.0, deg[lower[0]] * deg[lower[1]] / total)
    hit = rng.random(prob.shape) < prob
    bump = np.abs(rng.normal(0.0, omega, size=prob.shape))
    out = a.copy()
    out[lower] += np.where(hit, bump, 0.0)
    upper = (lower[1], lower[0])
    out[upper] = out[lower]
    return out


def _delete(a, prob, rng):
    out = a.copy()
    rows, cols = np.nonzero(np.tril(out, -1))
    order = rng.permutation(rows.size)
    coins = rng.random(rows.size)
    for k in order:
        if coins[k] >= prob:
            continue
        i, j = rows[k], cols[k]
        w = out[i, j]
        out[i, j] = out[j, i] = 0.0
        if not is_connected(out):
            out[i, j] = out[j, i] = w
    return out


def evolve_graph(g: Graph, slot: int, cfg: KroneckerConfig, rng: np.random.Generator) -> Graph:
    """Graph for slot ``slot + 1`` given the graph at ``slot``."""
    a = np.array(g.adjacency)
    changed = False
    if slot % cfg.t_change == 0:
        a = _perturb(a, cfg.omega, rng)
        changed = True
    if slot % cfg.t_delete == 0 and cfg.delete_prob > 0:
        a = _delete(a, cfg.delete_prob, rng)
        changed = True
    return build_graph(a) if changed else g


def kronecker_sequence(cfg: KroneckerConfig, t_max: int, rng: Optional[np.random.Generator] = None) -> GraphSequence:
    """Dynamic graph over slots ``1..t_max``; a new snapshot whenever the graph changes."""
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    g = sample_initial_adjacency(kronecker_expand(cfg.seed_matrix, cfg.power), rng)
    snapshots = [(1, g)]
    for t in range(1, t_max):
        nxt = evolve_graph(g, t, cfg, rng)
        if nxt is not g and not np.array_equal(nxt.adjacency, g.adjacency):
            snapshots.append((t + 1, nxt))
        g = nxt
    return GraphSequence(tuple(snapshots))


def gen_bandlimited(basis: EigenBasis, bandwidth: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= bandwidth <= basis.num_nodes:
        raise ReconstructionError(f"bandwidth {bandwidth} outside [0, {basis.num_nodes}]")
    coeffs = rng.standard_normal(bandwidth)
    return basis.eigenvectors[:, :bandwidth] @ coeffs


class _Epochs:
    """Per-snapshot eigenbases, computed once."""

    def __init__(self, graphs: GraphSequence):
        self.graphs = graphs
        self.bases = [eigendecompose(laplacian(g)) for _, g in graphs.snapshots]

    def basis_at(self, slot):
        return self.bases[self.graphs.epoch_index(slot)]


def _noise_roots(epochs: _Epochs, noise_kernel: KernelSpec):
    roots = []
    for basis in epochs.bases:
        spectrum = kernel_spectrum(basis, noise_kernel)
        if not (spectrum > 0).all():
            raise SingularNoiseKernel("state-noise kernel must be positive definite")
        roots.append(np.sqrt(spectrum))
    return roots


def _trend(epochs: _Epochs, trend: TransitionSpec, noise_kernel: KernelSpec, t_max, rng):
    graphs = epochs.graphs
    roots = _noise_roots(epochs, noise_kernel)
    n = graphs.num_nodes
    chi = np.zeros((t_max, n))
    prev = np.zeros(n)
    for t in range(1, t_max + 1):
        b = transition_matrix(trend, graphs.graph_at(max(t - 1, 1)))
        k = graphs.epoch_index(t)
        u = epochs.bases[k].eigenvectors
        # symmetric square root U diag(sqrt(s)) U^T applied to white noise
        eta = u @ (roots[k] * (u.T @ rng.standard_normal(n)))
        prev = b @ prev + eta
        chi[t - 1] = prev
    return chi


def gen_trend_sequence(graphs: GraphSequence, trend: TransitionSpec, noise_kernel: KernelSpec,
                       t_max: int, rng: np.random.Generator) -> list:
    """``chi(t) = B(t) chi(t-1) + eta(t)`` from ``chi(0) = 0``, eta ~ N(0, K_eta(t)).

    ``B(t)`` is built from the graph at ``t - 1`` and ``K_eta(t)`` from the
    graph at ``t``.
    """
    return list(_trend(_Epochs(graphs), trend, noise_kernel, t_max, rng))


class Scenario(NamedTuple):
    signals: np.ndarray  # (T, N)
    nu: Optional[np.ndarray]  # instantaneous part, bandlimited_plus_trend only
    chi: Optional[np.ndarray]  # trend part, bandlimited_plus_trend only
    graphs: GraphSequence


def gen_scenario(model: SignalModelConfig, graphs: GraphSequence, t_max: int,
                 rng: Optional[np.random.Generator] = None) -> Scenario:
    if rng is None:
        rng = np.random.default_rng(model.rng_seed)
    epochs = _Epochs(graphs)
    n = graphs.num_nodes
    if model.bandwidth > n:
        raise ReconstructionError(f"bandwidth {model.bandwidth} exceeds N={n}")
    if model.model == "bandlimited_plus_trend":
        nu = np.array([gen_bandlimited(epochs.basis_at(t), model.bandwidth, rng) for t in range(1, t_max + 1)])
        chi = _trend(epochs, model.trend_transition, model.trend_noise, t_max, rng)
        return Scenario(nu + chi, nu, chi, graphs)
    signals = np.zeros((t_max, n))
    prev = np.zeros(n)
    for t in range(1, t_max + 1):
        a = graphs.graph_at(t).adjacency
        prev = model.gamma_f * (a @ prev) + gen_bandlimited(epochs.basis_at(t), model.bandwidth, rng)
        signals[t - 1] = prev
    return Scenario(signals, None, None, graphs)
