"""Direct minimizer of the space-time kernel ridge objective.

This is the independent check for the filter: the objective over all slots
``1..t`` is assembled as one quadratic and solved through its normal
equations, with no recursion. Desk scale only (``t * N <= 2000``).

The unknowns are ``chi(0..t)`` and ``nu(1..t)``. ``chi(0)`` carries the
prior ``||chi(0) - chi0||^2_{M0}``; with ``M0 = K_eta / lambda1`` this is the
same initialization the filter uses, so the final-slot blocks must coincide
with the filtered estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, ReconstructionError, SingularSystem
from .filter import FilterConfig, FilterState, Observation, initial_state

MAX_SIZE = 2000


@dataclass(frozen=True, eq=False)
class BatchSolution:
    chi: np.ndarray  # (t, N), slots 1..t
    nu: np.ndarray  # (t, N)
    chi0: np.ndarray
    objective: float


def _configs(configs, horizon):
    if isinstance(configs, FilterConfig):
        return [configs] * horizon
    configs = list(configs)
    if len(configs) < horizon:
        raise DimensionMismatch(f"{len(configs)} configs for horizon {horizon}")
    return configs[:horizon]


def _inverse(matrix, what):
    try:
        factor = linalg.cho_factor(matrix, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"{what} is not positive definite") from exc
    return linalg.cho_solve(factor, np.eye(matrix.shape[0]))


def _weighted(x, inv):
    return float(x @ inv @ x)


class _Layout:
    def __init__(self, n, horizon):
        self.n = n
        self.horizon = horizon
        self.size = n * (2 * horizon + 1)

    def chi(self, tau):  # tau = 0..t
        return slice(tau * self.n, (tau + 1) * self.n)

    def nu(self, tau):  # tau = 1..t
        base = (self.horizon + 1) * self.n
        return slice(base + (tau - 1) * self.n, base + tau * self.n)


def _terms(observations, configs, prior):
    """Yield the objective as weighted least-squares terms.

    Each term is ``(blocks, target, weight_inverse)`` and contributes
    ``(sum_j A_j x_j - target)^T W (...)`` where ``blocks`` lists
    ``(slice_fn, tau, A_j)``.
    """
    chi0, m0 = prior
    yield [("chi", 0, None)], chi0, _inverse(m0, "initial covariance")
    for tau, (obs, cfg) in enumerate(zip(observations, configs), start=1):
        n = cfg.num_nodes
        eye = np.eye(n)
        k_eta_inv = _inverse(cfg.kernel_eta.matrix, "kernel_eta") * cfg.lambda1
        yield [("chi", tau, eye), ("chi", tau - 1, -cfg.transition)], np.zeros(n), k_eta_inv
        k_nu_inv = _inverse(cfg.kernel_nu.matrix, "kernel_nu") * cfg.lambda2
        yield [("nu", tau, eye)], np.zeros(n), k_nu_inv
        if obs.size:
            sel = eye[obs.sample_indices]
            yield [("chi", tau, sel), ("nu", tau, sel)], obs.values, np.eye(obs.size) / obs.size


def batch_oracle(
    observations: Sequence[Observation],
    config: Union[FilterConfig, Sequence[FilterConfig]],
    horizon: int,
    initial: FilterState = None,
) -> BatchSolution:
    """Minimize the batch objective over slots ``1..horizon``.

    ``config`` may be one config for all slots or a per-slot list.
    ``initial`` defaults to the filter's own starting state.
    """
    if horizon < 1:
        raise ReconstructionError("horizon must be >= 1")
    observations = list(observations)[:horizon]
    if len(observations) < horizon:
        raise DimensionMismatch(f"{len(observations)} observations for horizon {horizon}")
    configs = _configs(config, horizon)
    n = configs[0].num_nodes
    if horizon * n > MAX_SIZE:
        raise ReconstructionError(f"batch oracle limited to t*N <= {MAX_SIZE}")
    if initial is None:
        initial = initial_state(configs[0])
    layout = _Layout(n, horizon)
    hessian = np.zeros((layout.size, layout.size))
    rhs = np.zeros(layout.size)
    for blocks, target, w in _terms(observations, configs, (initial.chi, initial.error_cov)):
        rows = [(getattr(layout, kind)(tau), np.eye(n) if a is None else a) for kind, tau, a in blocks]
        for si, ai in rows:
            wa_i = w @ ai
            rhs[si] += ai.T @ (w @ target)
            for sj, aj in rows:
                hessian[si, sj] += wa_i.T @ aj
    try:
        factor = linalg.cho_factor(hessian, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystem("normal equations are singular") from exc
    x = linalg.cho_solve(factor, rhs)
    chi = np.array([x[layout.chi(tau)] for tau in range(1, horizon + 1)])
    nu = np.array([x[layout.nu(tau)] for tau in range(1, horizon + 1)])
    chi0 = x[layout.chi(0)]
    value = batch_objective(chi0, chi, nu, observations, configs, initial)
    return BatchSolution(chi, nu, chi0, value)


def batch_objective(chi0, chi, nu, observations, config, initial: FilterState = None) -> float:
    """Value of the batch objective (including the ``chi(0)`` prior) at a point."""
    horizon = len(chi)
    configs = _configs(config, horizon)
    if initial is None:
        initial = initial_state(configs[0])
    d0 = np.asarray(chi0) - initial.chi
    total = _weighted(d0, _inverse(initial.error_cov, "initial covariance"))
    prev = np.asarray(chi0)
    for tau in range(horizon):
        cfg, obs = configs[tau], observations[tau]
        c, v = np.asarray(chi[tau]), np.asarray(nu[tau])
        if obs.size:
            r = obs.values - c[obs.sample_indices] - v[obs.sample_indices]
            total += float(r @ r) / obs.size
        total += cfg.lambda1 * _weighted(c - cfg.transition @ prev, _inverse(cfg.kernel_eta.matrix, "kernel_eta"))
        total += cfg.lambda2 * _weighted(v, _inverse(cfg.kernel_nu.matrix, "kernel_nu"))
        prev = c
    return total
