"""Kernel kriged Kalman filter.

Each slot splits the signal into a trend ``chi`` that follows the state
equation ``chi(t) = B chi(t-1) + eta(t)`` and an instantaneous part ``nu``.
The trend is tracked with a Kalman recursion whose measurement covariance is
``Cbar = K_nu[S,S] / lambda2 + |S| I``; ``nu`` is then kriged from the
residual.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    EmptyObservation,
    ReconstructionError,
    SingularInnovationCovariance,
    SlotOrderViolation,
)
from .kernels import KernelMatrix

MAX_CONDITION = 1e12


def _sym(m):
    return (m + m.T) / 2


@dataclass(frozen=True, eq=False)
class FilterConfig:
    """Per-slot filter inputs.

    ``transition`` is the resolved N x N matrix B(t, t-1). The kernels may be
    left unset on a template config (the multi-kernel filter fills them in
    each slot with :meth:`with_kernels`).
    """

    lambda1: float
    lambda2: float
    transition: np.ndarray
    kernel_nu: Optional[KernelMatrix] = None
    kernel_eta: Optional[KernelMatrix] = None

    def __post_init__(self):
        if not self.lambda1 > 0 or not self.lambda2 > 0:
            raise ReconstructionError("lambda1 and lambda2 must be > 0")
        b = np.asarray(self.transition, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise DimensionMismatch(f"transition must be square, got {b.shape}")
        object.__setattr__(self, "transition", b)
        n = b.shape[0]
        for name in ("kernel_nu", "kernel_eta"):
            k = getattr(self, name)
            if k is not None and k.num_nodes != n:
                raise DimensionMismatch(f"{name} is {k.num_nodes}x{k.num_nodes}, transition is {n}x{n}")
        if self.kernel_eta is not None:
            self.kernel_eta.require_positive_definite("kernel_eta")

    @property
    def num_nodes(self) -> int:
        return self.transition.shape[0]

    def with_kernels(self, kernel_nu: KernelMatrix, kernel_eta: KernelMatrix) -> "FilterConfig":
        return replace(self, kernel_nu=kernel_nu, kernel_eta=kernel_eta)

    def _require_kernels(self):
        if self.kernel_nu is None or self.kernel_eta is None:
            raise ReconstructionError("filter config has no kernels set")


@dataclass(frozen=True, eq=False)
class Observation:
    slot: int
    sample_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.sample_indices, dtype=int).reshape(-1)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if idx.shape != vals.shape:
            raise DimensionMismatch(f"{idx.size} sample indices but {vals.size} values")
        if idx.size and ((np.diff(idx) <= 0).any() or idx[0] < 0):
            raise ReconstructionError("sample indices must be strictly increasing and >= 0")
        if self.slot < 1:
            raise ReconstructionError("observation slots start at 1")
        object.__setattr__(self, "sample_indices", idx)
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return self.sample_indices.size

    def check_nodes(self, n: int) -> None:
        if self.size and self.sample_indices[-1] >= n:
            raise DimensionMismatch(f"sample index {self.sample_indices[-1]} out of range for N={n}")


@dataclass(frozen=True, eq=False)
class FilterState:
    chi: np.ndarray
    error_cov: np.ndarray
    slot: int = 0


@dataclass(frozen=True, eq=False)
class SlotEstimate:
    chi: np.ndarray
    nu: np.ndarray
    f: np.ndarray
    gain: np.ndarray
    innovation: np.ndarray


def initial_state(config: FilterConfig) -> FilterState:
    """``chi = 0`` and ``M = K_eta / lambda1`` at slot 0."""
    config._require_kernels()
    n = config.num_nodes
    return FilterState(np.zeros(n), config.kernel_eta.matrix / config.lambda1, 0)


def measurement_kernel(config: FilterConfig, obs: Observation) -> np.ndarray:
    idx = obs.sample_indices
    kbar = config.kernel_nu.matrix[np.ix_(idx, idx)]
    return kbar / config.lambda2 + obs.size * np.eye(obs.size)


def _factor(matrix, what):
    """Cholesky factor of a symmetric PD matrix, rejecting ill-conditioned ones."""
    evals = np.linalg.eigvalsh(matrix)
    if evals[0] <= 0 or evals[-1] / evals[0] > MAX_CONDITION:
        raise SingularInnovationCovariance(
            f"{what} is singular or ill-conditioned (eigenvalues {evals[0]:.3g}..{evals[-1]:.3g})"
        )
    return linalg.cho_factor(matrix, lower=True)


def predict(state: FilterState, config: FilterConfig):
    config._require_kernels()
    b = config.transition
    if state.chi.shape != (b.shape[0],) or state.error_cov.shape != b.shape:
        raise DimensionMismatch("filter state does not match the transition matrix")
    chi_pred = b @ state.chi
    cov_pred = _sym(b @ state.error_cov @ b.T + config.kernel_eta.matrix / config.lambda1)
    return chi_pred, cov_pred


def correct(chi_pred, cov_pred, obs: Observation, config: FilterConfig):
    """Gain and measurement update. Returns ``(state, gain, innovation)``."""
    n = chi_pred.shape[0]
    obs.check_nodes(n)
    idx = obs.sample_indices
    if obs.size == 0:
        return FilterState(chi_pred, cov_pred, obs.slot), np.zeros((n, 0)), np.zeros(0)
    cbar = measurement_kernel(config, obs)
    s_cov = cov_pred[:, idx]
    innov_cov = _sym(cbar + s_cov[idx, :])
    factor = _factor(innov_cov, "innovation covariance")
    gain = linalg.cho_solve(factor, s_cov.T).T
    innovation = obs.values - chi_pred[idx]
    chi = chi_pred + gain @ innovation
    cov = _sym(cov_pred - gain @ s_cov.T)
    return FilterState(chi, cov, obs.slot), gain, innovation


def _kriging_weights(config: FilterConfig, obs: Observation, residual):
    """``(K[S,S] + lambda2 |S| I)^{-1} residual``, i.e. ``Cbar^{-1} residual / lambda2``."""
    cbar = measurement_kernel(config, obs)
    factor = _factor(cbar, "measurement kernel")
    return linalg.cho_solve(factor, residual) / config.lambda2


def krige(state: FilterState, obs: Observation, config: FilterConfig) -> np.ndarray:
    n = state.chi.shape[0]
    if obs.size == 0:
        return np.zeros(n)
    idx = obs.sample_indices
    weights = _kriging_weights(config, obs, obs.values - state.chi[idx])
    return config.kernel_nu.matrix[:, idx] @ weights


def _check_order(state: FilterState, obs: Observation):
    if obs.slot != state.slot + 1:
        raise SlotOrderViolation(f"expected slot {state.slot + 1}, got {obs.slot}")


def kekrikf_step(state: FilterState, obs: Observation, config: FilterConfig):
    """One full filter iteration. Returns ``(new_state, SlotEstimate)``."""
    _check_order(state, obs)
    chi_pred, cov_pred = predict(state, config)
    new_state, gain, innovation = correct(chi_pred, cov_pred, obs, config)
    nu = krige(new_state, obs, config)
    return new_state, SlotEstimate(new_state.chi, nu, new_state.chi + nu, gain, innovation)


def kf_only_step(state: FilterState, obs: Observation, config: FilterConfig):
    """Trend-only variant: Kalman steps with ``nu`` forced to zero."""
    _check_order(state, obs)
    chi_pred, cov_pred = predict(state, config)
    new_state, gain, innovation = correct(chi_pred, cov_pred, obs, config)
    nu = np.zeros_like(new_state.chi)
    return new_state, SlotEstimate(new_state.chi, nu, new_state.chi.copy(), gain, innovation)


def kkr_only_step(state: FilterState, obs: Observation, config: FilterConfig):
    """Kriging-only variant: ``chi`` is held at zero and nothing is carried over."""
    _check_order(state, obs)
    config._require_kernels()
    n = config.num_nodes
    obs.check_nodes(n)
    zero = FilterState(np.zeros(n), state.error_cov, obs.slot)
    nu = krige(zero, obs, config)
    return zero, SlotEstimate(np.zeros(n), nu, nu.copy(), np.zeros((n, 0)), obs.values.copy())


def instantaneous_estimate(obs: Observation, kernel: KernelMatrix, lambda2: float) -> np.ndarray:
    """Per-slot kernel ridge regression, ``K S^T (K[S,S] + lambda2 |S| I)^{-1} y``."""
    if obs.size == 0:
        raise EmptyObservation(f"slot {obs.slot} has no samples")
    if not lambda2 > 0:
        raise ReconstructionError("lambda2 must be > 0")
    k = kernel.matrix
    obs.check_nodes(k.shape[0])
    idx = obs.sample_indices
    system = k[np.ix_(idx, idx)] + lambda2 * obs.size * np.eye(obs.size)
    weights = linalg.cho_solve(_factor(_sym(system), "regression system"), obs.values)
    return k[:, idx] @ weights
