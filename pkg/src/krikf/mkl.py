"""Online kernel matching and the multi-kernel filter.

Kernel coefficients are fitted by minimizing

    F(theta) = sum_n R_nn / Lambda_n(theta) + mu ||theta||^2,
    Lambda_n(theta) = sum_p theta_p s_p[n],

over ``theta >= 0``, where ``R = U^T Sigma U`` is a correlation matrix
projected onto the shared Laplacian eigenvectors and ``s_p`` are the
dictionary spectra. Because all dictionary kernels share ``U`` only the
diagonal of ``R`` matters, so F and its gradient cost O(N P).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import AllZeroCoefficients, DimensionMismatch, InfeasiblePoint, NoFeasibleDescent, ReconstructionError
from .filter import FilterConfig, FilterState, Observation, SlotEstimate, kekrikf_step
from .graph import EigenBasis
from .kernels import KernelDictionary, KernelMatrix, check_theta, combine

ACCUMULATOR_MODES = ("forgetting", "sample_mean")
MAX_HALVINGS = 60


@dataclass(frozen=True)
class PGDParams:
    max_iters: int = 1000
    tol: float = 1e-8
    armijo_s: float = 1.0
    armijo_beta: float = 0.5
    armijo_sigma: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1 or not self.tol > 0 or not self.armijo_s > 0:
            raise ReconstructionError("PGD parameters must be positive")
        if not 0 < self.armijo_beta < 1 or not 0 < self.armijo_sigma < 1:
            raise ReconstructionError("Armijo beta and sigma must lie in (0, 1)")


@dataclass(frozen=True)
class MKLConfig:
    mu_theta_nu: float = 0.0
    mu_theta_eta: float = 0.0
    gamma_nu: float = 0.99
    gamma_eta: float = 0.99
    accumulator_mode: str = "forgetting"
    pgd: PGDParams = field(default_factory=PGDParams)

    def __post_init__(self):
        if self.mu_theta_nu < 0 or self.mu_theta_eta < 0:
            raise ReconstructionError("coefficient regularizers must be >= 0")
        for g in (self.gamma_nu, self.gamma_eta):
            if not 0 < g <= 1:
                raise ReconstructionError("forgetting factors must lie in (0, 1]")
        if self.accumulator_mode not in ACCUMULATOR_MODES:
            raise ReconstructionError(f"accumulator_mode must be one of {ACCUMULATOR_MODES}")


@dataclass(frozen=True, eq=False)
class CorrelationAccumulator:
    """Running outer-product sums of kriged ``nu`` and of state residuals.

    In ``forgetting`` mode the stored matrices are the correlations
    themselves (started at I). In ``sample_mean`` mode they are plain sums and
    :meth:`correlations` divides by ``count``.
    """

    sigma_nu: np.ndarray
    sigma_eta: np.ndarray
    count: int = 0
    mode: str = "forgetting"

    @classmethod
    def empty(cls, n: int, cfg: MKLConfig) -> "CorrelationAccumulator":
        if cfg.accumulator_mode == "forgetting":
            return cls(np.eye(n), np.eye(n), 0, "forgetting")
        return cls(np.zeros((n, n)), np.zeros((n, n)), 0, "sample_mean")

    def correlations(self):
        if self.mode == "forgetting" or self.count == 0:
            return self.sigma_nu, self.sigma_eta
        return self.sigma_nu / self.count, self.sigma_eta / self.count


def accumulate(acc: CorrelationAccumulator, nu_hat, residual, cfg: MKLConfig) -> CorrelationAccumulator:
    v = np.asarray(nu_hat, dtype=float)
    e = np.asarray(residual, dtype=float)
    n = acc.sigma_nu.shape[0]
    if v.shape != (n,) or e.shape != (n,):
        raise DimensionMismatch("accumulator update vectors must have length N")
    if acc.mode == "forgetting":
        s_nu = cfg.gamma_nu * acc.sigma_nu + np.outer(v, v)
        s_eta = cfg.gamma_eta * acc.sigma_eta + np.outer(e, e)
    else:
        s_nu = acc.sigma_nu + np.outer(v, v)
        s_eta = acc.sigma_eta + np.outer(e, e)
    return CorrelationAccumulator(s_nu, s_eta, acc.count + 1, acc.mode)


@dataclass(frozen=True, eq=False)
class ProjectedCorrelation:
    matrix: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)


def project_correlation(basis: EigenBasis, sigma) -> ProjectedCorrelation:
    s = np.asarray(sigma, dtype=float)
    if s.shape != (basis.num_nodes, basis.num_nodes):
        raise DimensionMismatch(f"correlation is {s.shape}, basis has {basis.num_nodes} nodes")
    u = basis.eigenvectors
    r = u.T @ s @ u
    return ProjectedCorrelation((r + r.T) / 2)


def _rdiag(rcheck) -> np.ndarray:
    if isinstance(rcheck, ProjectedCorrelation):
        return rcheck.diagonal
    r = np.asarray(rcheck, dtype=float)
    return np.diag(r) if r.ndim == 2 else r


def _combined_spectrum(theta, dictionary):
    return np.asarray(theta, dtype=float) @ dictionary.spectra


def km_objective(theta, rcheck, dictionary: KernelDictionary, mu: float) -> float:
    """F(theta); ``inf`` when some ``Lambda_n <= 0`` meets a positive ``R_nn``.

    Modes with ``R_nn = 0`` contribute nothing, so ``theta = 0`` is feasible
    (and optimal) when the correlation vanishes.
    """
    theta = np.asarray(theta, dtype=float)
    r = _rdiag(rcheck)
    lam = _combined_spectrum(theta, dictionary)
    active = r != 0
    if (lam[active] <= 0).any():
        return np.inf
    return float(np.sum(r[active] / lam[active]) + mu * theta @ theta)


def km_gradient(theta, rcheck, dictionary: KernelDictionary, mu: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    r = _rdiag(rcheck)
    lam = _combined_spectrum(theta, dictionary)
    active = r != 0
    if (lam[active] <= 0).any():
        raise InfeasiblePoint("combined spectrum vanishes where the correlation does not")
    weights = np.zeros_like(r)
    weights[active] = r[active] / lam[active] ** 2
    return -dictionary.spectra @ weights + 2 * mu * theta


class OKMResult(NamedTuple):
    theta: np.ndarray
    iterations: int
    objective_trace: list


def okm_solve(warm_start, rcheck, dictionary: KernelDictionary, mu: float,
              pgd: PGDParams = PGDParams(), trace: bool = False):
    """Projected gradient descent with Armijo backtracking along the projection arc.

    Returns the final coefficients, or an :class:`OKMResult` when ``trace``
    is set (objective value at every accepted iterate).
    """
    theta = check_theta(warm_start, dictionary.size).copy()
    r = _rdiag(rcheck)
    value = km_objective(theta, r, dictionary, mu)
    if not np.isfinite(value):
        # a zero warm start with nonzero correlation: restart from a feasible point
        theta = np.ones(dictionary.size)
        value = km_objective(theta, r, dictionary, mu)
    values = [value]
    it = 0
    for it in range(1, pgd.max_iters + 1):
        grad = km_gradient(theta, r, dictionary, mu)
        step = pgd.armijo_s
        for _ in range(MAX_HALVINGS):
            trial = np.maximum(0.0, theta - step * grad)
            trial_value = km_objective(trial, r, dictionary, mu)
            if value - trial_value >= pgd.armijo_sigma * grad @ (theta - trial):
                break
            step *= pgd.armijo_beta
        else:
            raise NoFeasibleDescent("Armijo backtracking found no acceptable step")
        delta = np.max(np.abs(trial - theta), initial=0.0)
        theta, value = trial, trial_value
        values.append(value)
        if delta < pgd.tol:
            break
    if trace:
        return OKMResult(theta, it, values)
    return theta


class MKriKFStep(NamedTuple):
    state: FilterState
    estimate: SlotEstimate
    accumulator: CorrelationAccumulator
    theta_nu: np.ndarray
    theta_eta: np.ndarray
    eta_fallback: bool


def combine_or_zero(dictionary: KernelDictionary, theta) -> KernelMatrix:
    """Like :func:`combine`, but an all-zero theta gives the zero kernel."""
    t = check_theta(theta, dictionary.size)
    if not (t > 0).any():
        return KernelMatrix.zeros(dictionary.basis.num_nodes)
    return combine(dictionary, t)


def mkrikf_step(state: FilterState, acc: CorrelationAccumulator, thetas, obs: Observation,
                dicts, filter_cfg: FilterConfig, mkl_cfg: MKLConfig) -> MKriKFStep:
    """Filter with the current kernel mix, then refit both coefficient vectors.

    ``filter_cfg`` supplies lambda1, lambda2 and the transition matrix; its
    kernels (if any) are replaced by the combined dictionary kernels.
    """
    theta_nu, theta_eta = (np.asarray(t, dtype=float) for t in thetas)
    dict_nu, dict_eta = dicts
    if not (theta_eta > 0).any():
        raise AllZeroCoefficients("theta_eta must have a positive entry")
    cfg = filter_cfg.with_kernels(combine_or_zero(dict_nu, theta_nu), combine(dict_eta, theta_eta))
    new_state, est = kekrikf_step(state, obs, cfg)
    residual = new_state.chi - cfg.transition @ state.chi
    acc = accumulate(acc, est.nu, residual, mkl_cfg)
    sigma_nu, sigma_eta = acc.correlations()
    r_nu = project_correlation(dict_nu.basis, sigma_nu)
    r_eta = project_correlation(dict_eta.basis, sigma_eta)
    new_nu = okm_solve(theta_nu, r_nu, dict_nu, mkl_cfg.mu_theta_nu / cfg.lambda2, mkl_cfg.pgd)
    new_eta = okm_solve(theta_eta, r_eta, dict_eta, mkl_cfg.mu_theta_eta / cfg.lambda1, mkl_cfg.pgd)
    fallback = not (new_eta > 0).any()
    if fallback:
        new_eta = theta_eta
    return MKriKFStep(new_state, est, acc, new_nu, new_eta, fallback)


def first_basis_vector(size: int) -> np.ndarray:
    e = np.zeros(size)
    e[0] = 1.0
    return e
