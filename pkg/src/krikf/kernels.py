"""Laplacian kernels built from spectral weight functions.

A Laplacian kernel is ``K = U diag(r^+(lambda)) U^T`` where ``U`` and
``lambda`` come from the Laplacian's :class:`~krikf.graph.EigenBasis` and
``r^+`` is the pseudo-inverse of a scalar weight function. All kernels over
one graph share ``U``, so a kernel is fully described by its spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AllZeroCoefficients,
    DegenerateKernel,
    DimensionMismatch,
    PStepPole,
    ReconstructionError,
    SingularKernel,
)
from .graph import EigenBasis

PINV_THRESHOLD = 1e-12

FAMILY_PARAMS = {
    "diffusion": ("sigma2",),
    "p_step_random_walk": ("a", "p"),
    "regularized_laplacian": ("sigma2",),
    "bandlimited": ("beta", "B"),
    "band_rejection": ("beta", "k", "l"),
    "identity": (),
}


@dataclass(frozen=True)
class KernelSpec:
    """A spectral weight family plus its parameters.

    ``scale`` multiplies the resulting kernel, which covers settings such as
    ``1e-5 * I`` for the state-noise kernel.
    """

    family: str
    params: dict = field(default_factory=dict)
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILY_PARAMS:
            raise ReconstructionError(f"unknown kernel family {self.family!r}")
        required = FAMILY_PARAMS[self.family]
        missing = [k for k in required if k not in self.params]
        if missing:
            raise ReconstructionError(f"{self.family} kernel needs parameters {missing}")
        extra = set(self.params) - set(required)
        if extra:
            raise ReconstructionError(f"{self.family} kernel got unknown parameters {sorted(extra)}")
        p = self.params
        if not self.scale > 0:
            raise ReconstructionError("kernel scale must be > 0")
        if self.family in ("diffusion", "regularized_laplacian") and not p["sigma2"] >= 0:
            raise ReconstructionError("sigma2 must be >= 0")
        if self.family == "p_step_random_walk":
            if not p["a"] >= 2:
                raise ReconstructionError("p-step kernel needs a >= 2")
            if int(p["p"]) != p["p"] or p["p"] < 1:
                raise ReconstructionError("p-step kernel needs a positive integer p")
        if self.family in ("bandlimited", "band_rejection") and not p["beta"] > 0:
            raise ReconstructionError("beta must be > 0")
        if self.family == "bandlimited" and (int(p["B"]) != p["B"] or p["B"] < 1):
            raise ReconstructionError("bandwidth B must be a positive integer")
        if self.family == "band_rejection":
            for key in ("k", "l"):
                if int(p[key]) != p[key] or p[key] < 1:
                    raise ReconstructionError(f"{key} must be a positive integer")

    def check_size(self, n: int) -> None:
        p = self.params
        if self.family == "bandlimited" and p["B"] > n:
            raise ReconstructionError(f"bandwidth B={p['B']} exceeds N={n}")
        if self.family == "band_rejection" and p["k"] > n - p["l"]:
            raise ReconstructionError(f"band rejection needs k <= N - l (k={p['k']}, l={p['l']}, N={n})")

    def to_dict(self) -> dict:
        d = {"family": self.family, **self.params}
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        d = dict(d)
        family = d.pop("family", None)
        scale = float(d.pop("scale", 1.0))
        return cls(family, {k: float(v) if k in ("sigma2", "a", "beta") else v for k, v in d.items()}, scale)


def diffusion(sigma2: float, scale: float = 1.0) -> KernelSpec:
    return KernelSpec("diffusion", {"sigma2": sigma2}, scale)


def identity(scale: float = 1.0) -> KernelSpec:
    return KernelSpec("identity", {}, scale)


def spectral_weight(spec: KernelSpec, lam: float, index: int, n_total: int) -> float:
    """Evaluate ``r(lambda)`` for one eigenvalue.

    ``index`` is the 1-based position of the eigenvalue in ascending order;
    the bandlimited and band-rejection families depend on it rather than on
    ``lam``.
    """
    p = spec.params
    fam = spec.family
    if fam == "diffusion":
        return math.exp(p["sigma2"] * lam / 2)
    if fam == "p_step_random_walk":
        if p["a"] <= lam:
            raise PStepPole(f"p-step kernel needs a > lambda (a={p['a']}, lambda={lam})")
        return (p["a"] - lam) ** (-int(p["p"]))
    if fam == "regularized_laplacian":
        return 1.0 + p["sigma2"] * lam
    if fam == "bandlimited":
        return 1.0 / p["beta"] if index <= p["B"] else p["beta"]
    if fam == "band_rejection":
        return p["beta"] if p["k"] <= index <= n_total - p["l"] else 1.0 / p["beta"]
    return 1.0


def spectral_weights(spec: KernelSpec, eigenvalues) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.shape[0]
    spec.check_size(n)
    return np.array([spectral_weight(spec, float(x), i + 1, n) for i, x in enumerate(lam)])


def pinv_spectrum(r) -> np.ndarray:
    """Pseudo-inverse of a spectral weight vector (``1/r``, or 0 where ``r`` is tiny)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    ok = r > PINV_THRESHOLD
    out[ok] = 1.0 / r[ok]
    return out


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric PSD kernel; ``spectral_values`` is set for Laplacian kernels."""

    matrix: np.ndarray
    spectral_values: Optional[np.ndarray] = None

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        if self.spectral_values is not None:
            return float(self.spectral_values.min())
        return float(np.linalg.eigvalsh(self.matrix).min())

    def require_positive_definite(self, what: str = "kernel", tol: float = 1e-12) -> None:
        if not self.min_eigenvalue() > tol:
            raise SingularKernel(f"{what} must be positive definite (min eigenvalue <= {tol})")

    @classmethod
    def from_matrix(cls, matrix) -> "KernelMatrix":
        """Wrap an arbitrary PSD matrix (not necessarily a Laplacian kernel)."""
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"kernel must be square, got {m.shape}")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.T).max(initial=0.0) > 1e-10 * scale:
            raise ReconstructionError("kernel matrix is not symmetric")
        m = (m + m.T) / 2
        if m.size and np.linalg.eigvalsh(m).min() < -1e-9 * scale:
            raise ReconstructionError("kernel matrix is not positive semidefinite")
        return cls(m)

    @classmethod
    def zeros(cls, n: int) -> "KernelMatrix":
        return cls(np.zeros((n, n)), np.zeros(n))


def spectral_kernel(basis: EigenBasis, spectrum) -> KernelMatrix:
    """Kernel ``U diag(spectrum) U^T`` for a given nonnegative spectrum."""
    s = np.asarray(spectrum, dtype=float)
    if s.shape != (basis.num_nodes,):
        raise DimensionMismatch(f"spectrum has shape {s.shape}, basis has {basis.num_nodes} nodes")
    m = basis.synthesize(s)
    return KernelMatrix((m + m.T) / 2, s.copy())


def kernel_spectrum(basis: EigenBasis, spec: KernelSpec) -> np.ndarray:
    if spec.family == "p_step_random_walk" and not spec.params["a"] > basis.eigenvalues[-1]:
        raise PStepPole(
            f"p-step kernel needs a > lambda_max (a={spec.params['a']}, "
            f"lambda_max={basis.eigenvalues[-1]:.6g})"
        )
    s = spec.scale * pinv_spectrum(spectral_weights(spec, basis.eigenvalues))
    if not (s > 0).any():
        raise DegenerateKernel(f"{spec.family} kernel has an all-zero spectrum")
    return s


def build_kernel(basis: EigenBasis, spec: KernelSpec) -> KernelMatrix:
    return spectral_kernel(basis, kernel_spectrum(basis, spec))


@dataclass(frozen=True, eq=False)
class KernelDictionary:
    """P Laplacian kernels over one basis, stored as a ``(P, N)`` spectrum array."""

    basis: EigenBasis
    spectra: np.ndarray
    specs: tuple = ()

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.spectra, dtype=float))
        if s.shape[1] != self.basis.num_nodes:
            raise DimensionMismatch("dictionary spectra must have length N")
        if not (s > 0).all():
            raise ReconstructionError("dictionary spectra must be strictly positive")
        s.setflags(write=False)
        object.__setattr__(self, "spectra", s)

    @property
    def size(self) -> int:
        return self.spectra.shape[0]

    @classmethod
    def from_specs(cls, basis: EigenBasis, specs: Sequence[KernelSpec]) -> "KernelDictionary":
        specs = tuple(specs)
        if not specs:
            raise ReconstructionError("a kernel dictionary needs at least one kernel")
        return cls(basis, np.vstack([kernel_spectrum(basis, s) for s in specs]), specs)

    def kernel(self, p: int) -> KernelMatrix:
        return spectral_kernel(self.basis, self.spectra[p])

    def rebased(self, basis: EigenBasis) -> "KernelDictionary":
        """Same specs, re-derived on a new topology's basis."""
        if not self.specs:
            raise ReconstructionError("dictionary was not built from specs; cannot rebase")
        return KernelDictionary.from_specs(basis, self.specs)


def check_theta(theta, size: int) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if t.shape != (size,):
        raise DimensionMismatch(f"theta has shape {t.shape}, dictionary has {size} kernels")
    if (t < 0).any():
        raise ReconstructionError("kernel coefficients must be nonnegative")
    return t


def combine(dictionary: KernelDictionary, theta) -> KernelMatrix:
    t = check_theta(theta, dictionary.size)
    if not (t > 0).any():
        raise AllZeroCoefficients("at least one kernel coefficient must be positive")
    return spectral_kernel(dictionary.basis, t @ dictionary.spectra)
