"""Undirected weighted graphs, Laplacians and their spectral bases."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatch,
    EmptyPath,
    NegativeWeight,
    NonSymmetric,
    NonzeroDiagonal,
    NotSymmetric,
    ReconstructionError,
)

SYMMETRY_TOL = 1e-12
EIG_CLAMP_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _first_index(mask):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0])


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph without self-loops, held as its adjacency matrix.

    Construct through :func:`build_graph`, which validates the matrix.
    """

    adjacency: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def is_connected(self) -> bool:
        return is_connected(self.adjacency)


def is_connected(adjacency) -> bool:
    n = adjacency.shape[0]
    if n <= 1:
        return True
    ncomp, _ = connected_components(adjacency != 0, directed=False)
    return ncomp == 1


def build_graph(adjacency) -> Graph:
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"adjacency must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ReconstructionError("adjacency has non-finite entries")
    asym = np.abs(a - a.T) > SYMMETRY_TOL
    if asym.any():
        i, j = _first_index(asym)
        raise NonSymmetric(f"adjacency[{i},{j}] != adjacency[{j},{i}]", (i, j))
    a = (a + a.T) / 2
    if (a < 0).any():
        i, j = _first_index(a < 0)
        raise NegativeWeight(f"adjacency[{i},{j}] = {a[i, j]} < 0", (i, j))
    diag = np.diag(a) != 0
    if diag.any():
        i = int(np.argmax(diag))
        raise NonzeroDiagonal(f"adjacency[{i},{i}] = {a[i, i]} (self-loop)", (i, i))
    return Graph(_frozen(a))


def laplacian(g: Graph) -> np.ndarray:
    a = g.adjacency
    return np.diag(a.sum(axis=1)) - a


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal eigenvectors (columns) with ascending eigenvalues."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.eigenvalues.shape[0]

    def synthesize(self, spectrum) -> np.ndarray:
        """Return ``U diag(spectrum) U^T``."""
        u = self.eigenvectors
        return (u * np.asarray(spectrum)) @ u.T


def eigendecompose(laplacian_matrix) -> EigenBasis:
    """Symmetric eigendecomposition with a reproducible sign convention.

    Each eigenvector is flipped so that its largest-magnitude entry (lowest
    index on ties) is nonnegative. Eigenvalues within ``1e-10`` below zero
    are clamped to zero.
    """
    m = np.asarray(laplacian_matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    m = (m + m.T) / 2
    evals, evecs = np.linalg.eigh(m)
    evals = np.where((evals < 0) & (evals >= -EIG_CLAMP_TOL * scale), 0.0, evals)

    mag = np.abs(evecs)
    # ties are decided with a tolerance so round-off cannot flip the choice
    pivot = np.argmax(mag >= mag.max(axis=0) - 1e-12, axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    evecs = evecs * signs
    return EigenBasis(_frozen(evecs), _frozen(evals))


TRANSITION_FORMS = (
    "scaled_identity",
    "scaled_adjacency",
    "scaled_adjacency_plus_identity",
    "explicit_matrix",
)


@dataclass(frozen=True, eq=False)
class TransitionSpec:
    """How to build the state transition matrix from a graph.

    ``alpha`` scales I, A or A + I; ``explicit_matrix`` uses ``matrix`` as is
    (it may be asymmetric).
    """

    form: str = "scaled_identity"
    alpha: float = 1.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.form not in TRANSITION_FORMS:
            raise ReconstructionError(f"unknown transition form {self.form!r}")
        if self.form == "explicit_matrix":
            if self.matrix is None:
                raise ReconstructionError("explicit_matrix form requires a matrix")
            object.__setattr__(self, "matrix", _frozen(self.matrix))
        elif not self.alpha > 0:
            raise ReconstructionError(f"alpha must be > 0, got {self.alpha}")

    def to_dict(self) -> dict:
        if self.form == "explicit_matrix":
            return {"form": self.form, "matrix": self.matrix.tolist()}
        return {"form": self.form, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionSpec":
        return cls(
            form=d.get("form", "scaled_identity"),
            alpha=float(d.get("alpha", 1.0)),
            matrix=None if d.get("matrix") is None else np.asarray(d["matrix"], dtype=float),
        )


def transition_matrix(spec: TransitionSpec, g: Graph) -> np.ndarray:
    n = g.num_nodes
    if spec.form == "scaled_identity":
        return spec.alpha * np.eye(n)
    if spec.form == "scaled_adjacency":
        return spec.alpha * np.array(g.adjacency)
    if spec.form == "scaled_adjacency_plus_identity":
        return spec.alpha * (g.adjacency + np.eye(n))
    if spec.matrix.shape != (n, n):
        raise DimensionMismatch(
            f"explicit transition matrix is {spec.matrix.shape}, graph has {n} nodes"
        )
    return np.array(spec.matrix)


@dataclass(frozen=True, eq=False)
class RoutingMatrix:
    """Binary path-by-link incidence: ``entries[p, l] = 1`` if path p uses link l."""

    entries: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.entries)
        if r.ndim != 2:
            raise DimensionMismatch("routing matrix must be 2-D")
        if not np.isin(r, (0, 1)).all():
            raise ReconstructionError("routing matrix entries must be 0 or 1")
        empty = ~r.astype(bool).any(axis=1)
        if empty.any():
            p = int(np.argmax(empty))
            raise EmptyPath(f"path {p} traverses no link", p)
        object.__setattr__(self, "entries", _frozen(r))


def graph_from_routing(r: RoutingMatrix) -> Graph:
    """Path graph weighted by the Jaccard overlap of the paths' link sets."""
    e = r.entries
    shared = e @ e.T
    counts = e.sum(axis=1)
    union = counts[:, None] + counts[None, :] - shared
    a = shared / union
    np.fill_diagonal(a, 0.0)
    return build_graph(a)


def graph_fourier_transform(basis: EigenBasis, signal) -> np.ndarray:
    x = np.asarray(signal, dtype=float)
    if x.shape[0] != basis.num_nodes:
        raise DimensionMismatch(
            f"signal has {x.shape[0]} entries, basis has {basis.num_nodes} nodes"
        )
    return basis.eigenvectors.T @ x


@dataclass(frozen=True, eq=False)
class GraphSequence:
    """Piecewise-constant topology: ``snapshots[k] = (first_slot, graph)``."""

    snapshots: tuple = field(default_factory=tuple)

    def __post_init__(self):
        snaps = tuple((int(t), g) for t, g in self.snapshots)
        if not snaps:
            raise ReconstructionError("a graph sequence needs at least one snapshot")
        if snaps[0][0] != 1:
            raise ReconstructionError("the first snapshot must start at slot 1")
        slots = [t for t, _ in snaps]
        if any(b <= a for a, b in zip(slots, slots[1:])):
            raise ReconstructionError("snapshot slots must be strictly increasing")
        n = snaps[0][1].num_nodes
        if any(g.num_nodes != n for _, g in snaps):
            raise DimensionMismatch("all snapshots must have the same number of nodes")
        object.__setattr__(self, "snapshots", snaps)

    @classmethod
    def static(cls, g: Graph) -> "GraphSequence":
        return cls(((1, g),))

    @property
    def num_nodes(self) -> int:
        return self.snapshots[0][1].num_nodes

    def epoch_index(self, slot: int) -> int:
        """Index of the snapshot active at ``slot`` (slots before 1 map to 0)."""
        k = 0
        for i, (first, _) in enumerate(self.snapshots):
            if first <= slot:
                k = i
            else:
                break
        return k

    def graph_at(self, slot: int) -> Graph:
        return self.snapshots[self.epoch_index(slot)][1]
