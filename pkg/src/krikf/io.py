"""CSV readers and writers for signals, edge lists and routing matrices.

All numbers are written with 17 significant digits so a write/read round
trip is exact.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import NonNumeric, ParseError, RaggedRows
from .graph import Graph, RoutingMatrix, build_graph


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_rows(path, header: Optional[Sequence[str]], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _read(path):
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, [c.strip() for c in row]


def _number(cell, lineno):
    try:
        return float(cell)
    except ValueError:
        raise NonNumeric(f"not a number: {cell!r}", lineno) from None


def _integer(cell, lineno):
    try:
        value = int(cell)
    except ValueError:
        raise NonNumeric(f"not an integer: {cell!r}", lineno) from None
    if value < 0:
        raise ParseError(f"negative index {value}", lineno)
    return value


def write_signals_csv(path, signals) -> None:
    write_rows(path, None, np.atleast_2d(np.asarray(signals, dtype=float)))


def load_signals_csv(path) -> np.ndarray:
    """Read a headerless T x N matrix (rows are slots, columns are nodes)."""
    rows, width = [], None
    for lineno, cells in _read(path):
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise RaggedRows(f"expected {width} columns, found {len(cells)}", lineno)
        rows.append([_number(c, lineno) for c in cells])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows)


def _check_header(cells, expected, lineno):
    if [c.lower() for c in cells] != list(expected):
        raise ParseError(f"expected header {','.join(expected)}, found {','.join(cells)}", lineno)


def write_graph_csv(path, g: Graph) -> None:
    a = g.adjacency
    i, j = np.nonzero(np.triu(a, 1))
    write_rows(path, ("src", "dst", "weight"), ((int(s), int(d), a[s, d]) for s, d in zip(i, j)))


def load_graph_csv(path, num_nodes: Optional[int] = None) -> Graph:
    """Undirected edge list with header ``src,dst,weight`` and 0-based nodes.

    Without ``num_nodes`` the node count is the largest index plus one.
    """
    edges = {}
    it = _read(path)
    header = next(it, None)
    if header is None:
        raise ParseError(f"{path}: empty edge list")
    _check_header(header[1], ("src", "dst", "weight"), header[0])
    for lineno, cells in it:
        if len(cells) != 3:
            raise RaggedRows(f"expected 3 columns, found {len(cells)}", lineno)
        s, d, w = _integer(cells[0], lineno), _integer(cells[1], lineno), _number(cells[2], lineno)
        if s == d:
            raise ParseError(f"self-loop on node {s}", lineno)
        key = (min(s, d), max(s, d))
        if key in edges:
            raise ParseError(f"edge {key} listed twice", lineno)
        edges[key] = w
    n = num_nodes
    if n is None:
        n = 1 + max((max(k) for k in edges), default=-1)
    a = np.zeros((n, n))
    for (s, d), w in edges.items():
        if d >= n:
            raise ParseError(f"node {d} out of range for {n} nodes")
        a[s, d] = a[d, s] = w
    return build_graph(a)


def load_routing_csv(path, num_paths: Optional[int] = None, num_links: Optional[int] = None) -> RoutingMatrix:
    """Path-link traversals with header ``path,link``, one traversal per line."""
    pairs = []
    it = _read(path)
    header = next(it, None)
    if header is None:
        raise ParseError(f"{path}: empty routing file")
    _check_header(header[1], ("path", "link"), header[0])
    for lineno, cells in it:
        if len(cells) != 2:
            raise RaggedRows(f"expected 2 columns, found {len(cells)}", lineno)
        pairs.append((_integer(cells[0], lineno), _integer(cells[1], lineno)))
    p = num_paths if num_paths is not None else 1 + max((a for a, _ in pairs), default=-1)
    l = num_links if num_links is not None else 1 + max((b for _, b in pairs), default=-1)
    r = np.zeros((p, l), dtype=int)
    for a, b in pairs:
        r[a, b] = 1
    return RoutingMatrix(r)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
