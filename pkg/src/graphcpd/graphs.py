"""Dense adjacency containers, residual vectorization layouts, and averaging.

Matrices are plain float numpy arrays with an exactly-zero diagonal.  Node
identities are integer indices ``0..N-1``; string labels and file formats are
resolved at ingestion time (see :mod:`graphcpd.cli`).  Everything here is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "GraphSnapshot",
    "GraphSequence",
    "ResidualLayout",
    "hollow",
    "vec_residual",
    "entrywise_power",
    "mean_adjacency",
]


def hollow(matrix: np.ndarray) -> np.ndarray:
    """Copy ``matrix`` with the main diagonal forced to zero."""
    out = np.array(matrix, dtype=float)
    np.fill_diagonal(out, 0.0)
    return out


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """One time-indexed adjacency matrix.

    ``weights`` is dense and nonnegative with a zero diagonal (no self
    loops); undirected snapshots must be exactly symmetric.  Binary graphs
    are the special case of weights in {0, 1}.
    """

    weights: np.ndarray
    directed: bool = False
    t: int = 0

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"adjacency matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("adjacency entries must be finite")
        if np.any(w < 0):
            raise ValueError("adjacency entries must be nonnegative")
        if np.any(np.diagonal(w) != 0):
            raise ValueError("self-loops are not allowed: the diagonal must be zero")
        if not self.directed and not np.array_equal(w, w.T):
            raise ValueError("undirected snapshot requires a symmetric matrix")
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class ResidualLayout:
    """Row-major bijection between off-diagonal pairs and vector positions.

    Undirected layouts enumerate the strictly-upper pairs, r = N(N-1)/2;
    directed layouts enumerate every off-diagonal pair, r = N(N-1).  The
    enumeration is fixed (row-major) so vector layouts are reproducible
    across runs.
    """

    directed: bool
    n_nodes: int
    rows: np.ndarray = field(init=False, repr=False, compare=False)
    cols: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = self.n_nodes
        if n < 2:
            raise ValueError("a residual layout needs at least 2 nodes")
        if self.directed:
            rows, cols = np.nonzero(~np.eye(n, dtype=bool))
        else:
            rows, cols = np.triu_indices(n, k=1)
        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "cols", _freeze(cols))

    @property
    def r(self) -> int:
        return self.rows.size

    def position_of(self, i: int, j: int) -> int:
        """Vector position of pair (i, j); undirected pairs may be given in
        either order."""
        n = self.n_nodes
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"({i}, {j}) is not an off-diagonal pair of a {n}-node graph")
        if self.directed:
            return i * (n - 1) + (j if j < i else j - 1)
        if i > j:
            i, j = j, i
        return i * n - i * (i + 1) // 2 + (j - i - 1)

    def pair_of(self, position: int) -> tuple[int, int]:
        return int(self.rows[position]), int(self.cols[position])

    def to_matrix(self, values: np.ndarray) -> np.ndarray:
        """Inverse of :func:`vec_residual`: a hollow matrix carrying ``values``
        (symmetric when the layout is undirected)."""
        v = np.asarray(values, dtype=float)
        if v.shape != (self.r,):
            raise ValueError(f"expected a vector of length {self.r}, got shape {v.shape}")
        out = np.zeros((self.n_nodes, self.n_nodes))
        out[self.rows, self.cols] = v
        if not self.directed:
            out[self.cols, self.rows] = v
        return out


def vec_residual(matrix: np.ndarray, layout: ResidualLayout) -> np.ndarray:
    """Gather the off-diagonal entries selected by ``layout`` into a length-r
    vector (row-major pair order)."""
    m = np.asarray(matrix, dtype=float)
    n = layout.n_nodes
    if m.shape != (n, n):
        raise ValueError(f"matrix shape {m.shape} does not match a {n}-node layout")
    return m[layout.rows, layout.cols]


@dataclass(frozen=True, eq=False)
class GraphSequence:
    """Homogeneous, time-ordered tuple of snapshots."""

    snapshots: tuple[GraphSnapshot, ...]

    def __post_init__(self) -> None:
        snaps = tuple(self.snapshots)
        if not snaps:
            raise ValueError("a graph sequence must contain at least one snapshot")
        first = snaps[0]
        for snap in snaps[1:]:
            if snap.n_nodes != first.n_nodes:
                raise ValueError("all snapshots in a sequence must have the same node count")
            if snap.directed != first.directed:
                raise ValueError("all snapshots in a sequence must share directedness")
        times = [snap.t for snap in snaps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("snapshot timestamps must be strictly increasing")
        object.__setattr__(self, "snapshots", snaps)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[GraphSnapshot]:
        return iter(self.snapshots)

    def __getitem__(self, index: int) -> GraphSnapshot:
        return self.snapshots[index]

    @property
    def n_nodes(self) -> int:
        return self.snapshots[0].n_nodes

    @property
    def directed(self) -> bool:
        return self.snapshots[0].directed

    def layout(self) -> ResidualLayout:
        return ResidualLayout(directed=self.directed, n_nodes=self.n_nodes)


def entrywise_power(snapshot: GraphSnapshot, exponent: int) -> np.ndarray:
    """Entrywise ``exponent``-th power of the adjacency matrix.

    The diagonal stays zero; used to expose higher weight moments.
    """
    if not isinstance(exponent, (int, np.integer)) or exponent < 1:
        raise ValueError("exponent must be a positive integer")
    return snapshot.weights ** exponent


def mean_adjacency(sequence: GraphSequence | Iterable[GraphSnapshot]) -> np.ndarray:
    """Arithmetic mean of the snapshot matrices.

    Averaging cuts the per-entry variance by the sequence length, which is
    why training uses the averaged matrix rather than a single snapshot.
    """
    snaps = list(sequence)
    if not snaps:
        raise ValueError("cannot average an empty sequence")
    total = np.zeros_like(snaps[0].weights)
    for snap in snaps:
        total = total + snap.weights
    return total / len(snaps)
