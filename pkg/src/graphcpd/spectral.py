"""Spectral embeddings of adjacency matrices.

Covers the symmetric (eigen) embedding, its SVD counterpart for directed
graphs, moment embeddings for weighted graphs, scree-based dimension
selection, the joint ("omnibus") embedding of two matrices, and the
orthogonal alignment used when comparing embeddings.

All solvers are dense and deterministic: eigenvalues come out in descending
order and every retained eigenvector has its largest-magnitude entry made
positive, so repeated runs produce byte-identical embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import GraphSequence, entrywise_power

__all__ = [
    "Embedding",
    "ScreeReport",
    "IndefiniteSpectrumError",
    "ase",
    "directed_ase",
    "weighted_ase",
    "select_dimension",
    "singular_spectrum",
    "omnibus_embed",
    "procrustes_align",
]


class IndefiniteSpectrumError(ValueError):
    """A retained eigenvalue is negative and clamping was not requested."""


@dataclass(frozen=True, eq=False)
class Embedding:
    """Latent-position estimate.

    ``kind`` is ``"undirected"`` (single matrix ``x``), ``"directed"``
    (``x_left`` for outgoing and ``x_right`` for incoming connectivity), or
    ``"weighted-moment"`` (``x`` estimating the ``order``-th weight moment).
    Rows are nodes; embeddings are identifiable only up to rotation (and, for
    directed pairs, a per-column scaling), so comparisons should go through
    :meth:`reconstruction` or :func:`procrustes_align`.
    """

    kind: str
    d: int
    x: np.ndarray | None = None
    x_left: np.ndarray | None = None
    x_right: np.ndarray | None = None
    order: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in {"undirected", "directed", "weighted-moment"}:
            raise ValueError(f"unknown embedding kind {self.kind!r}")
        if self.kind == "directed":
            if self.x_left is None or self.x_right is None:
                raise ValueError("directed embeddings need both x_left and x_right")
        elif self.x is None:
            raise ValueError(f"{self.kind} embeddings need the x matrix")

    @property
    def n_nodes(self) -> int:
        mat = self.x if self.x is not None else self.x_left
        return mat.shape[0]

    def reconstruction(self) -> np.ndarray:
        """Estimated expectation matrix (diagonal included)."""
        if self.kind == "directed":
            return self.x_left @ self.x_right.T
        return self.x @ self.x.T


@dataclass(frozen=True, eq=False)
class ScreeReport:
    """Decreasing spectrum together with the dimension chosen on it."""

    spectrum: np.ndarray
    d: int
    method: str = "profile-likelihood"


def _check_embedding_input(matrix: np.ndarray, d: int) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= m.shape[0]:
        raise ValueError(f"embedding dimension must be in [1, {m.shape[0]}], got {d}")
    return m


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of each column made positive (first index wins
    # ties) so the factorization is reproducible.
    v = vectors.copy()
    for col in range(v.shape[1]):
        lead = int(np.argmax(np.abs(v[:, col])))
        if v[lead, col] < 0:
            v[:, col] = -v[:, col]
    return v


def ase(matrix: np.ndarray, d: int, *, clamp_negative: bool = False) -> Embedding:
    """Embed a symmetric matrix through its ``d`` algebraically largest
    eigenpairs.

    Returns latent positions ``V @ diag(eigvals)**0.5``; their Gram matrix is
    the rank-``d`` truncation of the input over that eigenspace.  A negative
    retained eigenvalue raises :class:`IndefiniteSpectrumError` unless
    ``clamp_negative`` is set, in which case it is replaced by zero, keeping
    the reconstruction positive semidefinite.
    """
    m = _check_embedding_input(matrix, d)
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
        raise ValueError("embedding of a non-symmetric matrix requires directed_ase")
    eigvals, eigvecs = np.linalg.eigh(m)
    eigvals = eigvals[::-1][:d]
    eigvecs = eigvecs[:, ::-1][:, :d]
    if np.any(eigvals < 0):
        if not clamp_negative:
            raise IndefiniteSpectrumError(
                f"retained spectrum has negative eigenvalues (smallest {eigvals.min():.3g}); "
                "pass clamp_negative=True to zero them"
            )
        eigvals = np.clip(eigvals, 0.0, None)
    x = _fix_signs(eigvecs) * np.sqrt(eigvals)
    return Embedding(kind="undirected", d=int(d), x=x)


def directed_ase(matrix: np.ndarray, d: int) -> Embedding:
    """Embed a (possibly asymmetric) matrix through its top-``d`` singular
    triplets.

    The singular values are split evenly between the two sides, so
    ``x_left @ x_right.T`` is a best rank-``d`` approximation of the input
    and both factors have mutually orthogonal columns.
    """
    m = _check_embedding_input(matrix, d)
    u, s, vt = np.linalg.svd(m)
    u = u[:, :d].copy()
    s = s[:d]
    vt = vt[:d].copy()
    for col in range(d):
        lead = int(np.argmax(np.abs(u[:, col])))
        if u[lead, col] < 0:
            u[:, col] = -u[:, col]
            vt[col] = -vt[col]
    root = np.sqrt(s)
    return Embedding(kind="directed", d=int(d), x_left=u * root, x_right=vt.T * root)


def weighted_ase(
    sequence: GraphSequence,
    order: int,
    d: int,
    *,
    clamp_negative: bool = False,
) -> Embedding:
    """Moment embedding of an undirected weighted sequence.

    Averages the entrywise ``order``-th powers across the sequence (a single
    snapshot is fine) and embeds the average; row inner products estimate the
    ``order``-th moments of the edge weights.
    """
    if sequence.directed:
        raise ValueError("weighted moment embeddings are defined for undirected sequences")
    mean_power = np.zeros((sequence.n_nodes, sequence.n_nodes))
    for snap in sequence:
        mean_power = mean_power + entrywise_power(snap, order)
    mean_power /= len(sequence)
    base = ase(mean_power, d, clamp_negative=clamp_negative)
    return Embedding(kind="weighted-moment", d=base.d, x=base.x, order=int(order))


def singular_spectrum(matrix: np.ndarray) -> np.ndarray:
    """Singular values in decreasing order, the input to scree selection."""
    m = np.asarray(matrix, dtype=float)
    return np.linalg.svd(m, compute_uv=False)


def select_dimension(spectrum: Sequence[float] | np.ndarray) -> ScreeReport:
    """Choose an embedding dimension at the scree elbow.

    Fits a two-segment, common-variance Gaussian model at every split of the
    decreasing spectrum and keeps the split with the highest profile
    likelihood; ties break toward the smaller dimension.  Deterministic.
    """
    x = np.asarray(spectrum, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("spectrum must be a nonempty 1-d array")
    if np.any(x < 0):
        raise ValueError("spectrum values must be nonnegative")
    tol = 1e-9 * max(1.0, float(x[0]))
    if np.any(np.diff(x) > tol):
        raise ValueError("spectrum must be (weakly) decreasing")
    n = x.size
    if n == 1:
        return ScreeReport(spectrum=x.copy(), d=1)

    # Variance floor keeps the likelihood finite when a split is exact.
    floor = 1e-12 * max(float(x[0]), 1.0) ** 2
    best_d, best_ll = 1, -np.inf
    for q in range(1, n):
        head, tail = x[:q], x[q:]
        ss = float(((head - head.mean()) ** 2).sum() + ((tail - tail.mean()) ** 2).sum())
        var = max(ss / n, floor)
        ll = -0.5 * n * np.log(2.0 * np.pi * var) - ss / (2.0 * var)
        if ll > best_ll:
            best_d, best_ll = q, ll
    return ScreeReport(spectrum=x.copy(), d=best_d)


def omnibus_embed(
    a1: np.ndarray,
    a2: np.ndarray,
    d: int,
    *,
    clamp_negative: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Jointly embed two symmetric matrices on a shared axis system.

    Builds the block matrix ``[[A1, M], [M, A2]]`` with ``M = (A1 + A2) / 2``,
    embeds it, and returns the rows belonging to each input.  Sharing one
    eigenbasis removes the per-matrix rotation ambiguity, so the two outputs
    are directly comparable row by row.
    """
    m1 = np.asarray(a1, dtype=float)
    m2 = np.asarray(a2, dtype=float)
    if m1.shape != m2.shape:
        raise ValueError(f"matrices must share a shape, got {m1.shape} and {m2.shape}")
    n = m1.shape[0]
    off = (m1 + m2) / 2.0
    omni = np.block([[m1, off], [off, m2]])
    emb = ase(omni, d, clamp_negative=clamp_negative)
    return emb.x[:n], emb.x[n:]


def procrustes_align(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Best orthogonal map from ``x`` onto ``y``.

    Returns the orthogonal ``w`` minimizing ``||x @ w - y||_F`` together with
    the achieved Frobenius distance.  Used by tests and diagnostics to
    compare embeddings despite the rotation ambiguity.
    """
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shapes must match, got {a.shape} and {b.shape}")
    u, _, vt = np.linalg.svd(a.T @ b)
    w = u @ vt
    error = float(np.linalg.norm(a @ w - b))
    return w, error
