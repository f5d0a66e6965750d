"""Seeded samplers for the random-graph ensembles used in experiments and tests.

Every sampler takes an explicit numpy ``Generator``, so results are exactly
reproducible.  :func:`stream_rng` derives one independent stream per snapshot
index from a master seed (counter-style splitting), which keeps simulated
sequences reproducible regardless of the order, or the number of processes,
in which snapshots are drawn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graphs import GraphSnapshot

__all__ = [
    "stream_rng",
    "WeightSpec",
    "sample_rdpg",
    "sample_er",
    "sample_sbm",
    "sample_drdpg",
    "sample_weighted_sbm",
]

_PROB_TOL = 1e-12


def stream_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for snapshot ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


@dataclass(frozen=True)
class WeightSpec:
    """Edge-weight distribution: constant, bernoulli, gaussian, or poisson.

    Gaussian draws are clipped at zero so weights stay nonnegative; with the
    small relative spreads used here the clipped mass is negligible (below
    1e-300 for sigma << mu), so the stated moments are effectively exact.
    """

    kind: str
    value: float = 1.0
    p: float = 1.0
    mu: float = 0.0
    sigma: float = 0.0
    lam: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.value < 0:
                raise ValueError("constant weight must be nonnegative")
        elif self.kind == "bernoulli":
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("bernoulli parameter must lie in [0, 1]")
        elif self.kind == "gaussian":
            if self.sigma < 0:
                raise ValueError("gaussian sigma must be nonnegative")
        elif self.kind == "poisson":
            if self.lam < 0:
                raise ValueError("poisson rate must be nonnegative")
        else:
            raise ValueError(f"unknown weight distribution {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "WeightSpec":
        return cls(kind="constant", value=float(value))

    @classmethod
    def bernoulli(cls, p: float) -> "WeightSpec":
        return cls(kind="bernoulli", p=float(p))

    @classmethod
    def gaussian(cls, mu: float, sigma: float) -> "WeightSpec":
        return cls(kind="gaussian", mu=float(mu), sigma=float(sigma))

    @classmethod
    def poisson(cls, lam: float) -> "WeightSpec":
        return cls(kind="poisson", lam=float(lam))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.value)
        if self.kind == "bernoulli":
            return (rng.random(size) < self.p).astype(float)
        if self.kind == "gaussian":
            return np.clip(rng.normal(self.mu, self.sigma, size), 0.0, None)
        return rng.poisson(self.lam, size).astype(float)

    def mean(self) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "bernoulli":
            return self.p
        if self.kind == "gaussian":
            return self.mu
        return self.lam

    def second_moment(self) -> float:
        if self.kind == "constant":
            return self.value**2
        if self.kind == "bernoulli":
            return self.p
        if self.kind == "gaussian":
            return self.mu**2 + self.sigma**2
        return self.lam**2 + self.lam

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2


def _check_probabilities(values: np.ndarray, what: str) -> None:
    if values.size and (values.min() < -_PROB_TOL or values.max() > 1.0 + _PROB_TOL):
        raise ValueError(
            f"{what} must lie in [0, 1], got range "
            f"[{values.min():.6g}, {values.max():.6g}]"
        )


def _bernoulli_upper(prob_matrix: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = prob_matrix.shape[0]
    iu = np.triu_indices(n, k=1)
    edges = (rng.random(iu[0].size) < np.clip(prob_matrix[iu], 0.0, 1.0)).astype(float)
    a = np.zeros((n, n))
    a[iu] = edges
    return a + a.T


def sample_rdpg(latent: np.ndarray, rng: np.random.Generator, *, t: int = 0) -> GraphSnapshot:
    """Undirected binary graph with independent edges of probability
    ``x_i . x_j``."""
    x = np.atleast_2d(np.asarray(latent, dtype=float))
    if x.shape[0] == 1 and x.shape[1] > 1:
        x = x.T
    prob = x @ x.T
    iu = np.triu_indices(x.shape[0], k=1)
    _check_probabilities(prob[iu], "pairwise inner products")
    return GraphSnapshot(_bernoulli_upper(prob, rng), directed=False, t=t)


def sample_er(n_nodes: int, p: float, rng: np.random.Generator, *, t: int = 0) -> GraphSnapshot:
    """Homogeneous undirected binary graph with edge probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    prob = np.full((n_nodes, n_nodes), float(p))
    return GraphSnapshot(_bernoulli_upper(prob, rng), directed=False, t=t)


def sample_sbm(
    n_nodes: int,
    block_sizes: Sequence[int],
    q: np.ndarray,
    rng: np.random.Generator,
    *,
    t: int = 0,
) -> GraphSnapshot:
    """Blockmodel graph: edge probability depends only on the endpoint blocks."""
    sizes = [int(s) for s in block_sizes]
    if sum(sizes) != n_nodes:
        raise ValueError(f"block sizes {sizes} must sum to {n_nodes}")
    qm = np.asarray(q, dtype=float)
    if qm.shape != (len(sizes), len(sizes)):
        raise ValueError("block probability matrix shape must match the block count")
    if not np.array_equal(qm, qm.T):
        raise ValueError("undirected blockmodel needs a symmetric block matrix")
    _check_probabilities(qm.ravel(), "block probabilities")
    labels = np.repeat(np.arange(len(sizes)), sizes)
    prob = qm[labels][:, labels]
    return GraphSnapshot(_bernoulli_upper(prob, rng), directed=False, t=t)


def sample_drdpg(
    x_left: np.ndarray,
    x_right: np.ndarray,
    rng: np.random.Generator,
    *,
    t: int = 0,
) -> GraphSnapshot:
    """Directed binary graph: arc (i, j) appears with probability
    ``x_left_i . x_right_j``, independently of all other arcs."""
    xl = np.atleast_2d(np.asarray(x_left, dtype=float))
    xr = np.atleast_2d(np.asarray(x_right, dtype=float))
    if xl.shape[0] == 1 and xl.shape[1] > 1:
        xl = xl.T
    if xr.shape[0] == 1 and xr.shape[1] > 1:
        xr = xr.T
    if xl.shape != xr.shape:
        raise ValueError("left and right latent matrices must share a shape")
    prob = xl @ xr.T
    n = prob.shape[0]
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    _check_probabilities(prob[rows, cols], "pairwise inner products")
    a = np.zeros((n, n))
    a[rows, cols] = (rng.random(rows.size) < np.clip(prob[rows, cols], 0.0, 1.0)).astype(float)
    return GraphSnapshot(a, directed=True, t=t)


def sample_weighted_sbm(
    n_nodes: int,
    block_sizes: Sequence[int],
    edge_probability: float,
    weight_specs: Mapping[tuple[int, int], WeightSpec],
    rng: np.random.Generator,
    *,
    t: int = 0,
) -> GraphSnapshot:
    """Undirected weighted blockmodel.

    Edge presence is an independent coin with ``edge_probability``; present
    edges draw their weight from the spec of the endpoint block pair (keys
    are ``(a, b)`` with ``a <= b``), absent edges have weight zero.
    """
    sizes = [int(s) for s in block_sizes]
    if sum(sizes) != n_nodes:
        raise ValueError(f"block sizes {sizes} must sum to {n_nodes}")
    if not 0.0 <= edge_probability <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {edge_probability}")
    n_blocks = len(sizes)
    for a in range(n_blocks):
        for b in range(a, n_blocks):
            if (a, b) not in weight_specs:
                raise ValueError(f"missing weight spec for block pair ({a}, {b})")

    labels = np.repeat(np.arange(n_blocks), sizes)
    iu = np.triu_indices(n_nodes, k=1)
    present = rng.random(iu[0].size) < edge_probability
    weights = np.zeros(iu[0].size)
    pair_lo = np.minimum(labels[iu[0]], labels[iu[1]])
    pair_hi = np.maximum(labels[iu[0]], labels[iu[1]])
    # Fixed block-pair iteration order keeps the draw stream reproducible.
    for a in range(n_blocks):
        for b in range(a, n_blocks):
            mask = (pair_lo == a) & (pair_hi == b)
            if mask.any():
                weights[mask] = weight_specs[(a, b)].sample(rng, int(mask.sum()))
    weights = weights * present
    mat = np.zeros((n_nodes, n_nodes))
    mat[iu] = weights
    return GraphSnapshot(mat + mat.T, directed=False, t=t)
