"""Preset synthetic experiments: a nominal model, a change, and seeded
snapshot streams.

Each scenario generates snapshot ``t`` from a stream derived from the master
seed and ``t`` alone, so traces are reproducible and independent of how far
monitoring runs.  Global index ``t`` counts from 0: snapshots ``0..m-1`` are
the training set, monitoring step ``k`` corresponds to ``t = m + k - 1``, and
the changed model applies from step ``k_c + 1`` on (``t >= m + k_c``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .graphs import GraphSequence, GraphSnapshot, ResidualLayout, hollow, vec_residual
from .generators import (
    WeightSpec,
    sample_er,
    sample_sbm,
    sample_weighted_sbm,
    stream_rng,
)

__all__ = ["Scenario", "make_scenario", "SCENARIO_NAMES"]


@dataclass(frozen=True)
class Scenario:
    """One named experiment: node count, training size, change location,
    default horizon, and the family-specific parameters."""

    name: str
    family: str
    n_nodes: int
    m: int
    k_c: int
    horizon: int
    weighted: bool = False
    directed: bool = False
    params: dict = field(default_factory=dict)

    # -- sampling ----------------------------------------------------------

    def _draw(self, changed: bool, rng: np.random.Generator, t: int) -> GraphSnapshot:
        p = self.params
        n = self.n_nodes
        if self.family == "er-to-sbm":
            if not changed:
                return sample_er(n, p["p"], rng, t=t)
            q = np.array([[p["q1"], p["q2"]], [p["q2"], p["q1"]]])
            return sample_sbm(n, [n // 2, n - n // 2], q, rng, t=t)
        if self.family == "er-shift":
            return sample_er(n, p["p1"] if changed else p["p0"], rng, t=t)
        if self.family == "weighted-sbm":
            lam = p["lam1"] if changed else p["lam0"]
            specs = {
                (0, 0): WeightSpec.gaussian(p["mu"], p["sigma"]),
                (0, 1): WeightSpec.gaussian(p["mu"], p["sigma"]),
                (1, 1): WeightSpec.poisson(lam),
            }
            return sample_weighted_sbm(n, [n // 2, n - n // 2], p["p"], specs, rng, t=t)
        raise ValueError(f"unknown scenario family {self.family!r}")

    def snapshot_at(self, t: int, seed: int) -> GraphSnapshot:
        """Snapshot for global index ``t`` (training and stream share the
        indexing)."""
        changed = t >= self.m + self.k_c
        return self._draw(changed, stream_rng(seed, t), t)

    def training_sequence(self, seed: int) -> GraphSequence:
        return GraphSequence(tuple(self.snapshot_at(t, seed) for t in range(self.m)))

    def stream(self, seed: int, horizon: int | None = None) -> Iterator[GraphSnapshot]:
        """Monitoring snapshots for steps ``k = 1..horizon``."""
        steps = self.horizon if horizon is None else horizon
        for k in range(1, steps + 1):
            yield self.snapshot_at(self.m + k - 1, seed)

    # -- exact model quantities (for delay prediction and tests) ------------

    def _block_structure(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_nodes
        labels = np.repeat([0, 1], [n // 2, n - n // 2])
        same = labels[:, None] == labels[None, :]
        return labels, same

    def _mean_matrix(self, changed: bool) -> np.ndarray:
        p = self.params
        n = self.n_nodes
        if self.family == "er-to-sbm":
            if not changed:
                return hollow(np.full((n, n), p["p"]))
            _, same = self._block_structure()
            return hollow(np.where(same, p["q1"], p["q2"]))
        if self.family == "er-shift":
            return hollow(np.full((n, n), p["p1"] if changed else p["p0"]))
        labels, _ = self._block_structure()
        lam = p["lam1"] if changed else p["lam0"]
        means = np.where(
            (labels[:, None] == 1) & (labels[None, :] == 1), p["p"] * lam, p["p"] * p["mu"]
        )
        return hollow(means)

    def _sigma_matrix(self, changed: bool) -> np.ndarray:
        p = self.params
        n = self.n_nodes
        if self.family in {"er-to-sbm", "er-shift"}:
            mean = self._mean_matrix(changed)
            return hollow(mean * (1.0 - mean))
        labels, _ = self._block_structure()
        lam = p["lam1"] if changed else p["lam0"]
        gaussian = WeightSpec.gaussian(p["mu"], p["sigma"])
        poisson = WeightSpec.poisson(lam)
        pois_pair = (labels[:, None] == 1) & (labels[None, :] == 1)
        second = np.where(
            pois_pair, p["p"] * poisson.second_moment(), p["p"] * gaussian.second_moment()
        )
        first = self._mean_matrix(changed)
        return hollow(second - first**2)

    def null_mean_matrix(self) -> np.ndarray:
        return self._mean_matrix(changed=False)

    def changed_mean_matrix(self) -> np.ndarray:
        return self._mean_matrix(changed=True)

    def null_sigma_vec(self, layout: ResidualLayout) -> np.ndarray:
        return vec_residual(self._sigma_matrix(changed=False), layout)

    def changed_sigma_vec(self, layout: ResidualLayout) -> np.ndarray:
        return vec_residual(self._sigma_matrix(changed=True), layout)

    def change_delta(self, layout: ResidualLayout) -> np.ndarray:
        """Vectorized nominal-minus-changed expectation difference."""
        return vec_residual(self.null_mean_matrix() - self.changed_mean_matrix(), layout)


_PRESETS: dict[str, Scenario] = {
    "er-to-sbm": Scenario(
        name="er-to-sbm",
        family="er-to-sbm",
        n_nodes=100,
        m=50,
        k_c=100,
        horizon=400,
        params={"p": 0.5, "q1": 0.6, "q2": 0.4},
    ),
    "er-shift": Scenario(
        name="er-shift",
        family="er-shift",
        n_nodes=100,
        m=100,
        k_c=100,
        horizon=400,
        params={"p0": 0.5, "p1": 0.6},
    ),
    "frobenius-blind": Scenario(
        name="frobenius-blind",
        family="er-to-sbm",
        n_nodes=100,
        m=50,
        k_c=200,
        horizon=800,
        params={"p": 0.3, "q1": 0.275, "q2": 0.325},
    ),
    "weighted-sbm": Scenario(
        name="weighted-sbm",
        family="weighted-sbm",
        n_nodes=500,
        m=50,
        k_c=100,
        horizon=300,
        weighted=True,
        params={"p": 0.5, "mu": 5.0, "sigma": 0.1, "lam0": 5.0, "lam1": 6.0},
    ),
    "delay-sweep": Scenario(
        name="delay-sweep",
        family="er-shift",
        n_nodes=100,
        m=100,
        k_c=200,
        horizon=500,
        params={"p0": 0.5, "p1": 0.6},
    ),
}

SCENARIO_NAMES = tuple(sorted(_PRESETS))


def make_scenario(
    name: str,
    *,
    n_nodes: int | None = None,
    m: int | None = None,
    k_c: int | None = None,
    horizon: int | None = None,
) -> Scenario:
    """Look up a preset scenario, optionally overriding size parameters."""
    try:
        preset = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}")
    overrides = {}
    if n_nodes is not None:
        overrides["n_nodes"] = int(n_nodes)
    if m is not None:
        overrides["m"] = int(m)
    if k_c is not None:
        overrides["k_c"] = int(k_c)
    if horizon is not None:
        overrides["horizon"] = int(horizon)
    scenario = replace(preset, **overrides) if overrides else preset
    if scenario.name == "delay-sweep" and horizon is None and k_c is not None:
        scenario = replace(scenario, horizon=scenario.k_c + 300)
    return scenario
