"""Online monitoring: partial-sum statistics over model residuals, per-step
weighting, threshold evaluation, and the sequential detector.

The per-step cost and the memory footprint are both O(N^2): the cumulative
and forgetting statistics keep only the running sum vector, while windowed
statistics additionally buffer the residual vectors still inside their
window.  No embedding is ever recomputed during monitoring.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .graphs import GraphSnapshot, vec_residual
from .nullmodel import NullModel, NullQuantileSampler, threshold_three_sigma

__all__ = [
    "StatisticKind",
    "ThresholdRule",
    "Decision",
    "DetectorState",
    "MonitorResult",
    "monitoring_residual",
    "monitoring_projection",
    "weight_omega",
    "detector_step",
    "run_monitor",
]


@dataclass(frozen=True)
class StatisticKind:
    """Partial-sum family used by the detector.

    ``cusum`` accumulates everything, ``mosum`` keeps a fixed-length window,
    ``mmosum`` keeps a window whose length grows proportionally with the step
    count, and ``ewsum`` applies an exponential forgetting factor.
    """

    name: str
    window: int | None = None
    growth: float | None = None
    forgetting: float | None = None

    def __post_init__(self) -> None:
        if self.name == "cusum":
            pass
        elif self.name == "mosum":
            if self.window is None or self.window < 1:
                raise ValueError("mosum needs a window length of at least 1")
        elif self.name == "mmosum":
            if self.growth is None or not 0.0 < self.growth < 1.0:
                raise ValueError("mmosum needs a growth fraction in (0, 1)")
        elif self.name == "ewsum":
            if self.forgetting is None or not 0.0 < self.forgetting <= 1.0:
                raise ValueError("ewsum needs a forgetting factor in (0, 1]")
        else:
            raise ValueError(f"unknown statistic kind {self.name!r}")

    @classmethod
    def cusum(cls) -> "StatisticKind":
        return cls(name="cusum")

    @classmethod
    def mosum(cls, window: int) -> "StatisticKind":
        return cls(name="mosum", window=int(window))

    @classmethod
    def mmosum(cls, growth: float) -> "StatisticKind":
        return cls(name="mmosum", growth=float(growth))

    @classmethod
    def ewsum(cls, forgetting: float) -> "StatisticKind":
        return cls(name="ewsum", forgetting=float(forgetting))

    def effective_window(self, k: int) -> int:
        """Number of observations effectively carried by the sum at step k.

        Drives both the weighting and the threshold for finite-memory
        statistics.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        if self.name == "mosum":
            return min(k, self.window)
        if self.name == "mmosum":
            return k - math.floor(k * self.growth)
        return k


def weight_omega(k: int, kind: StatisticKind, r: int) -> float:
    """Variance-controlling weight applied to the squared-norm statistic."""
    return 1.0 / (r * float(kind.effective_window(k)) ** 1.5)


def _check_snapshot(snapshot: GraphSnapshot, model: NullModel) -> None:
    if snapshot.n_nodes != model.n_nodes:
        raise ValueError(
            f"snapshot has {snapshot.n_nodes} nodes but the model expects {model.n_nodes}"
        )
    if snapshot.directed != model.directed:
        raise ValueError("snapshot directedness does not match the model")


def monitoring_residual(snapshot: GraphSnapshot, model: NullModel) -> np.ndarray:
    """Vectorized off-diagonal residual between the model reconstruction and
    one observed snapshot; zero-mean under the null up to the training
    reconstruction error."""
    _check_snapshot(snapshot, model)
    return vec_residual(model.p_hat - snapshot.weights, model.layout)


def monitoring_projection(snapshot: GraphSnapshot, model: NullModel) -> np.ndarray:
    """Residual projected onto the training embedding, flattened row-major.

    Kept for the monitoring-function comparison study only: block changes
    that preserve the average density are invisible to the projection, which
    is why the residual is the default.
    """
    _check_snapshot(snapshot, model)
    if model.directed:
        raise ValueError("the projection monitor is defined for undirected models")
    return ((model.p_hat - snapshot.weights) @ model.embedding.x).ravel()


@dataclass(frozen=True)
class ThresholdRule:
    """How the per-step alarm threshold is computed.

    ``three-sigma`` / ``two-sigma`` use the analytic mean-plus-deviations
    rule; ``quantile`` uses a seeded Monte-Carlo (1 - alpha)-quantile of the
    null statistic; ``none`` disables alarming (threshold +inf), which is
    what the projection comparison uses.
    """

    kind: str = "three-sigma"
    alpha: float = 0.01
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in {"three-sigma", "two-sigma", "quantile", "none"}:
            raise ValueError(f"unknown threshold rule {self.kind!r}")
        if self.kind == "quantile" and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class Decision:
    """Per-step detector output; ``alarm`` is ``gamma_weighted > threshold``."""

    k: int
    gamma_weighted: float
    threshold: float
    alarm: bool


class DetectorState:
    """Sequential detector over a snapshot stream.

    One logical writer: steps are strictly ordered.  Distinct detectors are
    independent and may run in parallel against the same immutable model.
    Alarming is non-latching; monitoring may continue past the first alarm
    (useful when several change points follow each other), with the first
    crossing recorded in ``first_alarm_k``.
    """

    def __init__(
        self,
        model: NullModel,
        kind: StatisticKind | None = None,
        threshold: ThresholdRule | None = None,
        monitor: str = "residual",
    ) -> None:
        self.model = model
        self.kind = kind if kind is not None else StatisticKind.cusum()
        self.rule = threshold if threshold is not None else ThresholdRule()
        if monitor not in {"residual", "projection"}:
            raise ValueError(f"unknown monitoring function {monitor!r}")
        if monitor == "projection" and self.rule.kind != "none":
            raise ValueError(
                "the projection monitor has no calibrated null model; use the 'none' rule"
            )
        self.monitor = monitor
        self._h = monitoring_residual if monitor == "residual" else monitoring_projection
        self._len = model.r if monitor == "residual" else model.n_nodes * model.d
        self.s = np.zeros(self._len)
        windowed = self.kind.name in {"mosum", "mmosum"}
        self.buffer: deque | None = deque() if windowed else None
        self.k = 0
        self.first_alarm_k: int | None = None
        self._sampler: NullQuantileSampler | None = None
        if self.rule.kind == "quantile":
            self._sampler = NullQuantileSampler(
                model.error, model.sigma, mc_samples=self.rule.mc_samples, rng=self.rule.seed
            )
        self._threshold_cache: dict[int, float] = {}

    def threshold_at(self, k_eff: int) -> float:
        cached = self._threshold_cache.get(k_eff)
        if cached is not None:
            return cached
        if self.rule.kind == "none":
            value = math.inf
        elif self.rule.kind == "quantile":
            value = self._sampler.threshold(k_eff, self.rule.alpha)
        else:
            n_sigmas = 3.0 if self.rule.kind == "three-sigma" else 2.0
            value = threshold_three_sigma(
                k_eff, self.model.error, self.model.sigma, self._len, n_sigmas=n_sigmas
            )
        self._threshold_cache[k_eff] = value
        return value

    def step(self, snapshot: GraphSnapshot) -> Decision:
        """Consume one snapshot and return the per-step decision."""
        self.k += 1
        h = self._h(snapshot, self.model)
        kind = self.kind
        if kind.name == "cusum":
            self.s += h
        elif kind.name == "ewsum":
            self.s *= kind.forgetting
            self.s += h
        elif kind.name == "mosum":
            self.buffer.append(h)
            self.s += h
            if len(self.buffer) > kind.window:
                self.s -= self.buffer.popleft()
        else:  # mmosum: drop everything at or before floor(k * growth)
            self.buffer.append((self.k, h))
            self.s += h
            cutoff = math.floor(self.k * kind.growth)
            while self.buffer and self.buffer[0][0] <= cutoff:
                _, old = self.buffer.popleft()
                self.s -= old

        gamma = float(self.s @ self.s)
        k_eff = kind.effective_window(self.k)
        omega = 1.0 / (self._len * float(k_eff) ** 1.5)
        threshold = self.threshold_at(k_eff)
        weighted = omega * gamma
        alarm = weighted > threshold
        if alarm and self.first_alarm_k is None:
            self.first_alarm_k = self.k
        return Decision(k=self.k, gamma_weighted=weighted, threshold=threshold, alarm=alarm)


def detector_step(state: DetectorState, snapshot: GraphSnapshot) -> Decision:
    """Advance ``state`` by one snapshot."""
    return state.step(snapshot)


@dataclass(frozen=True, eq=False)
class MonitorResult:
    """Ordered decision trace plus the first alarm step (``None`` if silent)."""

    decisions: tuple[Decision, ...]
    first_alarm_k: int | None

    @property
    def alarmed(self) -> bool:
        return self.first_alarm_k is not None


def run_monitor(
    model: NullModel,
    stream: Iterable[GraphSnapshot] | Iterator[GraphSnapshot],
    kind: StatisticKind | None = None,
    threshold: ThresholdRule | None = None,
    *,
    monitor: str = "residual",
    continue_after_alarm: bool = False,
    max_steps: int | None = None,
) -> MonitorResult:
    """Run a detector over a snapshot stream.

    Stops at the first alarm unless ``continue_after_alarm`` is set, in which
    case the full trace is recorded and ``first_alarm_k`` still reports only
    the first crossing.
    """
    state = DetectorState(model, kind=kind, threshold=threshold, monitor=monitor)
    decisions: list[Decision] = []
    for snapshot in stream:
        if max_steps is not None and state.k >= max_steps:
            break
        decision = state.step(snapshot)
        decisions.append(decision)
        if decision.alarm and not continue_after_alarm:
            break
    return MonitorResult(decisions=tuple(decisions), first_alarm_k=state.first_alarm_k)
