"""Command-line front end: data ingestion, training, monitoring, simulation,
delay prediction, and embedding export.

Formats
-------
edge-list
    UTF-8 text, one record per line ``t<TAB>i<TAB>j<TAB>w`` (any whitespace
    accepted, tabs written).  ``t`` is an integer grouping records into
    snapshots; node ids may be integers or strings and are interned to
    ``0..N-1`` by first appearance; missing pairs have weight 0.  Undirected
    inputs may carry either or both orientations of a pair as long as the
    weights agree.  A ``t 0 0 0.0`` record declares an otherwise-empty
    snapshot.  Lines starting with ``#`` are comments.
dense-csv
    one N x N comma-separated matrix per file; for sequences, a directory of
    such files ordered lexicographically (zero-padded timestamps).

Exit codes: 0 success (monitor: no alarm), 2 alarm detected (monitor), 1
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from typing import IO, Iterable

import numpy as np

from .graphs import GraphSequence, GraphSnapshot, hollow, vec_residual
from .monitor import Decision, StatisticKind, ThresholdRule, run_monitor
from .nullmodel import (
    detectability,
    load_model,
    predict_delay,
    save_model,
    train,
)
from .scenarios import SCENARIO_NAMES, make_scenario
from .spectral import ase, directed_ase, select_dimension, singular_spectrum

__all__ = [
    "EdgeListParseError",
    "RunConfig",
    "ingest",
    "export_edge_list",
    "main",
    "entrypoint",
]


class EdgeListParseError(ValueError):
    """Malformed edge-list input; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# Ingestion / export
# ---------------------------------------------------------------------------


def ingest_edge_list(path: str, *, directed: bool = False) -> GraphSequence:
    """Parse an edge-list file into a graph sequence."""
    node_ids: dict[str, int] = {}
    records: dict[int, dict[tuple[int, int], float]] = {}

    def intern(token: str) -> int:
        if token not in node_ids:
            node_ids[token] = len(node_ids)
        return node_ids[token]

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise EdgeListParseError(
                    f"expected 4 fields 't i j w', got {len(parts)}", lineno
                )
            try:
                t = int(parts[0])
            except ValueError:
                raise EdgeListParseError(f"timestamp {parts[0]!r} is not an integer", lineno)
            try:
                w = float(parts[3])
            except ValueError:
                raise EdgeListParseError(f"weight {parts[3]!r} is not a number", lineno)
            if not np.isfinite(w) or w < 0:
                raise EdgeListParseError(f"weight must be finite and nonnegative, got {w}", lineno)
            i = intern(parts[1])
            j = intern(parts[2])
            snapshot = records.setdefault(t, {})
            if i == j:
                if w != 0.0:
                    raise EdgeListParseError("self-loops must have weight 0", lineno)
                continue
            key = (i, j) if directed else (min(i, j), max(i, j))
            if key in snapshot and snapshot[key] != w:
                raise EdgeListParseError(
                    f"conflicting weights for pair {parts[1]}-{parts[2]} at t={t}", lineno
                )
            snapshot[key] = w

    if not records:
        raise ValueError(f"{path} contains no records")
    n = len(node_ids)
    snapshots = []
    for t in sorted(records):
        mat = np.zeros((n, n))
        for (i, j), w in records[t].items():
            mat[i, j] = w
            if not directed:
                mat[j, i] = w
        snapshots.append(GraphSnapshot(mat, directed=directed, t=t))
    return GraphSequence(tuple(snapshots))


def read_dense_matrix(path: str) -> np.ndarray:
    """One comma-separated N x N matrix from a single file."""
    try:
        mat = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: not a rectangular comma-separated matrix ({exc})")
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{path}: matrix must be square, got shape {mat.shape}")
    return mat


def ingest_dense_csv(path: str, *, directed: bool = False) -> GraphSequence:
    """A directory of matrix files (lexicographic order), or a single file."""
    if os.path.isdir(path):
        names = sorted(
            name for name in os.listdir(path) if not name.startswith(".")
        )
        if not names:
            raise ValueError(f"{path} contains no matrix files")
        paths = [os.path.join(path, name) for name in names]
    else:
        paths = [path]
    snapshots = []
    for t, file_path in enumerate(paths):
        mat = read_dense_matrix(file_path)
        try:
            snapshots.append(GraphSnapshot(mat, directed=directed, t=t))
        except ValueError as exc:
            raise ValueError(f"{file_path}: {exc}")
    return GraphSequence(tuple(snapshots))


def ingest(path: str, fmt: str, *, directed: bool = False) -> GraphSequence:
    """Load a snapshot sequence in the named format."""
    if fmt == "edge-list":
        return ingest_edge_list(path, directed=directed)
    if fmt == "dense-csv":
        return ingest_dense_csv(path, directed=directed)
    raise ValueError(f"unknown format {fmt!r}; choose edge-list or dense-csv")


def export_edge_list(sequence: GraphSequence, fh: IO[str]) -> None:
    """Write the canonical edge-list form: one tab-separated line per nonzero
    entry (upper pairs only when undirected), sorted by (t, i, j); snapshots
    with no nonzero entry are kept alive by a ``t 0 0 0.0`` marker."""
    for snap in sequence:
        w = snap.weights
        if snap.directed:
            rows, cols = np.nonzero(w)
        else:
            rows, cols = np.nonzero(np.triu(w, k=1))
        if rows.size == 0:
            fh.write(f"{snap.t}\t0\t0\t0.0\n")
            continue
        for i, j in zip(rows.tolist(), cols.tolist()):
            fh.write(f"{snap.t}\t{i}\t{j}\t{w[i, j]!r}\n")


def write_trace(fh: IO[str], decisions: Iterable[Decision], k_c: int | None = None) -> None:
    """CSV trace ``k,gamma_weighted,threshold,alarm`` (+ ``k_c`` when known)."""
    extra = ",k_c" if k_c is not None else ""
    fh.write(f"k,gamma_weighted,threshold,alarm{extra}\n")
    tail = f",{k_c}" if k_c is not None else ""
    for dec in decisions:
        fh.write(f"{dec.k},{dec.gamma_weighted!r},{dec.threshold!r},{int(dec.alarm)}{tail}\n")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Resolved run parameters (defaults < config file < explicit flags)."""

    d: str = "auto"
    d_extra: int = 0
    m: int | None = None
    stat: str = "cusum"
    window: int = 10
    growth: float = 0.4
    beta: float = 0.9
    threshold: str = "3sigma"
    alpha: float = 0.01
    mc_samples: int = 100_000
    loo_reps: int = 20
    seed: int = 0
    directed: bool = False
    weighted: bool = False
    continue_after_alarm: bool = False
    clamp: bool = False

    def statistic(self) -> StatisticKind:
        if self.stat == "cusum":
            return StatisticKind.cusum()
        if self.stat == "mosum":
            return StatisticKind.mosum(self.window)
        if self.stat == "mmosum":
            return StatisticKind.mmosum(self.growth)
        if self.stat == "ewsum":
            return StatisticKind.ewsum(self.beta)
        raise ValueError(f"unknown statistic {self.stat!r}")

    def threshold_rule(self) -> ThresholdRule:
        kinds = {"3sigma": "three-sigma", "2sigma": "two-sigma", "quantile": "quantile"}
        if self.threshold not in kinds:
            raise ValueError(f"unknown threshold {self.threshold!r}")
        return ThresholdRule(
            kind=kinds[self.threshold],
            alpha=self.alpha,
            mc_samples=self.mc_samples,
            seed=self.seed,
        )

    def resolved_d(self) -> str | int:
        return "auto" if self.d == "auto" else int(self.d)


_FLAG_TO_FIELD = {
    "d": "d",
    "d_extra": "d_extra",
    "m": "m",
    "stat": "stat",
    "L": "window",
    "h": "growth",
    "beta": "beta",
    "threshold": "threshold",
    "alpha": "alpha",
    "mc_samples": "mc_samples",
    "loo_reps": "loo_reps",
    "seed": "seed",
    "directed": "directed",
    "weighted": "weighted",
    "continue_after_alarm": "continue_after_alarm",
    "clamp": "clamp",
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    file_values: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        unknown = set(file_values) - set(_FLAG_TO_FIELD)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    field_types = {f.name: f for f in fields(RunConfig)}
    for flag, name in _FLAG_TO_FIELD.items():
        value = file_values.get(flag)
        cli_value = getattr(args, flag, None)
        if cli_value is not None:
            value = cli_value
        if value is None:
            continue
        if name in {"directed", "weighted", "continue_after_alarm", "clamp"}:
            value = bool(value)
        elif name == "d":
            value = "auto" if value == "auto" else str(int(value))
        elif name == "m":
            value = int(value)
        elif field_types[name].type in {"int", int}:
            value = int(value)
        elif field_types[name].type in {"float", float}:
            value = float(value)
        setattr(config, name, value)
    return config


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _open_out(path: str | None):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    sequence = ingest(args.input, args.format, directed=config.directed)
    if config.m is not None:
        sequence = GraphSequence(sequence.snapshots[: config.m])
    model = train(
        sequence,
        config.resolved_d(),
        d_extra=config.d_extra,
        loo_reps=config.loo_reps,
        quantile=0.99,
        seed=config.seed,
        weighted=config.weighted,
        clamp_negative=config.clamp,
    )
    save_model(model, args.out)
    print(
        f"trained model: n={model.n_nodes} d={model.d} m={model.m} "
        f"directed={model.directed} weighted={model.weighted} -> {args.out}"
    )
    return 0


def _report_first_alarm(first_alarm_k: int | None, steps: int) -> None:
    if first_alarm_k is None:
        print(f"no alarm within {steps} steps")
    else:
        print(f"first alarm: k={first_alarm_k}")


def cmd_monitor(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model = load_model(args.model)
    sequence = ingest(args.input, args.format, directed=model.directed)
    result = run_monitor(
        model,
        sequence,
        kind=config.statistic(),
        threshold=config.threshold_rule(),
        continue_after_alarm=config.continue_after_alarm,
    )
    fh, close = _open_out(args.out)
    try:
        write_trace(fh, result.decisions)
    finally:
        if close:
            fh.close()
    _report_first_alarm(result.first_alarm_k, len(result.decisions))
    return 2 if result.alarmed else 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    scenario = make_scenario(
        args.scenario, n_nodes=args.n_nodes, m=config.m, k_c=args.kc, horizon=args.horizon
    )
    training = scenario.training_sequence(config.seed)
    model = train(
        training,
        config.resolved_d(),
        d_extra=config.d_extra,
        loo_reps=config.loo_reps,
        seed=config.seed,
        weighted=scenario.weighted or config.weighted,
        clamp_negative=config.clamp,
    )
    result = run_monitor(
        model,
        scenario.stream(config.seed),
        kind=config.statistic(),
        threshold=config.threshold_rule(),
        continue_after_alarm=config.continue_after_alarm,
    )
    fh, close = _open_out(args.out)
    try:
        write_trace(fh, result.decisions, k_c=scenario.k_c)
    finally:
        if close:
            fh.close()
    _report_first_alarm(result.first_alarm_k, len(result.decisions))
    return 0


def cmd_predict_delay(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    model = load_model(args.model)
    layout = model.layout
    if args.scenario is not None:
        scenario = make_scenario(args.scenario)
        if scenario.n_nodes != model.n_nodes:
            raise ValueError(
                f"scenario {args.scenario!r} has {scenario.n_nodes} nodes, "
                f"model has {model.n_nodes}"
            )
        post_mean = scenario.changed_mean_matrix()
        sigma_after = scenario.changed_sigma_vec(layout)
    elif args.post_change_csv is not None:
        post_mean = hollow(read_dense_matrix(args.post_change_csv))
        if args.post_change_var_csv is not None:
            sigma_after = vec_residual(
                hollow(read_dense_matrix(args.post_change_var_csv)), layout
            )
        else:
            post_vec = np.clip(vec_residual(post_mean, layout), 0.0, 1.0)
            sigma_after = post_vec * (1.0 - post_vec)
    else:
        raise ValueError("provide --scenario or --post-change-csv")

    delta = vec_residual(model.p_hat - post_mean, layout)
    report = detectability(model.error, delta)
    k_star = predict_delay(
        args.kc, model.error, model.sigma, sigma_after, delta, max_horizon=args.horizon
    )
    print(f"detectable: {'yes' if report.detectable else 'no'}")
    print(f"margin: {report.margin!r}")
    if k_star is None:
        print(f"predicted alarm: none within horizon {args.horizon}")
    else:
        print(f"predicted alarm: k={k_star}")
        print(f"predicted delay: {k_star - args.kc}")
    return 0


def _embedding_dimension(matrix: np.ndarray, d: str) -> int:
    if d == "auto":
        return select_dimension(singular_spectrum(matrix)).d
    return int(d)


def cmd_embed(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if len(args.inputs) not in (1, 2):
        raise ValueError("embed takes one or two matrix files")
    snaps = [
        GraphSnapshot(read_dense_matrix(path), directed=config.directed)
        for path in args.inputs
    ]
    mats = [snap.weights**args.order for snap in snaps]
    d = _embedding_dimension(mats[0], config.d)

    fh, close = _open_out(args.out)
    try:
        if len(mats) == 1:
            _write_embedding(fh, mats[0], d, config, graph=1)
        else:
            if mats[0].shape != mats[1].shape:
                raise ValueError("the two matrices must have the same shape")
            off = (mats[0] + mats[1]) / 2.0
            omni = np.block([[mats[0], off], [off, mats[1]]])
            n = mats[0].shape[0]
            if config.directed:
                emb = directed_ase(omni, d)
                blocks = [
                    (emb.x_left[:n], emb.x_right[:n]),
                    (emb.x_left[n:], emb.x_right[n:]),
                ]
                _write_directed_header(fh, d)
                for graph, (left, right) in enumerate(blocks, start=1):
                    _write_directed_rows(fh, graph, left, right)
            else:
                emb = ase(omni, d, clamp_negative=config.clamp)
                _write_undirected_header(fh, d)
                for graph, block in enumerate((emb.x[:n], emb.x[n:]), start=1):
                    _write_undirected_rows(fh, graph, block)
    finally:
        if close:
            fh.close()
    return 0


def _write_undirected_header(fh: IO[str], d: int) -> None:
    coords = ",".join(f"c{i}" for i in range(d))
    fh.write(f"graph,node,{coords}\n")


def _write_undirected_rows(fh: IO[str], graph: int, block: np.ndarray) -> None:
    for node, row in enumerate(block):
        fh.write(f"{graph},{node}," + ",".join(repr(v) for v in row.tolist()) + "\n")


def _write_directed_header(fh: IO[str], d: int) -> None:
    left = ",".join(f"l{i}" for i in range(d))
    right = ",".join(f"r{i}" for i in range(d))
    fh.write(f"graph,node,{left},{right}\n")


def _write_directed_rows(fh: IO[str], graph: int, left: np.ndarray, right: np.ndarray) -> None:
    for node in range(left.shape[0]):
        row = left[node].tolist() + right[node].tolist()
        fh.write(f"{graph},{node}," + ",".join(repr(v) for v in row) + "\n")


def _write_embedding(fh: IO[str], matrix: np.ndarray, d: int, config: RunConfig, graph: int) -> None:
    if config.directed:
        emb = directed_ase(matrix, d)
        _write_directed_header(fh, d)
        _write_directed_rows(fh, graph, emb.x_left, emb.x_right)
    else:
        emb = ase(matrix, d, clamp_negative=config.clamp)
        _write_undirected_header(fh, d)
        _write_undirected_rows(fh, graph, emb.x)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d", default=None, help="embedding dimension or 'auto'")
    parser.add_argument("--d-extra", dest="d_extra", type=int, default=None,
                        help="extra dimensions on top of the automatic choice")
    parser.add_argument("--m", type=int, default=None, help="training snapshot count")
    parser.add_argument("--stat", choices=["cusum", "mosum", "mmosum", "ewsum"], default=None)
    parser.add_argument("--L", type=int, default=None, help="fixed window length (mosum)")
    parser.add_argument("--h", type=float, default=None, help="growing-window fraction (mmosum)")
    parser.add_argument("--beta", type=float, default=None, help="forgetting factor (ewsum)")
    parser.add_argument("--threshold", choices=["3sigma", "2sigma", "quantile"], default=None)
    parser.add_argument("--alpha", type=float, default=None, help="quantile threshold level")
    parser.add_argument("--mc-samples", dest="mc_samples", type=int, default=None)
    parser.add_argument("--loo-reps", dest="loo_reps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--directed", action="store_const", const=True, default=None)
    parser.add_argument("--weighted", action="store_const", const=True, default=None)
    parser.add_argument("--continue-after-alarm", dest="continue_after_alarm",
                        action="store_const", const=True, default=None)
    parser.add_argument("--clamp", action="store_const", const=True, default=None,
                        help="clamp negative retained eigenvalues to zero")
    parser.add_argument("--config", default=None, help="JSON config file; flags override")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphcpd",
        description="Online change-point detection over streams of graph snapshots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a reference model from clean snapshots")
    p_train.add_argument("--input", required=True, help="training data path")
    p_train.add_argument("--format", choices=["edge-list", "dense-csv"], default="edge-list")
    _add_common_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_mon = sub.add_parser("monitor", help="monitor a stream against a trained model")
    p_mon.add_argument("--model", required=True, help="model file from 'train'")
    p_mon.add_argument("--input", required=True, help="stream data path")
    p_mon.add_argument("--format", choices=["edge-list", "dense-csv"], default="edge-list")
    _add_common_flags(p_mon)
    p_mon.set_defaults(func=cmd_monitor)

    p_sim = sub.add_parser("simulate", help="run a named synthetic scenario end to end")
    p_sim.add_argument("scenario", choices=list(SCENARIO_NAMES))
    p_sim.add_argument("--kc", type=int, default=None, help="change location override")
    p_sim.add_argument("--horizon", type=int, default=None, help="monitoring steps override")
    p_sim.add_argument("--n-nodes", dest="n_nodes", type=int, default=None)
    _add_common_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_pd = sub.add_parser("predict-delay", help="predict detection delay for a change")
    p_pd.add_argument("--model", required=True)
    p_pd.add_argument("--kc", type=int, default=0, help="hypothesized change location")
    p_pd.add_argument("--scenario", choices=list(SCENARIO_NAMES), default=None)
    p_pd.add_argument("--post-change-csv", dest="post_change_csv", default=None,
                      help="dense-csv of the post-change expectation matrix")
    p_pd.add_argument("--post-change-var-csv", dest="post_change_var_csv", default=None,
                      help="dense-csv of per-pair variances (default: Bernoulli from the mean)")
    p_pd.add_argument("--horizon", type=int, default=5000)
    _add_common_flags(p_pd)
    p_pd.set_defaults(func=cmd_predict_delay)

    p_emb = sub.add_parser("embed", help="embedding coordinates of one or two snapshots")
    p_emb.add_argument("inputs", nargs="+", help="one or two dense-csv matrix files")
    p_emb.add_argument("--order", type=int, default=1,
                       help="entrywise power applied before embedding")
    _add_common_flags(p_emb)
    p_emb.set_defaults(func=cmd_embed)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "d", None) not in (None, "auto"):
        try:
            int(args.d)
        except ValueError:
            parser.error(f"--d must be an integer or 'auto', got {args.d!r}")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
