"""Offline training of the reference model and the distributional machinery
built on it: per-pair variance and worst-case error vectors, analytic and
Monte-Carlo thresholds, change detectability, delay prediction, and model
serialization.

The monitored statistic is the squared norm of a partial sum of residual
vectors.  After ``k`` null steps its first two moments are approximately

    mean(k)     = k^2 ||e||^2 + k * sum(sigma)
    variance(k) = 4 k^3 sigma.(e^2) + 2 k^2 ||sigma||^2

where ``e`` is the (fixed) reconstruction-error vector left over from
training and ``sigma`` holds the per-pair variances of the adjacency
entries.  Everything in this module is an exact evaluation of those
expressions or a seeded Monte-Carlo of the matching limit distribution.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .graphs import (
    GraphSequence,
    ResidualLayout,
    hollow,
    mean_adjacency,
    vec_residual,
)
from .spectral import (
    Embedding,
    ase,
    directed_ase,
    select_dimension,
    singular_spectrum,
)

__all__ = [
    "NullModel",
    "DetectabilityReport",
    "train",
    "estimate_error_loo",
    "reconstruction_bias",
    "exact_null_model",
    "gamma_mean",
    "gamma_var",
    "threshold_three_sigma",
    "threshold_quantile",
    "NullQuantileSampler",
    "detectability",
    "mean_after_change",
    "predict_delay",
    "er_detectability_bound",
    "save_model",
    "load_model",
]

# Guard for Bernoulli variances when the reconstruction overshoots [0, 1].
_PROB_EPS = 1e-9

_MAGIC = b"RDPGNULL1"
_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class NullModel:
    """Trained reference model shared by all detectors monitoring a stream.

    ``p_hat`` is the hollow reconstruction of the expected adjacency matrix,
    ``p_vec`` its off-diagonal vectorization, ``sigma`` the per-pair variance
    vector, ``error`` the worst-case reconstruction-error vector estimated
    from training, and ``m`` the training size.  Immutable; safe to share
    across concurrent detectors.
    """

    embedding: Embedding
    p_hat: np.ndarray
    layout: ResidualLayout
    sigma: np.ndarray
    error: np.ndarray
    m: int
    p_vec: np.ndarray
    weighted: bool = False
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        r = self.layout.r
        for name in ("sigma", "error", "p_vec"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (r,):
                raise ValueError(f"{name} must have length r={r}, got shape {vec.shape}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be finite")
            vec = vec.copy()
            vec.flags.writeable = False
            object.__setattr__(self, name, vec)
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be nonnegative entrywise")
        p = np.array(self.p_hat, dtype=float)
        n = self.layout.n_nodes
        if p.shape != (n, n):
            raise ValueError(f"p_hat must be {n}x{n}, got {p.shape}")
        np.fill_diagonal(p, 0.0)
        p.flags.writeable = False
        object.__setattr__(self, "p_hat", p)

    @property
    def n_nodes(self) -> int:
        return self.layout.n_nodes

    @property
    def directed(self) -> bool:
        return self.layout.directed

    @property
    def r(self) -> int:
        return self.layout.r

    @property
    def d(self) -> int:
        return self.embedding.d


def _resolve_dimension(matrix: np.ndarray, d: int | str, d_extra: int) -> int:
    n = matrix.shape[0]
    if isinstance(d, str):
        if d != "auto":
            raise ValueError(f"d must be a positive integer or 'auto', got {d!r}")
        chosen = select_dimension(singular_spectrum(matrix)).d + d_extra
        return int(min(max(chosen, 1), n))
    if not 1 <= int(d) <= n:
        raise ValueError(f"d must lie in [1, {n}], got {d}")
    return int(d)


def _embed_matrix(matrix: np.ndarray, d: int, directed: bool, clamp_negative: bool) -> Embedding:
    if directed:
        return directed_ase(matrix, d)
    return ase(matrix, d, clamp_negative=clamp_negative)


def train(
    sequence: GraphSequence,
    d: int | str = "auto",
    *,
    d_extra: int = 0,
    loo_reps: int = 20,
    quantile: float = 0.99,
    seed: int | np.random.Generator = 0,
    weighted: bool = False,
    clamp_negative: bool = False,
) -> NullModel:
    """Fit the reference model from a clean training sequence.

    The embedding comes from the averaged adjacency matrix, whose per-entry
    variance falls like 1/m.  ``d="auto"`` picks the dimension at the scree
    elbow of the averaged matrix, plus ``d_extra`` (overestimating the
    dimension is safer than underestimating it).  ``weighted`` switches the
    variance vector from the Bernoulli form ``p(1-p)`` to the moment form
    ``E[A^2] - E[A]^2`` estimated through first- and second-moment
    embeddings.  The error vector comes from leave-one-out passes over the
    training set; a single-snapshot sequence forces it to zero with a
    warning.
    """
    rng = np.random.default_rng(seed)
    m = len(sequence)
    abar = mean_adjacency(sequence)
    directed = sequence.directed
    layout = sequence.layout()

    d_res = _resolve_dimension(abar, d, d_extra)
    embedding = _embed_matrix(abar, d_res, directed, clamp_negative)
    p_hat = hollow(embedding.reconstruction())
    p_vec = vec_residual(p_hat, layout)

    if weighted:
        abar2 = mean_adjacency(
            [type(snap)(snap.weights**2, directed=directed, t=snap.t) for snap in sequence]
        )
        d2 = _resolve_dimension(abar2, d, d_extra)
        emb2 = _embed_matrix(abar2, d2, directed, clamp_negative)
        moment2 = vec_residual(hollow(emb2.reconstruction()), layout)
        sigma = np.clip(moment2 - p_vec**2, 0.0, None)
    else:
        d2 = None
        p_tilde = np.clip(p_vec, _PROB_EPS, 1.0 - _PROB_EPS)
        sigma = p_tilde * (1.0 - p_tilde)

    if m >= 2:
        error = estimate_error_loo(
            sequence,
            d_res,
            reps=loo_reps,
            quantile=quantile,
            rng=rng,
            clamp_negative=clamp_negative,
        )
    else:
        warnings.warn(
            "training with a single snapshot: reconstruction-error vector forced to zero",
            stacklevel=2,
        )
        error = np.zeros(layout.r)

    config = {
        "d": d_res,
        "d_auto": isinstance(d, str),
        "d_extra": int(d_extra),
        "d_second_moment": d2,
        "loo_reps": int(loo_reps),
        "quantile": float(quantile),
        "weighted": bool(weighted),
        "clamp_negative": bool(clamp_negative),
    }
    return NullModel(
        embedding=embedding,
        p_hat=p_hat,
        layout=layout,
        sigma=sigma,
        error=error,
        m=m,
        p_vec=p_vec,
        weighted=weighted,
        config=config,
    )


def estimate_error_loo(
    sequence: GraphSequence,
    d: int,
    *,
    reps: int = 20,
    quantile: float = 0.99,
    rng: int | np.random.Generator | None = None,
    clamp_negative: bool = False,
) -> np.ndarray:
    """Worst-case reconstruction-error vector from leave-one-out passes.

    For each sampled index j the reconstruction of snapshot j alone is
    compared against that of the average over the rest, scaled by
    1/sqrt(m - 1) so the difference sits on the scale of the full-average
    error.  Entries aggregate the per-pass magnitudes at ``quantile``,
    signed by the per-entry median so the result remains usable as a
    direction in detectability diagnostics.
    """
    rng = np.random.default_rng(rng)
    m = len(sequence)
    if m < 2:
        raise ValueError("leave-one-out estimation needs at least two snapshots")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if reps > m:
        warnings.warn(f"reps={reps} exceeds the training size; clamped to {m}", stacklevel=2)
        reps = m
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must lie in (0, 1], got {quantile}")

    layout = sequence.layout()
    directed = sequence.directed
    total = np.zeros_like(sequence[0].weights)
    for snap in sequence:
        total = total + snap.weights

    indices = rng.choice(m, size=reps, replace=False)
    scale = np.sqrt(m - 1.0)
    rows = np.empty((reps, layout.r))
    for i, j in enumerate(indices):
        single = sequence[int(j)].weights
        rest = (total - single) / (m - 1.0)
        recon_single = _embed_matrix(single, d, directed, clamp_negative).reconstruction()
        recon_rest = _embed_matrix(rest, d, directed, clamp_negative).reconstruction()
        rows[i] = vec_residual(hollow(recon_single) - hollow(recon_rest), layout) / scale

    magnitude = np.quantile(np.abs(rows), quantile, axis=0)
    sign = np.where(np.median(rows, axis=0) < 0.0, -1.0, 1.0)
    return magnitude * sign


def exact_null_model(
    latent: np.ndarray | None = None,
    *,
    x_left: np.ndarray | None = None,
    x_right: np.ndarray | None = None,
    second_moment: np.ndarray | None = None,
    m: int = 1,
) -> NullModel:
    """Model with known latent positions and zero estimation error.

    Used for calibration and performance studies where the reconstruction is
    exact by construction.  For weighted models pass the exact second-moment
    matrix so the variance vector is the moment difference; otherwise the
    Bernoulli form applies.
    """
    if latent is not None:
        x = np.atleast_2d(np.asarray(latent, dtype=float))
        if x.shape[0] == 1 and x.shape[1] > 1:
            x = x.T
        embedding = Embedding(kind="undirected", d=x.shape[1], x=x)
        directed = False
    elif x_left is not None and x_right is not None:
        xl = np.atleast_2d(np.asarray(x_left, dtype=float))
        xr = np.atleast_2d(np.asarray(x_right, dtype=float))
        embedding = Embedding(kind="directed", d=xl.shape[1], x_left=xl, x_right=xr)
        directed = True
    else:
        raise ValueError("provide either latent or the (x_left, x_right) pair")

    layout = ResidualLayout(directed=directed, n_nodes=embedding.n_nodes)
    p_hat = hollow(embedding.reconstruction())
    p_vec = vec_residual(p_hat, layout)
    if second_moment is not None:
        moment2 = vec_residual(hollow(np.asarray(second_moment, dtype=float)), layout)
        sigma = np.clip(moment2 - p_vec**2, 0.0, None)
        weighted = True
    else:
        p_tilde = np.clip(p_vec, _PROB_EPS, 1.0 - _PROB_EPS)
        sigma = p_tilde * (1.0 - p_tilde)
        weighted = False
    return NullModel(
        embedding=embedding,
        p_hat=p_hat,
        layout=layout,
        sigma=sigma,
        error=np.zeros(layout.r),
        m=m,
        p_vec=p_vec,
        weighted=weighted,
        config={"exact": True},
    )


def gamma_mean(k: int, error: np.ndarray, sigma: np.ndarray) -> float:
    """Approximate mean of the cumulative statistic after ``k`` null steps."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    e = np.asarray(error, dtype=float)
    s = np.asarray(sigma, dtype=float)
    return float(k**2 * (e @ e) + k * s.sum())


def gamma_var(k: int, error: np.ndarray, sigma: np.ndarray) -> float:
    """Approximate variance of the cumulative statistic after ``k`` null steps."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    e = np.asarray(error, dtype=float)
    s = np.asarray(sigma, dtype=float)
    return float(4.0 * k**3 * (s @ (e * e)) + 2.0 * k**2 * (s @ s))


def threshold_three_sigma(
    k_eff: int,
    error: np.ndarray,
    sigma: np.ndarray,
    r: int | None = None,
    *,
    n_sigmas: float = 3.0,
) -> float:
    """Mean-plus-``n_sigmas``-standard-deviations threshold for the weighted
    statistic at effective window length ``k_eff``.

    Cheap, analytic, and close to the 0.99 Monte-Carlo quantile in practice;
    ``n_sigmas=2`` gives the more aggressive variant.
    """
    if k_eff < 1:
        raise ValueError("k_eff must be at least 1")
    if r is None:
        r = int(np.asarray(sigma).size)
    omega = 1.0 / (r * float(k_eff) ** 1.5)
    return omega * gamma_mean(k_eff, error, sigma) + n_sigmas * np.sqrt(
        omega**2 * gamma_var(k_eff, error, sigma)
    )


class NullQuantileSampler:
    """Monte-Carlo draws of the null statistic, reusable across step counts.

    The squared norm of the partial sum decomposes into a quadratic and a
    linear functional of one standard Gaussian vector plus a deterministic
    drift:

        gamma(k) = k * u + 2 k^{3/2} * v + k^2 ||e||^2,
        u = sum sigma_l y_l^2,   v = sum sqrt(sigma_l) e_l y_l.

    One batch of (u, v) draws therefore gives the statistic's distribution at
    every k, including the degenerate entries with ``sigma_l == 0`` whose
    deterministic contribution lives in the drift term.
    """

    def __init__(
        self,
        error: np.ndarray,
        sigma: np.ndarray,
        mc_samples: int = 100_000,
        rng: int | np.random.Generator | None = None,
        chunk: int = 1024,
    ) -> None:
        e = np.asarray(error, dtype=float)
        s = np.asarray(sigma, dtype=float)
        if e.shape != s.shape or e.ndim != 1:
            raise ValueError("error and sigma must be 1-d vectors of equal length")
        if mc_samples < 1:
            raise ValueError("mc_samples must be positive")
        rng = np.random.default_rng(rng)
        self.r = e.size
        self._e_sq = float(e @ e)
        weighted_e = np.sqrt(s) * e
        u = np.empty(mc_samples)
        v = np.empty(mc_samples)
        for start in range(0, mc_samples, chunk):
            stop = min(start + chunk, mc_samples)
            y = rng.standard_normal((stop - start, self.r))
            u[start:stop] = (y * y) @ s
            v[start:stop] = y @ weighted_e
        self._u = u
        self._v = v

    def raw_quantile(self, k_eff: int, alpha: float) -> float:
        """(1 - alpha)-quantile of the unweighted statistic at ``k_eff``."""
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        k = float(k_eff)
        draws = k * self._u + 2.0 * k**1.5 * self._v + k**2 * self._e_sq
        return float(np.quantile(draws, 1.0 - alpha))

    def threshold(self, k_eff: int, alpha: float) -> float:
        """Weighted-statistic threshold at effective window length ``k_eff``."""
        if k_eff < 1:
            raise ValueError("k_eff must be at least 1")
        omega = 1.0 / (self.r * float(k_eff) ** 1.5)
        return omega * self.raw_quantile(k_eff, alpha)


def threshold_quantile(
    k_eff: int,
    error: np.ndarray,
    sigma: np.ndarray,
    alpha: float,
    mc_samples: int = 100_000,
    rng: int | np.random.Generator | None = None,
) -> float:
    """Seeded Monte-Carlo (1 - alpha)-quantile threshold for the weighted
    statistic at effective window length ``k_eff``.

    Build a :class:`NullQuantileSampler` directly when thresholds at many
    step counts are needed; the draws are shared across k.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    sampler = NullQuantileSampler(error, sigma, mc_samples=mc_samples, rng=rng)
    return sampler.threshold(k_eff, alpha)


@dataclass(frozen=True)
class DetectabilityReport:
    """Verdict on whether a hypothesized change can outgrow the threshold.

    ``margin`` is ``||e + delta||^2 - ||e||^2``; the change is detectable in
    the long run exactly when it is positive.  ``angle_margin`` restates the
    same condition as ``2 ||e|| cos(theta) + ||delta||`` with ``theta`` the
    angle between the error and the change.
    """

    detectable: bool
    margin: float
    angle_margin: float


def detectability(error: np.ndarray, delta: np.ndarray) -> DetectabilityReport:
    """Check the long-run detectability condition for a change ``delta``
    (vectorized difference between the nominal and post-change expectation
    matrices) against the trained error vector."""
    e = np.asarray(error, dtype=float)
    dl = np.asarray(delta, dtype=float)
    if e.shape != dl.shape:
        raise ValueError("error and delta must have matching lengths")
    combined = e + dl
    margin = float(combined @ combined - e @ e)
    e_norm = float(np.linalg.norm(e))
    d_norm = float(np.linalg.norm(dl))
    cos_theta = float(e @ dl / (e_norm * d_norm)) if e_norm > 0 and d_norm > 0 else 0.0
    return DetectabilityReport(
        detectable=margin > 0.0,
        margin=margin,
        angle_margin=2.0 * e_norm * cos_theta + d_norm,
    )


def mean_after_change(
    k: int,
    k_c: int,
    error: np.ndarray,
    delta: np.ndarray,
    sigma_before: np.ndarray,
    sigma_after: np.ndarray,
) -> float:
    """Approximate mean of the cumulative statistic at step ``k`` when the
    stream switched models at step ``k_c``."""
    if k_c < 0 or k < k_c:
        raise ValueError(f"need k >= k_c >= 0, got k={k}, k_c={k_c}")
    e = np.asarray(error, dtype=float)
    dl = np.asarray(delta, dtype=float)
    drift = k * e + (k - k_c) * dl
    return float(
        drift @ drift
        + k_c * np.asarray(sigma_before, dtype=float).sum()
        + (k - k_c) * np.asarray(sigma_after, dtype=float).sum()
    )


def predict_delay(
    k_c: int,
    error: np.ndarray,
    sigma_before: np.ndarray,
    sigma_after: np.ndarray,
    delta: np.ndarray,
    max_horizon: int,
    r: int | None = None,
) -> int | None:
    """First step count at which the predicted post-change mean crosses the
    three-sigma threshold.

    Scans forward from the change point (robust to the crossing condition
    having several algebraic roots); returns ``None`` when no crossing occurs
    within ``max_horizon``.
    """
    e = np.asarray(error, dtype=float)
    dl = np.asarray(delta, dtype=float)
    sb = np.asarray(sigma_before, dtype=float)
    sa = np.asarray(sigma_after, dtype=float)
    if r is None:
        r = sb.size
    start = max(k_c, 1)
    if max_horizon < start:
        return None

    ks = np.arange(start, max_horizon + 1, dtype=float)
    post = ks - k_c
    e_sq = float(e @ e)
    d_sq = float(dl @ dl)
    e_dot_d = float(e @ dl)
    mean_ac = (
        ks**2 * e_sq
        + 2.0 * ks * post * e_dot_d
        + post**2 * d_sq
        + k_c * sb.sum()
        + post * sa.sum()
    )
    omega = 1.0 / (r * ks**1.5)
    mean_null = ks**2 * e_sq + ks * sb.sum()
    var_null = 4.0 * ks**3 * float(sb @ (e * e)) + 2.0 * ks**2 * float(sb @ sb)
    threshold = omega * mean_null + 3.0 * np.sqrt(omega**2 * var_null)
    hits = np.nonzero(omega * mean_ac >= threshold)[0]
    if hits.size == 0:
        return None
    return int(ks[hits[0]])


def er_detectability_bound(p: float, delta_shift: float, n_nodes: int, m: int) -> float:
    """Closed-form lower bound on the probability that a homogeneous density
    shift of size ``delta_shift`` satisfies the detectability condition,
    for an ``n_nodes``-node homogeneous graph trained on ``m`` snapshots.

    Grows toward 1 as ``delta_shift^2 * n_nodes^2 * m`` grows; clipped below
    at zero.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if delta_shift == 0.0:
        raise ValueError("delta_shift must be nonzero")
    if n_nodes < 2 or m < 1:
        raise ValueError("need n_nodes >= 2 and m >= 1")
    slack = (
        8.0
        * (1.0 - p)
        / (delta_shift**2 * n_nodes**2 * (n_nodes - 1) * m)
        * ((1.0 - p) / (n_nodes * m) + 2.0 * (n_nodes - 1) * p)
    )
    return max(0.0, 1.0 - slack)


# ---------------------------------------------------------------------------
# Model-file serialization.
#
# Layout of a model file (all integers little-endian unsigned 64-bit, all
# floats little-endian IEEE 754 doubles):
#
#   magic        9 bytes, b"RDPGNULL1"
#   header_len   u64
#   header       UTF-8 JSON: version, kind, directed, weighted, n_nodes, d,
#                m, order, config, and the ordered array manifest
#                [{"name": ..., "shape": [...]}, ...]
#   arrays       for each manifest entry: u64 element count, then that many
#                f64 values in row-major order
#
# The reconstruction p_hat and p_vec are recomputed on load from the stored
# embedding, so the file stays minimal and internally consistent.
# ---------------------------------------------------------------------------


def _model_arrays(model: NullModel) -> list[tuple[str, np.ndarray]]:
    emb = model.embedding
    if emb.kind == "directed":
        arrays = [("x_left", emb.x_left), ("x_right", emb.x_right)]
    else:
        arrays = [("x", emb.x)]
    arrays += [("sigma", model.sigma), ("error", model.error)]
    return arrays


def _write_array(fh: BinaryIO, values: np.ndarray) -> None:
    data = np.ascontiguousarray(values, dtype="<f8")
    fh.write(struct.pack("<Q", data.size))
    fh.write(data.tobytes())


def _read_exact(fh: BinaryIO, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ValueError("truncated model file")
    return data


def _read_array(fh: BinaryIO, shape: list[int]) -> np.ndarray:
    (count,) = struct.unpack("<Q", _read_exact(fh, 8))
    expected = int(np.prod(shape)) if shape else count
    if count != expected:
        raise ValueError(f"array length {count} does not match declared shape {shape}")
    return np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").astype(float).reshape(shape)


def save_model(model: NullModel, path: str) -> None:
    """Write ``model`` to a single self-describing binary file."""
    arrays = _model_arrays(model)
    header = {
        "version": _FORMAT_VERSION,
        "kind": model.embedding.kind,
        "order": model.embedding.order,
        "directed": model.directed,
        "weighted": model.weighted,
        "n_nodes": model.n_nodes,
        "d": model.d,
        "m": model.m,
        "config": model.config,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            _write_array(fh, arr)


def load_model(path: str) -> NullModel:
    """Read a model file written by :func:`save_model`."""
    with open(path, "rb") as fh:
        if _read_exact(fh, len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a model file (bad magic)")
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        if header.get("version") != _FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {header.get('version')}")
        data = {
            entry["name"]: _read_array(fh, entry["shape"]) for entry in header["arrays"]
        }

    kind = header["kind"]
    if kind == "directed":
        embedding = Embedding(
            kind=kind, d=header["d"], x_left=data["x_left"], x_right=data["x_right"]
        )
    else:
        embedding = Embedding(kind=kind, d=header["d"], x=data["x"], order=header.get("order"))
    layout = ResidualLayout(directed=header["directed"], n_nodes=header["n_nodes"])
    p_hat = hollow(embedding.reconstruction())
    return NullModel(
        embedding=embedding,
        p_hat=p_hat,
        layout=layout,
        sigma=data["sigma"],
        error=data["error"],
        m=header["m"],
        p_vec=vec_residual(p_hat, layout),
        weighted=header["weighted"],
        config=header.get("config", {}),
    )
