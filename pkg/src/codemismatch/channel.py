"""Finite-alphabet channel model, input distributions, and decoding metrics.

A discrete memoryless channel is a row-stochastic matrix W(y|x) stored
x-major: ``w[x, y]`` is the probability of output y given input x. Input
distributions P_X live on an alphabet whose size is a power of two (2^m),
so length-m bit blocks can address symbols directly; loaders pad smaller
alphabets with zero-mass dummy symbols.

A decoding metric is any nonnegative score table U(x, y). Decoders rank
candidate sequences by sums of log U, so metrics are equivalent up to
positive per-output scaling a(y) and elementwise powers. The tilted family

    U_theta(x|y) = U(x,y)^theta / sum_x' U(x',y)^theta

normalizes each output column into a conditional distribution over x;
sweeping theta >= 0 spans the decoder-equivalent family used throughout
the exponent computations. All information quantities are in bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChannelSpecError, DegenerateMetricError

__all__ = [
    "Dmc",
    "InputDist",
    "DecodingMetric",
    "TiltedMetric",
    "ConditionalDist",
    "entropy",
    "mutual_information",
    "weighted_kl",
    "map_metric",
    "ml_metric",
    "tilt_metric",
    "posterior",
    "load_channel_spec",
]

ROW_SUM_TOL = 1e-9      # stochasticity tolerance at load time
DIST_TOL = 1e-12        # tolerance for constructed distributions


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _entropy_bits(p: np.ndarray) -> float:
    nz = p > 0
    return float(-np.sum(p[nz] * np.log2(p[nz])))


@dataclass(frozen=True)
class Dmc:
    """Discrete memoryless channel W(y|x), indexed (x, y)."""

    input_size: int
    output_size: int
    w: np.ndarray

    def __post_init__(self):
        w = _readonly(self.w)
        object.__setattr__(self, "w", w)
        if w.shape != (self.input_size, self.output_size):
            raise ChannelSpecError(
                f"w has shape {w.shape}, expected "
                f"({self.input_size}, {self.output_size})")
        m = round(math.log2(self.input_size))
        if self.input_size < 2 or 2 ** m != self.input_size:
            raise ChannelSpecError(
                f"input_size {self.input_size} is not a power of two >= 2; "
                "pad with dummy symbols at load time")
        bad = np.argwhere(w < 0)
        if bad.size:
            x, y = bad[0]
            raise ChannelSpecError(f"w[{x}][{y}] = {w[x, y]} is negative")
        sums = w.sum(axis=1)
        off = np.abs(sums - 1.0)
        if np.any(off > ROW_SUM_TOL):
            x = int(np.argmax(off))
            raise ChannelSpecError(
                f"w row {x} sums to {sums[x]:.12g} "
                f"(tolerance {ROW_SUM_TOL:g})")

    @property
    def m(self) -> int:
        """Bits per input symbol, log2 |X|."""
        return round(math.log2(self.input_size))


@dataclass(frozen=True)
class InputDist:
    """Input assignment P_X with its entropy cached in bits."""

    p: np.ndarray
    entropy_bits: float = field(init=False)

    def __post_init__(self):
        p = _readonly(self.p)
        object.__setattr__(self, "p", p)
        if p.ndim != 1:
            raise ChannelSpecError("p_x must be a vector")
        bad = np.argwhere(p < 0)
        if bad.size:
            i = int(bad[0][0])
            raise ChannelSpecError(f"p_x[{i}] = {p[i]} is negative")
        s = float(p.sum())
        if abs(s - 1.0) > DIST_TOL:
            raise ChannelSpecError(
                f"p_x sums to {s:.15g} (tolerance {DIST_TOL:g})")
        object.__setattr__(self, "entropy_bits", _entropy_bits(p))


@dataclass(frozen=True)
class DecodingMetric:
    """Nonnegative score table U(x, y) with a display name."""

    u: np.ndarray
    name: str = "metric"

    def __post_init__(self):
        u = _readonly(self.u)
        object.__setattr__(self, "u", u)
        if u.ndim != 2:
            raise ChannelSpecError("metric table must be 2-D")
        bad = np.argwhere(u < 0)
        if bad.size:
            x, y = bad[0]
            raise ChannelSpecError(f"u[{x}][{y}] = {u[x, y]} is negative")
        dead = np.flatnonzero(u.max(axis=0) <= 0)
        if dead.size:
            raise DegenerateMetricError(
                f"metric column y={int(dead[0])} has no positive score; "
                "decoder undefined at that output")


@dataclass(frozen=True)
class TiltedMetric:
    """Per-output normalization of U^theta: columns sum to 1 over x."""

    theta: float
    u_theta: np.ndarray

    def __post_init__(self):
        if self.theta < 0:
            raise ChannelSpecError(f"theta = {self.theta} must be >= 0")
        ut = _readonly(self.u_theta)
        object.__setattr__(self, "u_theta", ut)
        col = ut.sum(axis=0)
        if np.any(np.abs(col - 1.0) > DIST_TOL):
            y = int(np.argmax(np.abs(col - 1.0)))
            raise ChannelSpecError(
                f"tilted column y={y} sums to {col[y]:.15g}")


@dataclass(frozen=True)
class ConditionalDist:
    """Conditional probability table; ``direction`` says which way.

    "y_given_x": q[x, y] = Q(y|x), rows over y sum to 1.
    "x_given_y": q[x, y] = Q(x|y), columns over x sum to 1.
    """

    q: np.ndarray
    direction: str

    def __post_init__(self):
        q = _readonly(self.q)
        object.__setattr__(self, "q", q)
        if self.direction not in ("y_given_x", "x_given_y"):
            raise ChannelSpecError(
                f"unknown direction {self.direction!r}")
        axis = 1 if self.direction == "y_given_x" else 0
        sums = q.sum(axis=axis)
        off = np.abs(sums - 1.0)
        if np.any(off > DIST_TOL):
            i = int(np.argmax(off))
            raise ChannelSpecError(
                f"conditional row {i} sums to {sums[i]:.15g}")


def entropy(p: InputDist) -> float:
    """H(P_X) in bits; 0 log 0 = 0."""
    return p.entropy_bits


def mutual_information(p: InputDist, ch: Dmc) -> float:
    """I(X;Y) in bits for the joint P_X(x) W(y|x)."""
    if len(p.p) != ch.input_size:
        raise ChannelSpecError(
            f"p_x has {len(p.p)} entries, channel expects {ch.input_size}")
    w = ch.w
    py = p.p @ w
    mask = (w > 0) & (p.p[:, None] > 0)
    ratio = np.where(mask, w / np.where(py[None, :] > 0, py[None, :], 1.0), 1.0)
    terms = np.where(mask, w * np.log2(ratio), 0.0)
    return float((p.p[:, None] * terms).sum())


def weighted_kl(q: ConditionalDist, ch: Dmc, p: InputDist) -> float:
    """D(Q_{Y|X} || W | P_X) in bits; +inf when Q puts mass where W has none.

    Only rows with P_X(x) > 0 contribute.
    """
    if q.direction != "y_given_x":
        raise ChannelSpecError("weighted_kl expects a Y-given-X conditional")
    qm, w, px = q.q, ch.w, p.p
    if qm.shape != w.shape:
        raise ChannelSpecError(
            f"conditional shape {qm.shape} != channel shape {w.shape}")
    rows = px > 0
    viol = (qm > 0) & (w <= 0) & rows[:, None]
    if np.any(viol):
        return math.inf
    mask = (qm > 0) & rows[:, None]
    terms = np.where(mask, qm * np.log2(np.where(mask, qm, 1.0) /
                                        np.where(mask, w, 1.0)), 0.0)
    return float((px[:, None] * terms).sum())


def map_metric(p: InputDist, ch: Dmc) -> DecodingMetric:
    """U(x,y) = P_X(x) W(y|x), proportional to the posterior per output."""
    u = p.p[:, None] * ch.w
    return DecodingMetric(u=u, name="map")


def ml_metric(ch: Dmc) -> DecodingMetric:
    """U(x,y) = W(y|x)."""
    return DecodingMetric(u=ch.w.copy(), name="ml")


def tilt_metric(u: DecodingMetric, theta: float) -> TiltedMetric:
    """Column-normalize U^theta into U_theta(x|y).

    theta = 0 gives the uniform conditional 1/|X| regardless of U. Powers
    are taken in the log domain so extreme theta neither overflows nor
    silently flushes to zero.
    """
    if theta < 0:
        raise ChannelSpecError(f"theta = {theta} must be >= 0")
    nx = u.u.shape[0]
    if theta == 0.0:
        ut = np.full_like(u.u, 1.0 / nx)
        return TiltedMetric(theta=0.0, u_theta=ut)
    with np.errstate(divide="ignore"):
        lu = np.where(u.u > 0, np.log(np.where(u.u > 0, u.u, 1.0)), -np.inf)
    t = theta * lu
    top = t.max(axis=0)
    if np.any(np.isneginf(top)):
        y = int(np.argmax(np.isneginf(top)))
        raise DegenerateMetricError(
            f"all scores vanish in column y={y} at theta={theta}")
    with np.errstate(invalid="ignore"):
        ez = np.exp(t - top[None, :])
    ez[~np.isfinite(ez)] = 0.0
    ut = ez / ez.sum(axis=0, keepdims=True)
    return TiltedMetric(theta=float(theta), u_theta=ut)


def posterior(p: InputDist, ch: Dmc) -> ConditionalDist:
    """P_{X|Y} induced by P_X x W; outputs with zero mass get a uniform
    column so the table stays a valid conditional."""
    joint = p.p[:, None] * ch.w
    py = joint.sum(axis=0)
    nx = ch.input_size
    cols = np.where(py[None, :] > 0, joint / np.where(py > 0, py, 1.0)[None, :],
                    1.0 / nx)
    return ConditionalDist(q=cols, direction="x_given_y")


def _require(d: dict, key: str, origin: str):
    if key not in d:
        raise ChannelSpecError(f"{origin}: missing field {key!r}")
    return d[key]


def load_channel_spec(path) -> tuple[Dmc, InputDist]:
    """Load a channel spec JSON file into (Dmc, InputDist).

    Fields: ``input_size``, ``output_size``, ``matrix_orientation``
    ("x_major" or "paper_column"), ``w`` (nested arrays), ``p_x``.
    "paper_column" means each printed column is the distribution of one
    input, i.e. the transpose of the internal x-major layout.

    Rows within 1e-9 of stochastic are renormalized; worse rows are
    rejected. Alphabets that are not a power of two are padded with
    zero-mass dummy inputs (uniform channel rows, never selected).
    """
    origin = str(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ChannelSpecError(f"{origin}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ChannelSpecError(f"{origin}: invalid JSON ({exc})") from exc

    nx = _require(raw, "input_size", origin)
    ny = _require(raw, "output_size", origin)
    orient = _require(raw, "matrix_orientation", origin)
    w = np.array(_require(raw, "w", origin), dtype=float)
    px = np.array(_require(raw, "p_x", origin), dtype=float)

    if not (isinstance(nx, int) and isinstance(ny, int)) or nx < 1 or ny < 1:
        raise ChannelSpecError(
            f"{origin}: input_size/output_size must be positive integers")
    if orient == "paper_column":
        if w.ndim != 2 or w.shape != (ny, nx):
            raise ChannelSpecError(
                f"{origin}: paper_column w must be {ny} rows x {nx} cols, "
                f"got {w.shape}")
        w = w.T.copy()
    elif orient == "x_major":
        if w.ndim != 2 or w.shape != (nx, ny):
            raise ChannelSpecError(
                f"{origin}: x_major w must be {nx} rows x {ny} cols, "
                f"got {w.shape}")
    else:
        raise ChannelSpecError(
            f"{origin}: matrix_orientation must be 'x_major' or "
            f"'paper_column', got {orient!r}")

    bad = np.argwhere(w < 0)
    if bad.size:
        x, y = bad[0]
        raise ChannelSpecError(f"{origin}: w[{x}][{y}] = {w[x, y]} negative")
    sums = w.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > ROW_SUM_TOL):
        x = int(np.argmax(off))
        raise ChannelSpecError(
            f"{origin}: w row {x} sums to {sums[x]:.12g}, outside the "
            f"{ROW_SUM_TOL:g} load tolerance")
    w = w / sums[:, None]

    if px.shape != (nx,):
        raise ChannelSpecError(
            f"{origin}: p_x has {px.shape[0] if px.ndim == 1 else px.shape} "
            f"entries, expected {nx}")
    if np.any(px < 0):
        i = int(np.argmax(px < 0))
        raise ChannelSpecError(f"{origin}: p_x[{i}] = {px[i]} negative")
    s = float(px.sum())
    if abs(s - 1.0) > ROW_SUM_TOL:
        raise ChannelSpecError(
            f"{origin}: p_x sums to {s:.12g}, outside the "
            f"{ROW_SUM_TOL:g} load tolerance")
    px = px / s

    padded = 2 ** max(1, math.ceil(math.log2(nx)))
    if padded != nx:
        w = np.vstack([w, np.full((padded - nx, ny), 1.0 / ny)])
        px = np.concatenate([px, np.zeros(padded - nx)])
        nx = padded

    return Dmc(input_size=nx, output_size=ny, w=w), InputDist(p=px)
