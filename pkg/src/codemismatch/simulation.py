"""Monte-Carlo validation of the mismatch model on random linear codes.

The ensemble: G is a uniform k x nm binary matrix, v a uniform length-nm
offset, c(w) = b(w) G xor v over GF(2) with b(w) the MSB-first binary
expansion of the message index. Bit strings become symbol strings through
the natural blockwise labeling (m bits per symbol, block read as an
integer). The encoder only ever transmits members of one exact type
class; the decoder ranks ALL 2^k codewords by an additive metric. That
asymmetry is the object under test, so the decoder never shortcuts by
subcode membership.

Everything randomized is a pure function of its seed. Per-trial
generators derive from (master_seed, trial, stream) tuples, so any
single trial replays in isolation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import chisquare

from .channel import DecodingMetric, Dmc, InputDist
from .errors import (AllZeroScoreError, ChannelSpecError, CompositionError,
                     SizeCapError)

__all__ = [
    "CodeParams",
    "Labeling",
    "LinearCodeInstance",
    "SubcodeSelection",
    "TrialReport",
    "IndependenceReport",
    "UnionPairResult",
    "UnionBoundReport",
    "sample_code",
    "select_subcode",
    "decode",
    "run_trials",
    "independence_probe",
    "union_bound_probe",
]

NM_CAP = 24          # exhaustive decoding: 2^k codewords of nm bits
K_CAP = 20
PROBE_NM_CAP = 10    # independence_probe cell tables
TRIPLE_BITS_CAP = 24 # 3*nm above this skips the triple cell table
UNION_K_CAP = 8
UNION_NM_CAP = 20    # 2^nm sequence-score table

_SeedLike = Union[int, Sequence[int]]


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _msb_bits(w: int, width: int) -> np.ndarray:
    return np.array([(w >> (width - 1 - j)) & 1 for j in range(width)],
                    dtype=np.uint8)


@dataclass(frozen=True)
class CodeParams:
    """Block structure: n symbols of m bits each, FEC rate r_fec."""

    n: int
    m: int
    r_fec: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ChannelSpecError(f"need n >= 1 and m >= 1, got "
                                   f"n={self.n}, m={self.m}")
        if not (0.0 < self.r_fec <= 1.0):
            raise ChannelSpecError(f"r_fec = {self.r_fec} outside (0, 1]")

    @property
    def nm(self) -> int:
        return self.n * self.m

    @property
    def k(self) -> int:
        return int(round(self.nm * self.r_fec))

    @property
    def k_integral(self) -> bool:
        return abs(self.nm * self.r_fec - self.k) < 1e-9


@dataclass(frozen=True)
class Labeling:
    """Blockwise natural-binary map from m-bit strings to symbols.

    phi is the identity on {0, ..., 2^m - 1}: an m-bit block read
    MSB-first as an integer is the symbol index. Fixed rather than
    arbitrary so runs are reproducible; ensemble statistics do not
    depend on the choice.
    """

    m: int

    @property
    def phi(self) -> np.ndarray:
        return np.arange(2 ** self.m)

    def apply(self, bits: np.ndarray) -> np.ndarray:
        """Map (..., n*m) bit arrays to (..., n) symbol-index arrays."""
        bits = np.asarray(bits)
        if bits.shape[-1] % self.m:
            raise ChannelSpecError(
                f"bit length {bits.shape[-1]} not a multiple of m={self.m}")
        n = bits.shape[-1] // self.m
        pw = (1 << np.arange(self.m - 1, -1, -1)).astype(np.int64)
        return bits.reshape(*bits.shape[:-1], n, self.m) @ pw


@dataclass(frozen=True)
class LinearCodeInstance:
    n: int
    m: int
    k: int
    g: np.ndarray
    v: np.ndarray
    seed: object = None

    def __post_init__(self):
        object.__setattr__(self, "g",
                           _readonly(np.asarray(self.g, dtype=np.uint8)))
        object.__setattr__(self, "v",
                           _readonly(np.asarray(self.v, dtype=np.uint8)))
        nm = self.n * self.m
        if self.g.shape != (self.k, nm):
            raise ChannelSpecError(
                f"G has shape {self.g.shape}, expected {(self.k, nm)}")
        if self.v.shape != (nm,):
            raise ChannelSpecError(
                f"v has shape {self.v.shape}, expected ({nm},)")

    @property
    def nm(self) -> int:
        return self.n * self.m

    @cached_property
    def message_bits(self) -> np.ndarray:
        """(2^k, k) MSB-first expansions b(w) of every message index."""
        w = np.arange(2 ** self.k, dtype=np.int64)
        shifts = np.arange(self.k - 1, -1, -1)
        return _readonly(((w[:, None] >> shifts[None, :]) & 1).astype(np.uint8))

    @cached_property
    def codewords(self) -> np.ndarray:
        """(2^k, nm) table of c(w) = b(w) G xor v."""
        cw = (self.message_bits.astype(np.int64) @ self.g.astype(np.int64)
              + self.v.astype(np.int64)) % 2
        return _readonly(cw.astype(np.uint8))


def sample_code(n: int, m: int, r_fec: float, seed: _SeedLike,
                xor_offset: Optional[np.ndarray] = None) -> LinearCodeInstance:
    """Draw (G, v) with i.i.d. uniform bits from the seeded generator.

    Draw order is fixed (G row-major, then v) so instances replay from
    the seed alone. xor_offset, when given, is folded into v after
    sampling; with identical seeds the offset sampler's code is the
    baseline code translated by the offset, which is the handle used to
    check coset invariance of ensemble statistics.
    """
    params = CodeParams(n=n, m=m, r_fec=r_fec)
    if params.nm > NM_CAP:
        raise SizeCapError(f"n*m = {params.nm} exceeds cap {NM_CAP}")
    if params.k > K_CAP:
        raise SizeCapError(f"k = {params.k} exceeds cap {K_CAP}")
    if not params.k_integral:
        warnings.warn(
            f"n*m*r_fec = {params.nm * r_fec:g} is not integral; "
            f"rounding k to {params.k}", RuntimeWarning)
    rng = np.random.default_rng(seed)
    g = rng.integers(0, 2, size=(params.k, params.nm), dtype=np.uint8)
    v = rng.integers(0, 2, size=params.nm, dtype=np.uint8)
    if xor_offset is not None:
        off = np.asarray(xor_offset, dtype=np.uint8)
        if off.shape != (params.nm,):
            raise ChannelSpecError(
                f"xor_offset has shape {off.shape}, expected ({params.nm},)")
        v = v ^ off
    return LinearCodeInstance(n=n, m=m, k=params.k, g=g, v=v, seed=seed)


@dataclass(frozen=True)
class SubcodeSelection:
    """Messages whose codewords land exactly in the target type class."""

    composition: np.ndarray
    member_indices: np.ndarray
    effective_rate: float

    def __post_init__(self):
        object.__setattr__(self, "composition",
                           _readonly(np.asarray(self.composition, dtype=np.int64)))
        object.__setattr__(self, "member_indices",
                           _readonly(np.asarray(self.member_indices, dtype=np.int64)))

    @property
    def size(self) -> int:
        return len(self.member_indices)


def composition_counts(p: InputDist, n: int) -> np.ndarray:
    """Integer symbol counts n * P_X, or CompositionError if not exact."""
    raw = p.p * n
    counts = np.rint(raw).astype(np.int64)
    bad = np.flatnonzero(np.abs(raw - counts) > 1e-9)
    if bad.size:
        raise CompositionError(
            f"n*P_X is not integral at symbol(s) {bad.tolist()} "
            f"(n={n}, values {raw[bad].tolist()})")
    return counts


def select_subcode(code: LinearCodeInstance, labeling: Labeling,
                   p: InputDist) -> SubcodeSelection:
    """Keep exactly the codewords whose symbol histogram matches n*P_X.

    An empty selection is a legitimate outcome for an unlucky (G, v)
    draw; it is reported with effective_rate -inf, never resampled here.
    """
    if labeling.m != code.m:
        raise ChannelSpecError(
            f"labeling is for m={labeling.m} bits, code has m={code.m}")
    counts = composition_counts(p, code.n)
    if len(p.p) < 2 ** code.m:
        raise ChannelSpecError(
            f"input distribution covers {len(p.p)} symbols, labeling "
            f"needs {2 ** code.m}")
    symbols = labeling.apply(code.codewords)
    ok = np.ones(symbols.shape[0], dtype=bool)
    # symbols >= 2^m never occur, so a composition demanding them kills
    # the whole selection; iterate the full alphabet to catch that
    for s in range(len(counts)):
        ok &= (symbols == s).sum(axis=1) == counts[s]
    members = np.flatnonzero(ok)
    eff = math.log2(len(members)) / code.n if len(members) else -math.inf
    return SubcodeSelection(composition=counts, member_indices=members,
                            effective_rate=eff)


def _log_scores(code: LinearCodeInstance, labeling: Labeling,
                u: DecodingMetric, y: np.ndarray) -> np.ndarray:
    symbols = labeling.apply(code.codewords)
    with np.errstate(divide="ignore"):
        log_u = np.log(u.u)
    return log_u[symbols, np.asarray(y)[None, :]].sum(axis=1)


def decode(code: LinearCodeInstance, labeling: Labeling, u: DecodingMetric,
           y: np.ndarray) -> tuple[int, bool]:
    """Rank all 2^k messages by the additive log-metric score.

    Returns (first argmax, tie flag). The scan always covers the full
    code; restricting to a subcode would erase the mismatch under study.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.ndim != 1 or y.shape[0] != code.n:
        raise ChannelSpecError(f"y has shape {y.shape}, expected ({code.n},)")
    if u.u.shape[0] < 2 ** code.m:
        raise ChannelSpecError(
            f"metric covers {u.u.shape[0]} inputs, labeling needs {2 ** code.m}")
    scores = _log_scores(code, labeling, u, y)
    best = scores.max()
    if best == -math.inf:
        raise AllZeroScoreError(
            "every codeword hits a zero-metric position for this output")
    ties = int((scores == best).sum())
    return int(np.argmax(scores)), ties > 1


@dataclass(frozen=True)
class TrialReport:
    """Ensemble error-rate estimate with full seed bookkeeping.

    Ties count as errors (the decoder's >= event) and are also tallied
    separately. Trials whose subcode came up empty are skipped and
    counted; they never enter the denominator.
    """

    trials: int
    decoded_trials: int
    empty_subcode_trials: int
    errors: int
    tie_errors: int
    empirical_log2_pe: float
    master_seed: int
    per_trial_seeds: tuple = field(repr=False, default=())
    empty_dominated: bool = False

    @property
    def error_rate(self) -> float:
        return self.errors / self.decoded_trials if self.decoded_trials else math.nan


def _sample_outputs(ch: Dmc, x_idx: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(ch.w, axis=1)
    unif = rng.random(len(x_idx))
    idx = (cum[x_idx] < unif[:, None]).sum(axis=1)
    # row sums are 1 only within tolerance; clip the residual sliver
    return np.minimum(idx, ch.output_size - 1)


def run_trials(ch: Dmc, p: InputDist, code_params: CodeParams,
               u: DecodingMetric, trials: int, master_seed: int) -> TrialReport:
    """Estimate the ensemble average error probability.

    Per trial t: a fresh code from seed (master_seed, t, 0); the message
    index and channel noise from (master_seed, t, 1), drawn in that
    order. The message is uniform over the subcode members; the decoder
    sees the full code.
    """
    if trials < 1:
        raise ChannelSpecError(f"trials = {trials}, need >= 1")
    if code_params.nm > NM_CAP:
        raise SizeCapError(f"n*m = {code_params.nm} exceeds cap {NM_CAP}")
    if code_params.k > K_CAP:
        raise SizeCapError(f"k = {code_params.k} exceeds cap {K_CAP}")
    if 2 ** code_params.m > ch.input_size:
        raise ChannelSpecError(
            f"m = {code_params.m} needs {2 ** code_params.m} input symbols, "
            f"channel has {ch.input_size}")
    labeling = Labeling(m=code_params.m)
    composition_counts(p, code_params.n)

    errors = 0
    tie_errors = 0
    empty = 0
    seeds = []
    for t in range(trials):
        code_seed = (master_seed, t, 0)
        seeds.append(code_seed)
        code = sample_code(code_params.n, code_params.m, code_params.r_fec,
                           seed=code_seed)
        sel = select_subcode(code, labeling, p)
        if sel.size == 0:
            empty += 1
            continue
        rng = np.random.default_rng((master_seed, t, 1))
        w = int(sel.member_indices[rng.integers(sel.size)])
        x_sym = labeling.apply(code.codewords[w])
        y = _sample_outputs(ch, x_sym, rng)
        w_hat, tie = decode(code, labeling, u, y)
        if tie:
            errors += 1
            tie_errors += 1
        elif w_hat != w:
            errors += 1

    decoded = trials - empty
    dominated = empty > trials // 2
    if dominated:
        warnings.warn(
            f"{empty}/{trials} trials had empty subcodes; parameters are "
            "poorly chosen for this composition", RuntimeWarning)
    if decoded and errors:
        log2_pe = -math.log2(errors / decoded)
    else:
        log2_pe = math.inf
    return TrialReport(trials=trials, decoded_trials=decoded,
                       empty_subcode_trials=empty, errors=errors,
                       tie_errors=tie_errors, empirical_log2_pe=log2_pe,
                       master_seed=master_seed,
                       per_trial_seeds=tuple(seeds),
                       empty_dominated=dominated)


@dataclass(frozen=True)
class IndependenceReport:
    """Chi-square uniformity checks of the codeword ensemble.

    Singles are tested per message index; the pair and the XOR-linked
    triple each get one table. p-values near 0 reject uniformity.
    """

    samples: int
    nm: int
    k: int
    single_p: dict
    pair_p: Optional[float]
    pair_messages: Optional[tuple]
    triple_p: Optional[float]
    triple_messages: Optional[tuple]
    triple_vacuous: bool
    triple_skipped: Optional[str] = None
    zero_offset: bool = False


def _bit_pack(bits: np.ndarray) -> np.ndarray:
    nm = bits.shape[-1]
    pw = (1 << np.arange(nm - 1, -1, -1)).astype(np.int64)
    return bits.astype(np.int64) @ pw


def independence_probe(code_params: CodeParams, samples: int,
                       master_seed: int,
                       zero_offset: bool = False) -> IndependenceReport:
    """Sample (G, v) and test the uniformity claims behind the ensemble.

    (a) c(w) uniform on {0,1}^nm for each tested single w; (b) a pair
    (c(w), c(w')) uniform on the product space; (c) the XOR-linked
    triple (w, w', w xor w') uniform on the triple space. zero_offset
    forces v = 0, a deliberately broken ensemble where c(0) is constant.

    The triple table needs 2^{3 nm} cells; above TRIPLE_BITS_CAP total
    bits it is skipped with a reason rather than allocated.
    """
    nm, k = code_params.nm, code_params.k
    if nm > PROBE_NM_CAP:
        raise SizeCapError(f"n*m = {nm} exceeds probe cap {PROBE_NM_CAP}")
    if samples < 1:
        raise ChannelSpecError("samples must be >= 1")

    singles = [0, 1] if k >= 1 else [0]
    pair = (1, 2) if k >= 2 else ((0, 1) if k == 1 else None)
    triple = (1, 2, 3) if k >= 2 else None
    triple_skipped = None
    if triple is not None and 3 * nm > TRIPLE_BITS_CAP:
        triple_skipped = (f"3*nm = {3 * nm} bits exceeds triple cell cap "
                          f"{TRIPLE_BITS_CAP}")
        triple = None

    b_of = {w: _msb_bits(w, k).astype(np.int64) for w in
            set(singles) | set(pair or ()) | set(triple or ())}

    single_counts = {w: np.zeros(2 ** nm, dtype=np.int64) for w in singles}
    pair_counts = (np.zeros(2 ** (2 * nm), dtype=np.int64)
                   if pair is not None else None)
    triple_counts = (np.zeros(2 ** (3 * nm), dtype=np.int64)
                     if triple is not None else None)

    rng = np.random.default_rng(master_seed)
    chunk = 1 << 17
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        g = rng.integers(0, 2, size=(b, k, nm), dtype=np.uint8)
        v = rng.integers(0, 2, size=(b, nm), dtype=np.uint8)
        if zero_offset:
            v = np.zeros_like(v)
        idx = {}
        for w in b_of:
            cw = (np.einsum("j,bjn->bn", b_of[w], g.astype(np.int64)) +
                  v.astype(np.int64)) % 2
            idx[w] = _bit_pack(cw)
        for w in singles:
            single_counts[w] += np.bincount(idx[w], minlength=2 ** nm)
        if pair is not None:
            pi = idx[pair[0]] * (2 ** nm) + idx[pair[1]]
            pair_counts += np.bincount(pi, minlength=2 ** (2 * nm))
        if triple is not None:
            ti = ((idx[triple[0]] * (2 ** nm) + idx[triple[1]]) * (2 ** nm)
                  + idx[triple[2]])
            triple_counts += np.bincount(ti, minlength=2 ** (3 * nm))
        done += b

    def pval(counts: np.ndarray) -> float:
        if counts.min() == counts.max():
            # constant table: either perfectly uniform counts (p = 1) or
            # chisquare would divide by the common value anyway
            return float(chisquare(counts).pvalue) if counts.max() else 1.0
        return float(chisquare(counts).pvalue)

    single_p = {w: pval(c) for w, c in single_counts.items()}
    pair_p = pval(pair_counts) if pair is not None else None
    triple_p = pval(triple_counts) if triple is not None else None
    return IndependenceReport(
        samples=samples, nm=nm, k=k, single_p=single_p,
        pair_p=pair_p, pair_messages=pair,
        triple_p=triple_p, triple_messages=triple,
        triple_vacuous=(k < 2 and triple_skipped is None),
        triple_skipped=triple_skipped, zero_offset=zero_offset)


@dataclass(frozen=True)
class UnionPairResult:
    """Union-of-errors probability vs its sandwich at one (x, y)."""

    x: tuple
    y: tuple
    m_size: int
    alpha: float
    union_prob: float
    lower_decaen: float
    upper_truncated: float
    upper_union: float
    in_sandwich: bool
    mode: str
    draws: int


@dataclass(frozen=True)
class UnionBoundReport:
    k: int
    nm: int
    pairs: tuple
    all_in_sandwich: bool
    master_seed: int


def _sequence_score_table(log_u: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Scores of every symbol sequence in X^n against y, ravel order
    matching base-|X| integer encoding (first position most significant)."""
    cols = [log_u[:, yi] for yi in y]
    return reduce(np.add.outer, cols).ravel()


def union_bound_probe(ch: Dmc, p: InputDist, code_params: CodeParams,
                      u: DecodingMetric, trials: int,
                      master_seed: int = 0, *, n_pairs: int = 6,
                      exact_limit: int = 1 << 20) -> UnionBoundReport:
    """Sandwich the union-of-pairwise-errors probability at sampled (x, y).

    M(x, y) is counted exhaustively over all |X|^n candidate sequences
    with the >= tie convention (so x itself is in M and alpha >= |X|^-n).
    Conditioning on message 0 pins v to the transmitted bits, leaving
    the union event a function of G alone: when 2^{k*nm} <= exact_limit
    every G is enumerated and the union probability is exact; otherwise
    `trials` sampled G draws estimate it, each draw still evaluating all
    2^k - 1 competitors exhaustively. Membership in M is looked up by
    integer sequence index, never by re-summed float scores, so the
    count and the union event agree bitwise.
    """
    k, nm, n, m = code_params.k, code_params.nm, code_params.n, code_params.m
    if k > UNION_K_CAP:
        raise SizeCapError(f"k = {k} exceeds union probe cap {UNION_K_CAP}")
    if nm > UNION_NM_CAP:
        raise SizeCapError(f"n*m = {nm} exceeds union probe cap {UNION_NM_CAP}")
    if 2 ** m > ch.input_size or u.u.shape != ch.w.shape:
        raise ChannelSpecError("metric/channel shapes do not match the code")
    if trials < 1:
        raise ChannelSpecError("trials must be >= 1")

    nx = ch.input_size
    labeling = Labeling(m=m)
    with np.errstate(divide="ignore"):
        log_u = np.log(u.u)
    b_nz = np.stack([_msb_bits(w, k) for w in range(1, 2 ** k)]).astype(np.int64)
    seq_pow = (nx ** np.arange(n - 1, -1, -1)).astype(np.int64)

    exact = 2 ** (k * nm) <= exact_limit
    pair_rng = np.random.default_rng((master_seed, 1))

    def union_over_g(g_bits: np.ndarray, x_bits: np.ndarray,
                     member: np.ndarray) -> np.ndarray:
        cw = (np.einsum("wj,bjn->bwn", b_nz, g_bits) + x_bits[None, None, :]) % 2
        sym = labeling.apply(cw)
        seq_idx = sym @ seq_pow
        return member[seq_idx].any(axis=1)

    results = []
    for _ in range(n_pairs):
        x_sym = pair_rng.choice(nx, size=n, p=p.p)
        y = _sample_outputs(ch, x_sym, pair_rng)
        table = _sequence_score_table(log_u, y)
        s0 = table[int(x_sym @ seq_pow)]
        if s0 == -math.inf:
            raise AllZeroScoreError(
                "sampled (x, y) has zero metric score; cannot rank")
        member = table >= s0
        m_size = int(member.sum())
        alpha = m_size / nx ** n

        x_bits = ((x_sym[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1
                  ).reshape(nm).astype(np.int64)
        if exact:
            total = 2 ** (k * nm)
            hits = 0
            draws = total
            shifts = np.arange(k * nm - 1, -1, -1)
            for lo in range(0, total, 1 << 16):
                hi = min(lo + (1 << 16), total)
                enc = np.arange(lo, hi, dtype=np.int64)
                g_bits = ((enc[:, None] >> shifts[None, :]) & 1).reshape(
                    hi - lo, k, nm)
                hits += int(union_over_g(g_bits, x_bits, member).sum())
            union_prob = hits / total
            mode = "exact"
        else:
            g_rng = np.random.default_rng((master_seed, 2, len(results)))
            hits = 0
            draws = trials
            for lo in range(0, trials, 1 << 14):
                b = min(1 << 14, trials - lo)
                g_bits = g_rng.integers(0, 2, size=(b, k, nm)).astype(np.int64)
                hits += int(union_over_g(g_bits, x_bits, member).sum())
            union_prob = hits / trials
            mode = "mc"

        lower = min(0.5, (2 ** k - 2) * alpha / 2.0)
        upper_tr = min(1.0, m_size * 2.0 ** (k - nm + 1))
        upper_pl = min(1.0, (2 ** k - 1) * alpha)
        results.append(UnionPairResult(
            x=tuple(int(s) for s in x_sym), y=tuple(int(t) for t in y),
            m_size=m_size, alpha=alpha, union_prob=union_prob,
            lower_decaen=lower, upper_truncated=upper_tr,
            upper_union=upper_pl,
            in_sandwich=lower <= union_prob <= upper_tr,
            mode=mode, draws=draws))

    return UnionBoundReport(k=k, nm=nm, pairs=tuple(results),
                            all_in_sandwich=all(r.in_sandwich for r in results),
                            master_seed=master_seed)
