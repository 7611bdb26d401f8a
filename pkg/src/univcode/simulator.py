"""Universal codes: assembly, first-match decoding and error estimation.

A code pairs a constant-composition codebook with per-input mixtures Q_x
and an output mixture Q_P.  Message i is decoded from y^n when
``log Q_{E(i)}(y^n) - log Q_P(y^n) >= n R1`` and no earlier codeword
qualifies; otherwise the output is an erasure, counted as an error.

When M_n is far too large to materialise, error probabilities are computed
for the random-coding ensemble (codebooks drawn uniformly without
replacement from the type class) by enumerating joint types; see
:func:`ensemble_error`.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp
from scipy.stats import norm

from . import kernels
from .channels import ChannelFamily, ChannelPoint, sample_sequence
from .combinatorics import Codebook, CompositionType, build_codebook, log_message_count, round_to_type, type_class_size
from .errors import CapacityError, DomainError
from .infomeasures import (V_FLOOR, RateParameters, dispersion, exponent_lower_bound, local_shift, mutual_information,
                           optimal_r1)
from .mixtures import (MixtureModel, PriorSpec, build_mixture, codeword_mixture_logdensity, count_strides,
                       count_vectors, log_multinomial_counts)

ERASURE = -1
EXACT_OUTPUT_CAP = 10 ** 6
EXPLICIT_M_CAP = 200_000
JOINT_TABLE_CAP = 5 * 10 ** 7
CHUNK = 1000
_DEFAULT_PRIOR = {"A": "continuous", "B": "grid-E", "C": "nested-F"}


# ---------------------------------------------------------------------------
# code assembly
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class UniversalCode:
    family: ChannelFamily
    P: CompositionType
    R: float
    R1: float
    log_M: float
    input_models: list
    output_model: MixtureModel
    codebook: Optional[Codebook] = None
    _tables: Optional[tuple] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.P.n

    @property
    def M(self):
        return self.codebook.M if self.codebook is not None else math.exp(self.log_M)

    @property
    def explicit(self) -> bool:
        return self.codebook is not None

    @property
    def threshold(self) -> float:
        return self.n * self.R1

    def decoder_tables(self):
        """Flat log-mixture tables for finite outputs (built once)."""
        if self._tables is None:
            fam = self.family
            if not fam.output.is_finite:
                raise DomainError("decoder tables need a finite output alphabet")
            K = fam.output.size
            parts, offsets, strides = [], [], []
            pos = 0
            for x, c in enumerate(self.P.counts):
                if c > 0:
                    tab, st = self.input_models[x].count_table(int(c))
                else:
                    tab, st = np.zeros(1), np.zeros(K, dtype=np.int64)
                parts.append(tab)
                offsets.append(pos)
                strides.append(st)
                pos += tab.size
            qp, qst = self.output_model.count_table(self.n)
            self._tables = (np.concatenate(parts), np.asarray(offsets, dtype=np.int64),
                            np.asarray(strides, dtype=np.int64), qp, qst)
        return self._tables


def _resolve_priors(family: ChannelFamily, priors):
    if priors is None:
        kind = _DEFAULT_PRIOR[family.tag]
        return PriorSpec(kind), PriorSpec(kind)
    if isinstance(priors, PriorSpec):
        return priors, priors
    w_x, w_P = priors
    return w_x, w_P


def assemble_code(family: ChannelFamily, P, rates: RateParameters, priors=None,
                  rng: Optional[np.random.Generator] = None, explicit: Optional[bool] = None,
                  M: Optional[int] = None, log_M: Optional[float] = None) -> UniversalCode:
    """Build Phi_{n,P,R,R1}.

    ``priors`` is one :class:`PriorSpec`, a pair (w_x, w_P), or None for the
    tag default.  ``explicit=None`` draws a codebook when M_n is at most
    ``EXPLICIT_M_CAP`` and otherwise keeps the code as a random-coding
    ensemble.  ``M``/``log_M`` override the codebook size.
    """
    if not isinstance(P, CompositionType):
        raise DomainError("P must be a CompositionType (use round_to_type)")
    if rates.R is None or rates.R1 is None:
        raise DomainError("need both R and R1")
    n = P.n
    if M is not None:
        log_M = math.log(M)
    elif log_M is None:
        log_M = log_message_count(n, rates.R)
    if log_M > type_class_size(P).log_size + 1e-9:
        raise CapacityError("the codebook does not fit in the type class")
    w_x, w_P = _resolve_priors(family, priors)
    inputs = [build_mixture(family, w_x, x, max(int(c), 1)) for x, c in enumerate(P.counts)]
    output = build_mixture(family, w_P, "output", n, P.distribution)
    code = UniversalCode(family, P, float(rates.R), float(rates.R1), float(log_M), inputs, output)
    if explicit is None:
        explicit = log_M <= math.log(EXPLICIT_M_CAP)
    if explicit:
        rng = np.random.default_rng() if rng is None else rng
        m = int(round(math.exp(log_M)))
        code.codebook = build_codebook(P, rates.R, rng, M=m)
    return code


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


def _require_explicit(code: UniversalCode):
    if code.codebook is None:
        raise DomainError("this code is a random-coding ensemble without an explicit codebook")


def scores(code: UniversalCode, y) -> np.ndarray:
    """log Q_{E(i)}(y) - log Q_P(y) for every codeword."""
    _require_explicit(code)
    y = np.asarray(y)
    qp = code.output_model.log_density(y)
    return np.array([codeword_mixture_logdensity(code.family, code.input_models, w, y) for w in code.codebook.words]) - qp


def decode_many(code: UniversalCode, ys) -> np.ndarray:
    """Vectorised first-match decoding; ERASURE (-1) when no codeword qualifies."""
    _require_explicit(code)
    if code.family.output.is_finite:
        ys = np.atleast_2d(np.asarray(ys, dtype=np.int64))
        if not math.isfinite(code.threshold):
            return np.full(ys.shape[0], ERASURE, dtype=np.int64)
        tab, off, st, qp, qst = code.decoder_tables()
        return kernels.first_match_decode(code.codebook.words, ys, tab, off, st, qp, qst, code.threshold)
    return np.array([decode(code, y) for y in ys], dtype=np.int64)


def decode(code: UniversalCode, y) -> int:
    """Smallest i whose score reaches n R1, else ERASURE.  Never sees the channel parameter."""
    _require_explicit(code)
    y = np.asarray(y)
    if y.shape[0] != code.n:
        raise DomainError(f"output sequence must have length {code.n}")
    if code.family.output.is_finite:
        return int(decode_many(code, y[None, :])[0])
    if not math.isfinite(code.threshold):
        return ERASURE
    qp = code.output_model.log_density(y)
    for i, w in enumerate(code.codebook.words):
        if codeword_mixture_logdensity(code.family, code.input_models, w, y) - qp >= code.threshold:
            return i
    return ERASURE


def ml_decode_baseline(code: UniversalCode, point: ChannelPoint, y) -> int:
    """Informed decoder argmax_i log W_theta^n(y | E(i)), ties to the lowest index."""
    _require_explicit(code)
    y = np.asarray(y)
    words = code.codebook.words
    if code.family.output.is_finite:
        logW = np.log(point.transition_matrix())
        ll = logW[words, y[None, :]].sum(axis=1)
    else:
        per_x = np.stack([point.component(x).log_density(point.eta(x), y) for x in range(code.family.d)])
        ll = per_x[words, np.arange(y.shape[0])[None, :]].sum(axis=1)
    return int(np.argmax(ll))


# ---------------------------------------------------------------------------
# error estimates
# ---------------------------------------------------------------------------


@dataclass
class ErrorEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    trials: int
    mode: str
    errors: int = 0
    erasures: int = 0
    log_estimate: Optional[float] = None

    def __post_init__(self):
        if self.log_estimate is None:
            self.log_estimate = math.log(self.estimate) if self.estimate > 0 else -math.inf


def wilson_interval(errors: int, trials: int, level: float = 0.95):
    ci = stats.binomtest(int(errors), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _chunk_seed(seed: int, n: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(n), int(chunk)]))


def _chunks(trials: int):
    return [(c, min(CHUNK, trials - c * CHUNK)) for c in range((trials + CHUNK - 1) // CHUNK)]


def _map(fn, jobs, workers):
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _sample_outputs(point: ChannelPoint, words: np.ndarray, rng) -> np.ndarray:
    """One output sequence per row of ``words``."""
    fam = point.family
    if fam.output.is_finite:
        cdf = np.cumsum(point.transition_matrix(), axis=1)
        u = rng.random(words.shape)
        return np.minimum((u[..., None] >= cdf[words][..., :-1]).sum(axis=-1), fam.output.size - 1)
    return np.stack([sample_sequence(point, w, rng) for w in words])


def _explicit_chunk(code, point, seed, chunk, size):
    rng = _chunk_seed(seed, code.n, chunk)
    msgs = rng.integers(code.codebook.M, size=size)
    ys = _sample_outputs(point, code.codebook.words[msgs], rng)
    dec = decode_many(code, ys)
    return int(np.sum(dec != msgs)), int(np.sum(dec == ERASURE))


def _all_outputs(K: int, n: int) -> np.ndarray:
    return np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64).reshape(-1, n)


def decision_masses(code: UniversalCode, point: ChannelPoint, message: int) -> np.ndarray:
    """Exact W^n(D_j | E(message)) for j = 0..M-1 followed by the erasure mass."""
    _require_explicit(code)
    fam = code.family
    if not fam.output.is_finite or fam.output.size ** code.n > EXACT_OUTPUT_CAP:
        raise CapacityError("exact enumeration needs a finite alphabet with |Y|^n <= 1e6")
    ys = _all_outputs(fam.output.size, code.n)
    dec = decode_many(code, ys)
    logW = np.log(point.transition_matrix())
    word = code.codebook.words[message]
    prob = np.exp(logW[word[None, :], ys].sum(axis=1))
    masses = np.bincount(np.where(dec == ERASURE, code.codebook.M, dec), weights=prob,
                         minlength=code.codebook.M + 1)
    return masses


def estimate_error(code: UniversalCode, point: ChannelPoint, trials: Optional[int] = None, exact: bool = False,
                   seed: int = 0, workers: Optional[int] = 1) -> ErrorEstimate:
    """Average error probability e_theta(Phi_n) with uniform messages; erasures count as errors.

    Explicit codes: ``exact`` enumerates Y^n (|Y|^n <= 1e6), otherwise
    ``trials`` Monte Carlo draws.  Ensemble codes delegate to
    :func:`ensemble_error`.
    """
    if point.family is not code.family:
        raise DomainError("point and code belong to different families")
    if not code.explicit:
        return ensemble_error(code, point, trials=None if exact else trials, seed=seed, workers=workers)
    M = code.codebook.M
    if M == 1:
        return ErrorEstimate(0.0, 0.0, 0.0, 0 if exact else int(trials or 0), "exact" if exact else "monte-carlo")
    if exact:
        fam = code.family
        if not fam.output.is_finite or fam.output.size ** code.n > EXACT_OUTPUT_CAP:
            raise CapacityError("exact mode needs a finite alphabet with |Y|^n <= 1e6")
        ys = _all_outputs(fam.output.size, code.n)
        dec = decode_many(code, ys)
        logW = np.log(point.transition_matrix())
        words = code.codebook.words
        correct = 0.0
        erased = 0.0
        for i in range(M):
            prob = np.exp(logW[words[i][None, :], ys].sum(axis=1))
            correct += prob[dec == i].sum()
            erased += prob[dec == ERASURE].sum()
        e = float(min(1.0, max(0.0, 1.0 - correct / M)))
        return ErrorEstimate(e, e, e, 0, "exact", erasures=0)
    if not trials or trials < 1:
        raise DomainError("Monte Carlo mode needs trials >= 1")
    res = _map(_explicit_chunk, [(code, point, seed, c, size) for c, size in _chunks(trials)], workers)
    errs = sum(r[0] for r in res)
    eras = sum(r[1] for r in res)
    lo, hi = wilson_interval(errs, trials)
    return ErrorEstimate(errs / trials, lo, hi, trials, "monte-carlo", errs, eras)


# ---------------------------------------------------------------------------
# random-coding ensemble
# ---------------------------------------------------------------------------


def _block_count_vectors(counts, K):
    return [count_vectors(int(c), K, cap=JOINT_TABLE_CAP) for c in counts]


@dataclass
class _EnsembleTables:
    log_prob: np.ndarray     # log P(own joint table) under the true channel
    passes: np.ndarray       # own codeword clears the threshold
    cidx: np.ndarray         # flat index of the output counts
    log_k_all: np.ndarray    # log #{x' in T_P passing} per output-count index
    log_B: float             # log(|T_P| - 1)
    B_int: Optional[int]     # |T_P| - 1 when exactly representable
    block_tables: list = field(default_factory=list)


def _ensemble_tables(code: UniversalCode, point: ChannelPoint) -> _EnsembleTables:
    fam = code.family
    if not fam.output.is_finite:
        raise DomainError("ensemble evaluation needs a finite output alphabet")
    K = fam.output.size
    n = code.n
    counts = [int(c) for c in code.P.counts]
    blocks = _block_count_vectors(counts, K)
    total = int(np.prod([b.shape[0] for b in blocks]))
    if total > JOINT_TABLE_CAP:
        raise CapacityError(f"{total} joint types exceed the cap {JOINT_TABLE_CAP}")
    logW = np.log(point.transition_matrix())
    thr = code.threshold
    qp_tab, qst = code.output_model.count_table(n)
    # per-block pieces: own log-probability, mixture score, count vector
    lp_blocks, sc_blocks, lc_blocks = [], [], []
    for x, cv in enumerate(blocks):
        lp_blocks.append(log_multinomial_counts(cv) + (cv * logW[x]).sum(axis=1) if counts[x] else np.zeros(1))
        if counts[x]:
            tab, st = code.input_models[x].count_table(counts[x])
            sc_blocks.append(tab[cv @ st])
        else:
            sc_blocks.append(np.zeros(1))
        lc_blocks.append(gammaln(cv + 1.0).sum(axis=1))
    # combine blocks (outer sum)
    lp = lp_blocks[0]
    sc = sc_blocks[0]
    lc = lc_blocks[0]
    cvec = blocks[0]
    for x in range(1, len(blocks)):
        lp = (lp[:, None] + lp_blocks[x][None, :]).ravel()
        sc = (sc[:, None] + sc_blocks[x][None, :]).ravel()
        lc = (lc[:, None] + lc_blocks[x][None, :]).ravel()
        cvec = (cvec[:, None, :] + blocks[x][None, :, :]).reshape(-1, K)
    cidx = cvec @ qst
    score = sc - qp_tab[cidx]
    passes = score >= thr
    # x' with joint table t given y: prod_y c_y! / prod_{x,y} t_xy!
    log_cnt = gammaln(cvec + 1.0).sum(axis=1) - lc
    log_k_all = np.full(qp_tab.size, -np.inf)
    if passes.any():
        idx = cidx[passes]
        vals = log_cnt[passes]
        order = np.argsort(idx, kind="stable")
        idx, vals = idx[order], vals[order]
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        mx = np.maximum.reduceat(vals, starts)
        rep = np.repeat(mx, np.diff(np.r_[starts, idx.size]))
        sums = np.add.reduceat(np.exp(vals - rep), starts)
        log_k_all[idx[starts]] = mx + np.log(sums)
    ts = type_class_size(code.P)
    N = ts.size
    if N is not None and N - 1 < 2 ** 53:
        B_int = int(N) - 1
        log_B = math.log(B_int) if B_int > 0 else -math.inf
    else:
        B_int = None
        log_B = ts.log_size + math.log1p(-math.exp(-ts.log_size))
    return _EnsembleTables(lp, passes, cidx, log_k_all, log_B, B_int)


def _log_competitor_error(log_K: float, tabs: _EnsembleTables, log_M: float) -> float:
    """log of 1 - (1/M) sum_{J<M} P(none of J earlier codewords passes)."""
    if log_K == -math.inf:
        return -math.inf
    if tabs.B_int is not None and log_M < math.log(1e4) + 1e-9:
        B = tabs.B_int
        K = int(round(math.exp(log_K)))
        M = int(round(math.exp(log_M)))
        A = B - K
        r, acc = 1.0, 0.0
        for J in range(M):
            acc += 1.0 - r
            r *= max(A - J, 0) / (B - J) if B - J > 0 else 0.0
        return math.log(acc / M) if acc > 0 else -math.inf
    log_p = min(0.0, log_K - tabs.log_B)
    x = log_M + log_p
    if x < math.log(1e-3):
        M1 = math.log(math.expm1(log_M)) if log_M < 30 else log_M
        p = math.exp(log_p)
        return M1 - math.log(2.0) + log_p + math.log1p(-(math.exp(x) - 2.0 * p) / 3.0)
    p = math.exp(log_p)
    lnl = math.log(-math.log1p(-p)) if p > 1e-8 else log_p + math.log1p(0.5 * p)
    u = math.exp(min(log_M + lnl, 700.0))
    q = -math.expm1(-u)
    return math.log1p(-q * math.exp(-x))


def _log_comp_by_index(tabs: _EnsembleTables, log_M: float) -> np.ndarray:
    """log competitor-error for every output-count index (own codeword passing)."""
    out = np.full(tabs.log_k_all.size, -np.inf)
    for i in np.flatnonzero(np.isfinite(tabs.log_k_all)):
        lk = tabs.log_k_all[i]
        log_K = lk + math.log1p(-math.exp(-lk)) if lk > 0 else -math.inf  # exclude the sent word
        out[i] = _log_competitor_error(log_K, tabs, log_M)
    return out


def _ensemble_mc_chunk(tabs, comp_err, seed, n, chunk, size):
    rng = _chunk_seed(seed, n, chunk)
    prob = np.exp(tabs.log_prob - logsumexp(tabs.log_prob))
    draws = rng.choice(prob.size, size=size, p=prob)
    own_fail = ~tabs.passes[draws]
    p_comp = np.exp(comp_err[tabs.cidx[draws]])
    u = rng.random(size)
    err = own_fail | (u < p_comp)
    return int(err.sum()), int(own_fail.sum())


def ensemble_error(code: UniversalCode, point: ChannelPoint, trials: Optional[int] = None, seed: int = 0,
                   workers: Optional[int] = 1) -> ErrorEstimate:
    """Error probability averaged over the random constant-composition ensemble.

    Exact mode (``trials=None``) sums over every own joint type.  With
    ``trials`` it samples the own joint type, then the decoder outcome given
    the exact number of passing competitors.  Competitors are drawn without
    replacement when |T_P| is exactly representable and M_n <= 1e4;
    otherwise with replacement, which differs by O(M_n / |T_P|).
    """
    tabs = _ensemble_tables(code, point)
    if not math.isfinite(code.threshold):
        return ErrorEstimate(1.0, 1.0, 1.0, trials or 0, "ensemble-exact" if trials is None else "ensemble-monte-carlo")
    comp_err = _log_comp_by_index(tabs, code.log_M)
    if trials is None:
        terms = np.where(tabs.passes, tabs.log_prob + comp_err[tabs.cidx], tabs.log_prob)
        log_e = float(min(0.0, logsumexp(terms)))
        e = math.exp(log_e)
        return ErrorEstimate(e, e, e, 0, "ensemble-exact", log_estimate=log_e)
    jobs = [(tabs, comp_err, seed, code.n, c, size) for c, size in _chunks(trials)]
    res = _map(_ensemble_mc_chunk, jobs, workers)
    errs = sum(r[0] for r in res)
    lo, hi = wilson_interval(errs, trials)
    return ErrorEstimate(errs / trials, lo, hi, trials, "ensemble-monte-carlo", errs, sum(r[1] for r in res))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class ExponentFit:
    exponent: float
    std_error: float
    bound: float
    R1: float
    passed: bool
    unusable: bool
    rows: list


def fit_exponent(family: ChannelFamily, theta, P, rates: RateParameters, n_list: Sequence[int],
                 trials: Optional[int] = None, seed: int = 0, priors=None, workers: Optional[int] = 1,
                 mode: str = "auto") -> ExponentFit:
    """Empirical error exponents against the guaranteed bound.

    -(1/n) log e_n is regressed on 1/n; the intercept estimates the limit
    exponent.  R1 defaults to the optimal threshold.  Zero error counts are
    replaced by 1/(trials+1) and flag the fit as unusable.  ``mode`` is
    ``exact`` (ensemble sum), ``enumerate`` (one explicit codebook per n,
    exact over Y^n), ``monte-carlo`` or ``auto`` (exact when ``trials`` is
    None).
    """
    point = theta if isinstance(theta, ChannelPoint) else family.point(theta)
    ns = [int(n) for n in n_list]
    if len(ns) < 4:
        raise DomainError("need at least 4 block lengths")
    Pdist = np.asarray(getattr(P, "distribution", P), float)
    R = rates.R
    R1 = rates.R1 if rates.R1 is not None else optimal_r1(Pdist, point, R)[0]
    if R1 <= R:
        bound = 0.0
    else:
        bound = exponent_lower_bound(Pdist, point, RateParameters(R=R, R1=R1)).bound
    if mode == "auto":
        mode = "exact" if trials is None else "monte-carlo"
    rows, unusable = [], False
    for n in ns:
        comp = round_to_type(Pdist, n)
        if mode == "enumerate":
            rng = np.random.default_rng([seed, n])
            code = assemble_code(family, comp, RateParameters(R=R, R1=R1), priors, rng=rng, explicit=True)
            est = estimate_error(code, point, exact=True)
        elif mode == "exact":
            code = assemble_code(family, comp, RateParameters(R=R, R1=R1), priors, explicit=False)
            est = ensemble_error(code, point)
        else:
            code = assemble_code(family, comp, RateParameters(R=R, R1=R1), priors, explicit=False)
            est = estimate_error(code, point, trials=trials, seed=seed, workers=workers)
        log_e = est.log_estimate
        if est.estimate == 0 and mode == "monte-carlo":
            unusable = True
            log_e = -math.log(trials + 1)
        rows.append({"n": n, "log_M": code.log_M, "R1": R1, "error": est.estimate, "log_error": log_e,
                     "ci_low": est.ci_low, "ci_high": est.ci_high, "bound": bound, "mode": est.mode})
    x = np.array([1.0 / r["n"] for r in rows])
    y = np.array([-r["log_error"] / r["n"] for r in rows])
    res = stats.linregress(x, y)
    exponent, se = float(res.intercept), float(res.intercept_stderr)
    return ExponentFit(exponent, se, bound, R1, bool(exponent >= bound - 2 * se), unusable, rows)


@dataclass
class SecondOrderExperiment:
    R1_star: float
    R2_star: float
    theta1: np.ndarray
    theta2: np.ndarray
    V: float
    shift: float
    predicted: float
    rows: list


def second_order_parameters(n: int, R1_star: float, R2_star: float):
    """(log M_n, threshold rate) at block length n."""
    expo = n * R1_star + math.sqrt(n) * R2_star - n ** 0.25
    log_M = expo if expo >= 30 else math.log(max(2, math.floor(math.exp(expo) + 1e-9)))
    return log_M, R1_star + R2_star / math.sqrt(n) + n ** (-2.0 / 3.0)


def run_second_order(family: ChannelFamily, theta1, theta2, P, n_list: Sequence[int], epsilon: Optional[float] = None,
                     R2_star: Optional[float] = None, R1_star: Optional[float] = None, trials: Optional[int] = None,
                     seed: int = 0, priors=None, workers: Optional[int] = 1) -> SecondOrderExperiment:
    """Errors of second-order codes on the local channels theta1 + theta2 / sqrt(n).

    ``trials=None`` gives exact ensemble errors; otherwise Monte Carlo.
    """
    theta1 = np.asarray(theta1, float)
    theta2 = np.zeros_like(theta1) if theta2 is None else np.asarray(theta2, float)
    Pdist = np.asarray(getattr(P, "distribution", P), float)
    p1 = family.point(theta1)
    I = mutual_information(Pdist, p1)
    V = dispersion(Pdist, p1)
    if not V > V_FLOOR:
        raise DomainError("second-order codes need V(P, W) > 0")
    if R1_star is None:
        R1_star = I
    elif abs(R1_star - I) > 1e-6:
        raise DomainError(f"R1*={R1_star} differs from I(P, W_theta1)={I}")
    if (epsilon is None) == (R2_star is None):
        raise DomainError("give exactly one of epsilon and R2*")
    shift = local_shift(Pdist, family, theta1, theta2) if np.any(theta2 != 0) else 0.0
    if R2_star is None:
        R2_star = math.sqrt(V) * float(norm.ppf(epsilon)) + shift
    predicted = float(norm.cdf((R2_star - shift) / math.sqrt(V)))
    rows = []
    for n in n_list:
        n = int(n)
        comp = round_to_type(Pdist, n)
        log_M, R1 = second_order_parameters(n, R1_star, R2_star)
        point = family.point(theta1 + theta2 / math.sqrt(n))
        code = assemble_code(family, comp, RateParameters(R=R1_star, R1=R1), priors, explicit=False, log_M=log_M)
        est = ensemble_error(code, point, trials=trials, seed=seed, workers=workers)
        rows.append({"n": n, "log_M": log_M, "R1": R1, "error": est.estimate, "ci_low": est.ci_low,
                     "ci_high": est.ci_high, "predicted": predicted, "mode": est.mode})
    return SecondOrderExperiment(float(R1_star), float(R2_star), theta1, theta2, V, shift, predicted, rows)
