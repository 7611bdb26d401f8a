"""Scalar information quantities and the closed-form coding bounds.

All logarithms are natural; rates are in nats per channel use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp
from scipy.stats import norm

from .channels import ChannelFamily, ChannelPoint
from .errors import DesignError, DivergenceUndefined, DomainError, QuadratureError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# divergences between two densities
# ---------------------------------------------------------------------------


# dispersions below this are round-off from identical rows
V_FLOOR = 1e-15


def _log_values(p, q, space):
    if space is None:
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        if p.shape != q.shape:
            raise DomainError("P and Q must share the finite alphabet")
        support = p > 0
        with np.errstate(divide="ignore"):
            return p[support], np.log(p[support]), np.log(q[support])
    nodes, weights = space
    weights = np.asarray(weights, float)
    return weights, np.asarray(p(nodes), float), np.asarray(q(nodes), float)


def kl_divergence(p, q, space=None) -> float:
    """D(P||Q).

    With ``space=None``, ``p`` and ``q`` are probability vectors.  Otherwise
    ``p`` and ``q`` are log-density callables and ``space`` is an expectation
    rule ``(nodes, weights)`` under P (e.g. Gauss-Hermite nodes of P).
    Returns ``inf`` when Q vanishes somewhere on P's support.
    """
    w, lp, lq = _log_values(p, q, space)
    if np.any(np.isneginf(lq)):
        return math.inf
    return float(np.sum(w * (lp - lq)))


def renyi_divergence(p, q, s: float, space=None) -> float:
    """D_{1+s}(P||Q) = (1/s) log E_P[(P/Q)^s] for s > -1, s != 0."""
    if s <= -1 or s == 0:
        raise DomainError("Renyi order needs s > -1 and s != 0")
    w, lp, lq = _log_values(p, q, space)
    if np.any(np.isneginf(lq)):
        if s > 0:
            return math.inf
        lq = np.where(np.isneginf(lq), -np.inf, lq)
    with np.errstate(over="ignore", invalid="ignore"):
        val = logsumexp(s * (lp - lq), b=w)
    if not np.isfinite(val):
        raise DivergenceUndefined("the Renyi expectation does not exist")
    return float(val / s)


# ---------------------------------------------------------------------------
# channel quantities
# ---------------------------------------------------------------------------


def _input_distribution(P, d: int) -> np.ndarray:
    p = np.asarray(getattr(P, "distribution", P), float)
    if p.shape != (d,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise DomainError(f"P must be a probability vector over {d} inputs")
    return p / p.sum()


class ChannelTable:
    """Quadrature tables for one (P, W_theta) pair.

    For every input x with P(x) > 0 it stores an expectation rule under
    W_{theta,x} and the log-densities of every input's law at those nodes, so
    that I, V and the Gallager-type integral reuse one set of evaluations.
    """

    def __init__(self, P, point: ChannelPoint, order: int = 64):
        fam = point.family
        self.point = point
        self.P = _input_distribution(P, fam.d)
        self.order = order
        self.finite = fam.output.is_finite
        with np.errstate(divide="ignore"):
            self.logP = np.log(self.P)
        if self.finite:
            self.W = point.transition_matrix()
            with np.errstate(divide="ignore"):
                self.logW = np.log(self.W)
            self.logWP = logsumexp(self.logW + self.logP[:, None], axis=0)
        else:
            self.blocks = []
            for x in np.flatnonzero(self.P > 0):
                nodes, wts = point.component(x).expectation_rule(point.eta(x), order)
                logs = np.array([point.component(z).log_density(point.eta(z), nodes) for z in range(fam.d)])
                self.blocks.append((int(x), np.asarray(wts, float), logs))

    # --- helpers -----------------------------------------------------------

    def _density_terms(self):
        """Yield (P(x), weights under W_x, log W_x, log W.P) per active input."""
        if self.finite:
            for x in np.flatnonzero(self.P > 0):
                yield self.P[x], self.W[x], self.logW[x], self.logWP
        else:
            for x, wts, logs in self.blocks:
                yield self.P[x], wts, logs[x], logsumexp(logs + self.logP[:, None], axis=0)

    # --- quantities --------------------------------------------------------

    def mutual_information(self) -> float:
        total = 0.0
        for px, wts, lw, lwp in self._density_terms():
            mask = wts > 0
            total += px * float(np.sum(wts[mask] * (lw[mask] - lwp[mask])))
        return total

    def dispersion(self) -> float:
        I = self.mutual_information()
        total = 0.0
        for px, wts, lw, lwp in self._density_terms():
            mask = wts > 0
            total += px * float(np.sum(wts[mask] * (lw[mask] - lwp[mask] - I) ** 2))
        return total

    def _log_integral(self, s: float) -> float:
        """log of int (sum_x P(x) W_x(y)^{1-s})^{1/(1-s)} dy for s in (0, 1)."""
        t = 1.0 - s
        if self.finite:
            with np.errstate(invalid="ignore"):
                inner = logsumexp(self.logP[:, None] + t * self.logW, axis=0)
            return float(logsumexp(inner / t))
        pieces = []
        for x, wts, logs in self.blocks:
            lwp = logsumexp(logs + self.logP[:, None], axis=0)
            lf = logsumexp(self.logP[:, None] + t * logs, axis=0) / t
            pieces.append(math.log(self.P[x]) + logsumexp(lf - lwp, b=wts))
        return float(logsumexp(pieces))

    def s_info(self, s: float) -> float:
        """s I_{1-s}(P, W) for s in [0, 1]."""
        if not 0.0 <= s <= 1.0:
            raise DomainError("s must lie in [0, 1]")
        if s == 0.0:
            return 0.0
        if s == 1.0:
            return self._s_info_at_one()
        return -(1.0 - s) * self._log_integral(s)

    def _s_info_at_one(self) -> float:
        # limit s -> 1: -max_y log P({x : W_x(y) > 0})
        if not self.finite:
            return 0.0
        reach = (self.W > 0).T.astype(float) @ self.P
        return float(-math.log(reach.max())) + 0.0


def _table(P, point, order=64) -> ChannelTable:
    return ChannelTable(P, point, order)


def gallager_s_info(P, point: ChannelPoint, s: float, order: int = 64, check: bool = True) -> float:
    """s I_{1-s}(P, W_theta) = -(1-s) log int (sum_x P(x) W_x(y)^{1-s})^{1/(1-s)} dy."""
    tab = _table(P, point, order)
    val = tab.s_info(s)
    if not math.isfinite(val):
        raise QuadratureError(f"non-finite s-information at s={s}")
    if check and not tab.finite and 0 < s < 1:
        coarse = _table(P, point, max(8, order // 2)).s_info(s)
        if abs(coarse - val) > 1e-8 * max(1.0, abs(val)):
            val = _adaptive_s_info(tab, s)
    return val


def _adaptive_s_info(tab: ChannelTable, s: float) -> float:
    point = tab.point
    fam = point.family
    if fam.output.kind != "real":
        raise QuadratureError("Gauss-Hermite rules disagree and no adaptive fallback exists for vector output")
    t = 1.0 - s
    act = [x for x in range(fam.d) if tab.P[x] > 0]

    def integrand(y):
        logs = np.array([point.component(x).log_density(point.eta(x), y) for x in act])
        return math.exp(logsumexp(np.log(tab.P[act]) + t * logs) / t)

    val, err = integrate.quad(integrand, -np.inf, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)
    if not (val > 0 and err < 1e-8 * val):
        raise QuadratureError("adaptive quadrature did not converge")
    return -t * math.log(val)


def mutual_information(P, point: ChannelPoint, order: int = 64) -> float:
    """I(P, W_theta) = sum_x P(x) D(W_x || W.P)."""
    return _table(P, point, order).mutual_information()


def dispersion(P, point: ChannelPoint, order: int = 64) -> float:
    """V(P, W_theta): P-averaged variance of the information density."""
    return _table(P, point, order).dispersion()


# ---------------------------------------------------------------------------
# one-dimensional maximisation
# ---------------------------------------------------------------------------


def golden_max(f: Callable[[float], float], a: float = 0.0, b: float = 1.0, tol: float = 1e-8):
    """Maximise a unimodal function on [a, b]; returns (argmax, max).

    The endpoints are compared with the interior optimum so boundary maxima
    are returned exactly.
    """
    c = b - GOLDEN * (b - a)
    e = a + GOLDEN * (b - a)
    fc, fe = f(c), f(e)
    while b - a > tol:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + GOLDEN * (b - a)
            fe = f(e)
    best_x, best_f = (c, fc) if fc >= fe else (e, fe)
    for x0, f0 in ((a, f(a)), (b, f(b))):
        if f0 > best_f:
            best_x, best_f = x0, f0
    return best_x, best_f


# ---------------------------------------------------------------------------
# exponent bounds
# ---------------------------------------------------------------------------


@dataclass
class RateParameters:
    """Rates in nats: code rate R, decoder threshold R1, second-order pair (R1*, R2*)."""

    R: Optional[float] = None
    R1: Optional[float] = None
    R1_star: Optional[float] = None
    R2_star: Optional[float] = None

    def __post_init__(self):
        for name in ("R", "R1", "R1_star", "R2_star"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v) and not (name == "R1" and v == math.inf):
                raise DomainError(f"rate {name} must be finite")


@dataclass
class ExponentReport:
    bound: float
    s_star: float
    R1: float
    R: float
    table: list = field(default_factory=list)


def _as_points(points) -> list:
    if isinstance(points, ChannelPoint):
        return [points]
    points = list(points)
    if not points:
        raise DomainError("the parameter grid is empty")
    return points


def exponent_lower_bound(P, points, rates: RateParameters, order: int = 64, tol: float = 1e-8) -> ExponentReport:
    """min(max_{s in [0,1]} (s I_{1-s} - s R1), R1 - R), floored at 0.

    ``points`` is one channel point or a finite grid; for a grid the
    worst-case (infimum) bound is reported along with the per-point table.
    """
    if rates.R is None or rates.R1 is None:
        raise DomainError("need both R and R1")
    if not rates.R1 > rates.R:
        raise DomainError("the exponent bound requires R1 > R")
    rows = []
    for pt in _as_points(points):
        tab = _table(P, pt, order)
        s_star, inner = golden_max(lambda s: tab.s_info(s) - s * rates.R1, 0.0, 1.0, tol)
        inner = max(inner, 0.0)
        bound = max(0.0, min(inner, rates.R1 - rates.R))
        rows.append({"theta": pt.theta.tolist(), "inner": inner, "s_star": s_star, "bound": bound})
    worst = min(rows, key=lambda r: r["bound"])
    return ExponentReport(worst["bound"], worst["s_star"], rates.R1, rates.R, rows)


def _r1_objective(tab: ChannelTable, R: float, tol: float):
    return golden_max(lambda s: (tab.s_info(s) - s * R) / (1.0 + s), 0.0, 1.0, tol)


def optimal_r1_report(P, points, R: float, order: int = 64, tol: float = 1e-8) -> ExponentReport:
    """Per-point max_s (s I_{1-s} - s R)/(1+s), its infimum over the grid and
    the threshold R1 = R + infimum attaining the max-min exponent."""
    rows = []
    for pt in _as_points(points):
        tab = _table(P, pt, order)
        I = tab.mutual_information()
        if I <= R:
            s_star, val = 0.0, 0.0
        else:
            s_star, val = _r1_objective(tab, R, tol)
            val = max(val, 0.0)
        rows.append({"theta": pt.theta.tolist(), "I": I, "s_star": s_star, "bound": val})
    worst = min(rows, key=lambda r: r["bound"])
    return ExponentReport(worst["bound"], worst["s_star"], R + worst["bound"], R, rows)


def optimal_r1(P, points, R: float, order: int = 64, tol: float = 1e-8):
    """Return (R1, bound) with bound = inf_theta max_s (s I_{1-s} - s R)/(1+s)."""
    rep = optimal_r1_report(P, points, R, order, tol)
    return rep.R1, rep.bound


def gallager_exponent(P, point: ChannelPoint, R: float, order: int = 64) -> float:
    """Comparison line max_s (s I_{1-s} - s R)/(1-s); not achieved by the universal decoder."""
    tab = _table(P, point, order)
    _, val = golden_max(lambda s: (tab.s_info(s) - s * R) / (1.0 - s), 0.0, 1.0 - 1e-6)
    return max(val, 0.0)


@dataclass
class DesignResult:
    method: str
    P: np.ndarray
    R1: float
    bound: float
    candidates: list


def compound_design(family: ChannelFamily, points, R: float, method: str, candidates, order: int = 64) -> DesignResult:
    """Choose an input distribution and threshold for a compound set of channels.

    ``M1``: maximise the worst-case mutual information and take R1 at the
    midpoint of (R, inf I).  ``M2``: maximise the worst-case
    max_s (s I_{1-s} - s R)/(1+s) and take R1 from :func:`optimal_r1`.
    """
    pts = _as_points(points)
    cands = [np.asarray(getattr(c, "distribution", c), float) for c in candidates]
    if not cands:
        raise DomainError("no input-distribution candidates")
    rows = []
    if method == "M1":
        for P in cands:
            worst_I = min(mutual_information(P, pt, order) for pt in pts)
            rows.append({"P": P.tolist(), "worst_I": worst_I})
        best = max(range(len(cands)), key=lambda i: rows[i]["worst_I"])
        worst_I = rows[best]["worst_I"]
        if worst_I <= R:
            raise DesignError(f"R={R} is not below the worst-case mutual information {worst_I}")
        R1 = 0.5 * (R + worst_I)
        rep = exponent_lower_bound(cands[best], pts, RateParameters(R=R, R1=R1), order)
        return DesignResult("M1", cands[best], R1, rep.bound, rows)
    if method == "M2":
        for P in cands:
            rep = optimal_r1_report(P, pts, R, order)
            rows.append({"P": P.tolist(), "bound": rep.bound, "R1": rep.R1})
        best = max(range(len(cands)), key=lambda i: rows[i]["bound"])
        if rows[best]["bound"] <= 0:
            raise DesignError("no candidate achieves a positive guaranteed exponent")
        return DesignResult("M2", cands[best], rows[best]["R1"], rows[best]["bound"], rows)
    raise DomainError(f"unknown design method {method!r}")


# ---------------------------------------------------------------------------
# second order
# ---------------------------------------------------------------------------


@dataclass
class SecondOrderReport:
    I: float
    V: float
    epsilon: float
    R1_star: float
    R2_star: float
    shift: Optional[float] = None


def second_order_bound(P, point: ChannelPoint, R2_star: float, R1_star: Optional[float] = None,
                       shift: float = 0.0, tol: float = 1e-9, order: int = 64) -> SecondOrderReport:
    """Limit error bound Phi((R2* - shift)/sqrt(V)) at I = R1*; 0 when I > R1*.

    Below the first-order rate (I < R1*) the bound is the trivial 1.
    ``shift`` is the local first-order shift f(theta_2) (0 for a fixed channel).
    """
    tab = _table(P, point, order)
    I = tab.mutual_information()
    V = tab.dispersion()
    R1s = I if R1_star is None else float(R1_star)
    if I > R1s + tol:
        eps = 0.0
    elif I < R1s - tol:
        eps = 1.0
    else:
        if not V > V_FLOOR:
            raise DomainError("the Gaussian bound needs V(P, W) > 0")
        eps = float(norm.cdf((R2_star - shift) / math.sqrt(V)))
    return SecondOrderReport(I, V, eps, R1s, float(R2_star), shift)


def second_order_rate(P, point: ChannelPoint, epsilon: float, shift: float = 0.0, order: int = 64) -> float:
    """Inverse of the Gaussian bound: R2* = sqrt(V) Phi^{-1}(eps) + shift."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    V = dispersion(P, point, order)
    if not V > V_FLOOR:
        raise DomainError("the Gaussian bound needs V(P, W) > 0")
    return math.sqrt(V) * float(norm.ppf(epsilon)) + shift


def mutual_information_gradient(P, family: ChannelFamily, theta, order: int = 64) -> np.ndarray:
    """Central-difference gradient of theta -> I(P, W_theta), step 1e-4 (1 + |theta_i|)."""
    theta = np.asarray(theta, float)
    if not family.is_interior(theta):
        raise DomainError("the gradient needs theta in the interior of the box")
    h = 1e-4 * (1.0 + np.abs(theta))
    if np.any(theta - h < family.lower) or np.any(theta + h > family.upper):
        raise DomainError("theta is too close to the boundary for central differences")
    grad = np.empty(theta.size)
    for i in range(theta.size):
        e = np.zeros(theta.size)
        e[i] = h[i]
        grad[i] = (mutual_information(P, family.point(theta + e), order)
                   - mutual_information(P, family.point(theta - e), order)) / (2 * h[i])
    return grad


def local_shift(P, family: ChannelFamily, theta1, theta2, order: int = 64) -> float:
    """f(theta2) = grad_theta I(P, W_theta)|_{theta1} . theta2."""
    grad = mutual_information_gradient(P, family, theta1, order)
    return float(grad @ np.asarray(theta2, float))
