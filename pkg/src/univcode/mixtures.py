"""Bayes mixtures over a channel family, evaluated on output sequences.

A mixture is a finite weighted set of parameter nodes (quadrature nodes, a
lattice, nested lattices or explicit atoms) or, for finite outputs, a
conjugate uniform (Dirichlet) prior with a closed form.  Evaluation goes
through sufficient statistics: for an exponential-family block the
log-likelihood at node j is ``A . B[j]`` with ``A = (sum g(y_i), n)`` and
``B[j] = (eta_j, -phi(eta_j))``, so a whole mixture is one
:func:`kernels.logsumexp_affine` call.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from . import kernels
from .channels import ChannelFamily, ChannelPoint, DiscreteComponent
from .errors import CapacityError, DomainError

KINDS = ("continuous", "dirichlet", "grid-E", "nested-F", "atoms")
_ALLOWED = {
    "A": {"continuous", "dirichlet", "grid-E", "atoms"},
    "B": {"grid-E", "atoms"},
    "C": {"nested-F", "atoms"},
}
EXACT_COUNT_CAP = 2_000_000


@dataclass(frozen=True)
class PriorSpec:
    """Prior over the parameter box.

    ``continuous``: uniform density, composite Gauss-Legendre with
    ``nodes_per_panel`` nodes on ``panels`` panels per axis (auto-sized from
    n when ``panels`` is None).  ``dirichlet``: uniform on the probability
    simplex (finite outputs only).  ``grid-E``: the lattice
    lower + (1/sqrt n) Z^k inside the box, equal weights.  ``nested-F``:
    lattices on the family's nested boxes with shell weights 6/(pi^2 i^2).
    ``atoms``: explicit full-parameter points with weights.
    """

    kind: str
    nodes_per_panel: int = 16
    panels: Optional[int] = None
    shells: Optional[int] = None
    atoms: Optional[tuple] = None
    atom_weights: Optional[tuple] = None
    max_nodes: int = 4_000_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown prior kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "atoms":
            if self.atoms is None or len(self.atoms) == 0:
                raise DomainError("atoms prior needs at least one point")
            w = np.ones(len(self.atoms)) if self.atom_weights is None else np.asarray(self.atom_weights, float)
            if w.shape != (len(self.atoms),) or np.any(w <= 0):
                raise DomainError("atom weights must be positive, one per atom")
        if self.nodes_per_panel < 1 or (self.panels is not None and self.panels < 1):
            raise DomainError("quadrature sizes must be positive")

    @classmethod
    def point_mass(cls, theta) -> "PriorSpec":
        return cls("atoms", atoms=(tuple(np.asarray(theta, float)),))


# ---------------------------------------------------------------------------
# node sets
# ---------------------------------------------------------------------------


def grid_axis(lo: float, hi: float, n: int) -> np.ndarray:
    """lo + j/sqrt(n) for j = 0..floor((hi - lo) sqrt(n))."""
    h = 1.0 / math.sqrt(n)
    count = int(math.floor((hi - lo) / h + 1e-9)) + 1
    return lo + h * np.arange(count)


def grid_count(lower, upper, n: int) -> int:
    """|Theta_[n]| for the lattice anchored at the lower corner of the box."""
    return int(np.prod([grid_axis(lo, hi, n).size for lo, hi in zip(np.atleast_1d(lower), np.atleast_1d(upper))]))


def _tensor(axes, axis_weights, max_nodes):
    total = int(np.prod([a.size for a in axes]))
    if total > max_nodes:
        raise CapacityError(f"prior needs {total} nodes (cap {max_nodes})")
    nodes = np.array(list(itertools.product(*axes)), float).reshape(total, len(axes))
    logw = np.zeros(total)
    for i, w in enumerate(itertools.product(*axis_weights)):
        logw[i] = sum(w)
    return nodes, logw


def _gl_axis(lo, hi, nodes_per_panel, panels):
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x).ravel()
    wts = (half[:, None] * w).ravel() / (hi - lo)
    return pts, np.log(wts)


def _auto_panels(width, n):
    return max(2, int(math.ceil(width * math.sqrt(max(n, 1)) / 8.0)))


def _lattice(lower, upper, n, max_nodes):
    axes = [grid_axis(lo, hi, n) for lo, hi in zip(lower, upper)]
    zero = [np.zeros(a.size) for a in axes]
    nodes, logw = _tensor(axes, zero, max_nodes)
    return nodes, logw - math.log(nodes.shape[0])


def prior_nodes(prior: PriorSpec, lower, upper, n: int, nested=None, coords=None):
    """(nodes, log-weights) of a node-based prior on the box [lower, upper]."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if prior.kind == "continuous":
        axes, wts = [], []
        for lo, hi in zip(lower, upper):
            if hi <= lo:
                axes.append(np.array([lo]))
                wts.append(np.zeros(1))
                continue
            panels = prior.panels or _auto_panels(hi - lo, n)
            a, w = _gl_axis(lo, hi, prior.nodes_per_panel, panels)
            axes.append(a)
            wts.append(w)
        return _tensor(axes, wts, prior.max_nodes)
    if prior.kind == "grid-E":
        return _lattice(lower, upper, n, prior.max_nodes)
    if prior.kind == "nested-F":
        if nested is None:
            raise DomainError("nested-F prior needs a family with nested boxes")
        shells = len(nested) if prior.shells is None else min(prior.shells, len(nested))
        raw = np.array([6.0 / (math.pi ** 2 * i ** 2) for i in range(1, shells + 1)])
        raw /= raw.sum()
        parts, logs = [], []
        for i in range(shells):
            lo, hi = nested[i]
            if coords is not None:
                lo, hi = lo[coords], hi[coords]
            nd, lw = _lattice(lo, hi, n, prior.max_nodes)
            parts.append(nd)
            logs.append(lw + math.log(raw[i]))
        nodes = np.concatenate(parts)
        if nodes.shape[0] > prior.max_nodes:
            raise CapacityError(f"prior needs {nodes.shape[0]} nodes (cap {prior.max_nodes})")
        return nodes, np.concatenate(logs)
    if prior.kind == "atoms":
        nodes = np.array(prior.atoms, float)
        if coords is not None:
            nodes = nodes[:, coords]
        w = np.ones(len(nodes)) if prior.atom_weights is None else np.asarray(prior.atom_weights, float)
        return nodes, np.log(w / w.sum())
    raise DomainError(f"prior kind {prior.kind!r} has no node representation")


def shell_weights(shells: int) -> np.ndarray:
    """Truncated and renormalised 6/(pi^2 i^2), i = 1..shells."""
    w = np.array([6.0 / (math.pi ** 2 * i ** 2) for i in range(1, shells + 1)])
    return w / w.sum()


# ---------------------------------------------------------------------------
# count vectors
# ---------------------------------------------------------------------------


def count_vectors(n: int, K: int, cap: int = EXACT_COUNT_CAP) -> np.ndarray:
    """All length-K nonnegative integer vectors summing to n, shape (C, K)."""
    total = math.comb(n + K - 1, K - 1)
    if total > cap:
        raise CapacityError(f"{total} count vectors exceed the cap {cap}")
    if K == 1:
        return np.array([[n]], dtype=np.int64)
    grids = np.meshgrid(*[np.arange(n + 1)] * (K - 1), indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1)
    rest = rest[rest.sum(axis=1) <= n]
    return np.column_stack([n - rest.sum(axis=1), rest]).astype(np.int64)


def count_strides(n: int, K: int) -> np.ndarray:
    """Flat-table strides: index = sum_{b >= 1} c_b (n+1)^(b-1)."""
    st = np.zeros(K, dtype=np.int64)
    for b in range(1, K):
        st[b] = (n + 1) ** (b - 1)
    return st


def log_multinomial_counts(counts) -> np.ndarray:
    counts = np.asarray(counts, float)
    return gammaln(counts.sum(axis=-1) + 1) - gammaln(counts + 1).sum(axis=-1)


# ---------------------------------------------------------------------------
# mixture model
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class MixtureModel:
    """Q^n = sum_j w_j P_{theta_j}^n (or its conjugate closed form).

    ``target`` is an input symbol (per-input mixture of W_{theta,x}) or
    ``None`` for the output mixture of W_theta . P.
    """

    family: ChannelFamily
    prior: PriorSpec
    target: Optional[int]
    n: int
    P: Optional[np.ndarray] = None
    nodes: Optional[np.ndarray] = None
    logw: Optional[np.ndarray] = None
    _B: Optional[np.ndarray] = field(default=None, repr=False)
    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def finite(self) -> bool:
        return self.family.output.is_finite

    @property
    def K(self) -> int:
        return self.family.output.size if self.finite else 0

    @property
    def conjugate(self) -> bool:
        return self.prior.kind == "dirichlet"

    @property
    def size(self) -> int:
        return 0 if self.nodes is None else self.nodes.shape[0]

    # --- sufficient statistics ---------------------------------------------

    def _stats(self, y):
        y = np.asarray(y)
        fam = self.family
        if self.finite:
            y = y.astype(np.int64)
            if y.size and (y.min() < 0 or y.max() >= self.K):
                raise DomainError("output symbol outside the alphabet")
            return np.bincount(y.ravel(), minlength=self.K)
        comp = fam.component(self.target)
        g = comp.generators(y)
        return np.concatenate([g.sum(axis=0), [len(y)]]), float(np.sum(comp.log_base(y)))

    def log_density(self, y) -> float:
        """log Q(y^n) for one output block."""
        y = np.asarray(y)
        if self.finite:
            return float(self.log_density_counts(self._stats(y)[None, :])[0])
        if self.target is None:
            return float(self._output_continuous(y))
        A, base = self._stats(y)
        return base + float(kernels.logsumexp_affine(A[None, :], self._B, self.logw)[0])

    def log_density_counts(self, counts) -> np.ndarray:
        """log Q of any single sequence with the given output counts, rows of (S, K)."""
        if not self.finite:
            raise DomainError("count evaluation needs a finite output alphabet")
        counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
        if self.conjugate:
            K = self.K
            return gammaln(K) + gammaln(counts + 1.0).sum(axis=1) - gammaln(counts.sum(axis=1) + K)
        if self.target is None:
            A = counts.astype(float)
        else:
            A = np.column_stack([counts[:, 1:], counts.sum(axis=1)]).astype(float)
        return kernels.logsumexp_affine(A, self._B, self.logw)

    def count_table(self, nb: int):
        """Flat table of log Q over all count vectors of total nb, plus strides."""
        if nb not in self._tables:
            K = self.K
            cv = count_vectors(nb, K, cap=10 ** 8)
            st = count_strides(nb, K)
            table = np.full((nb + 1) ** (K - 1), -np.inf)
            table[cv @ st] = self.log_density_counts(cv)
            self._tables[nb] = (table, st)
        return self._tables[nb]

    def _output_continuous(self, y) -> float:
        fam = self.family
        logP = np.log(self.P)
        active = np.flatnonzero(self.P > 0)
        total = np.zeros(self.size)
        per_x = []
        for x in active:
            comp = fam.component(x)
            eta = self.nodes[:, fam.coords(x)]
            g = comp.generators(y)
            per_x.append(logP[x] + comp.log_base(y)[None, :] + eta @ g.T - comp.potential(eta)[:, None])
        total = logsumexp(np.stack(per_x), axis=0).sum(axis=1)
        return float(logsumexp(total + self.logw))

    # --- the law itself ----------------------------------------------------

    def node_log_likelihoods(self, y) -> np.ndarray:
        """log P_{theta_j}^n(y) for every node (dominance checks)."""
        if self.conjugate:
            raise DomainError("conjugate priors have no node list")
        y = np.asarray(y)
        if self.finite:
            c = self._stats(y).astype(float)
            A = c if self.target is None else np.concatenate([c[1:], [c.sum()]])
            return self._B @ A
        if self.target is None:
            raise DomainError("node likelihoods for continuous output mixtures are not tabulated")
        A, base = self._stats(y)
        return base + self._B @ A


def _check_compatible(family: ChannelFamily, prior: PriorSpec):
    if prior.kind not in _ALLOWED.get(family.tag, set()):
        raise DomainError(f"prior {prior.kind!r} is not admissible for a tag-{family.tag} family")
    if prior.kind == "dirichlet":
        if not family.output.is_finite or not all(isinstance(c, DiscreteComponent) for c in family.components):
            raise DomainError("the dirichlet prior needs a finite-output logistic family")
    if prior.kind in ("continuous", "grid-E") and not family.compact:
        raise DomainError("node priors need a compact parameter box")


def build_mixture(family: ChannelFamily, prior: PriorSpec, target="output", n: int = 1, P=None) -> MixtureModel:
    """Mixture for input ``target`` (an int) or the output mixture (``"output"``).

    ``n`` is the block length that sets lattice spacing and quadrature size.
    Output mode needs the input distribution ``P``.
    """
    _check_compatible(family, prior)
    if n < 1:
        raise DomainError("block length must be positive")
    if target == "output" or target is None:
        if P is None:
            raise DomainError("the output mixture needs an input distribution P")
        P = np.asarray(getattr(P, "distribution", P), float)
        if P.shape != (family.d,) or np.any(P < 0) or not math.isclose(P.sum(), 1.0, abs_tol=1e-9):
            raise DomainError("P must be a distribution over the inputs")
        model = MixtureModel(family, prior, None, n, P)
        if prior.kind == "dirichlet":
            return model
        nodes, logw = prior_nodes(prior, family.lower, family.upper, n, family.nested)
        model.nodes, model.logw = nodes, logw
        if family.output.is_finite:
            rows = np.zeros((nodes.shape[0], family.output.size))
            for x in np.flatnonzero(P > 0):
                rows += P[x] * family.component(x).probabilities(nodes[:, family.coords(x)])
            with np.errstate(divide="ignore"):
                model._B = np.log(rows)
        return model
    x = int(target)
    comp = family.component(x)
    model = MixtureModel(family, prior, x, n)
    if prior.kind == "dirichlet":
        return model
    lo, hi = family.sub_box(x)
    nodes, logw = prior_nodes(prior, lo, hi, n, family.nested, family.coords(x))
    model.nodes, model.logw = nodes, logw
    model._B = np.column_stack([nodes, -comp.potential(nodes)])
    return model


def log_mixture_density(model: MixtureModel, y) -> float:
    """log Q^n(y^n); ``-inf`` marks sequences outside the mixture's support."""
    return model.log_density(y)


def build_codeword_mixtures(family: ChannelFamily, prior: PriorSpec, composition) -> list:
    """Per-input mixtures, input x built with block length n_x = count of x."""
    counts = np.asarray(getattr(composition, "counts", composition), dtype=np.int64)
    return [build_mixture(family, prior, x, max(int(c), 1)) for x, c in enumerate(counts)]


def codeword_mixture_logdensity(family: ChannelFamily, priors, xn, yn) -> float:
    """log Q_{x^n}(y^n) = sum_x log Q_{w_x, x}(y restricted to positions with x_i = x).

    ``priors`` is a sequence of per-input :class:`MixtureModel` or one
    :class:`PriorSpec` (then each block's mixture is built at its length).
    """
    xn = np.asarray(xn, dtype=np.int64)
    yn = np.asarray(yn)
    if xn.shape[0] != yn.shape[0]:
        raise DomainError("x^n and y^n must have the same length")
    if isinstance(priors, PriorSpec):
        priors = build_codeword_mixtures(family, priors, np.bincount(xn, minlength=family.d))
    total = 0.0
    for x in range(family.d):
        mask = xn == x
        if mask.any():
            total += priors[x].log_density(yn[mask])
    return total


# ---------------------------------------------------------------------------
# Renyi divergence to a mixture
# ---------------------------------------------------------------------------


@dataclass
class RenyiEstimate:
    value: float
    ci_low: float
    ci_high: float
    method: str
    trials: int = 0
    heavy_tail: bool = False


def _law(model: MixtureModel, theta):
    """(log pmf over the alphabet) for finite outputs, else a point for sampling."""
    fam = model.family
    point = theta if isinstance(theta, ChannelPoint) else fam.point(theta)
    if fam.output.is_finite:
        if model.target is None:
            q = model.P @ point.transition_matrix()
        else:
            q = point.component(model.target).probabilities(point.eta(model.target))
        with np.errstate(divide="ignore"):
            return point, np.log(q)
    return point, None


def _block_loglik(model, point, y):
    fam = model.family
    if model.target is not None:
        return np.sum(point.component(model.target).log_density(point.eta(model.target), y), axis=-1)
    logs = np.stack([np.log(model.P[x]) + point.component(x).log_density(point.eta(x), y)
                     for x in np.flatnonzero(model.P > 0)])
    return np.sum(logsumexp(logs, axis=0), axis=-1)


def estimate_renyi_to_mixture(family: ChannelFamily, theta, model: MixtureModel, n: int, s: float,
                              trials: int = 10_000, rng: Optional[np.random.Generator] = None,
                              method: str = "auto") -> RenyiEstimate:
    """D_{1+s}(P_theta^n || Q^n) by exact count enumeration or Monte Carlo.

    ``auto`` uses the exact sum for finite outputs whenever the number of
    count vectors is at most ``EXACT_COUNT_CAP``.
    """
    if model.family is not family:
        raise DomainError("the mixture was built for a different family")
    if not s > 0:
        raise DomainError("s must be positive")
    point, logq = _law(model, theta)
    if method == "auto":
        exact_ok = logq is not None and math.comb(n + logq.size - 1, logq.size - 1) <= EXACT_COUNT_CAP
        method = "exact" if exact_ok else "monte-carlo"
    if method == "exact":
        if logq is None:
            raise DomainError("exact evaluation needs a finite output alphabet")
        cv = count_vectors(n, logq.size)
        keep = np.all((cv == 0) | np.isfinite(logq), axis=1)
        cv = cv[keep]
        with np.errstate(invalid="ignore"):
            lp = np.where(cv > 0, cv * logq, 0.0).sum(axis=1)
        lq = model.log_density_counts(cv)
        val = float(logsumexp(log_multinomial_counts(cv) + (1 + s) * lp - s * lq) / s)
        return RenyiEstimate(val, val, val, "exact")
    if trials < 1000:
        raise DomainError("Monte Carlo needs at least 1000 trials")
    rng = np.random.default_rng() if rng is None else rng
    if logq is not None:
        counts = rng.multinomial(n, np.exp(logq), size=trials)
        with np.errstate(invalid="ignore"):
            lp = np.where(counts > 0, counts * logq, 0.0).sum(axis=1)
        L = lp - model.log_density_counts(counts)
    else:
        L = np.empty(trials)
        for t in range(trials):
            if model.target is None:
                xs = rng.choice(family.d, size=n, p=model.P)
                y = np.stack([point.component(x).sample(point.eta(x), rng) for x in xs])
            else:
                y = point.component(model.target).sample(point.eta(model.target), rng, size=n)
            L[t] = _block_loglik(model, point, y) - model.log_density(y)
    return _mc_summary(L, s)


def _mc_summary(L, s) -> RenyiEstimate:
    z = s * np.asarray(L, float)
    top = z.max()
    w = np.exp(z - top)
    mean = w.mean()
    se = w.std(ddof=1) / math.sqrt(w.size)
    val = (top + math.log(mean)) / s
    lo = (top + math.log(max(mean - 1.96 * se, 1e-300))) / s
    hi = (top + math.log(mean + 1.96 * se)) / s
    k = max(1, int(math.ceil(0.01 * w.size)))
    heavy = bool(np.sort(w)[-k:].sum() > 0.5 * w.sum())
    return RenyiEstimate(float(val), float(lo), float(hi), "monte-carlo", int(w.size), heavy)


# ---------------------------------------------------------------------------
# Clarke-Barron slope and the score statistic
# ---------------------------------------------------------------------------


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    slope_se: float
    predicted_intercept: float
    rows: list


def predicted_intercept(family: ChannelFamily, theta, prior: PriorSpec, target: int, s: float) -> float:
    """Constant in D_{1+s} ~ (k/2) log(n / 2 pi) + 1/2 log det J - log w(theta) - k/(2s) log(1+s),
    returned as the intercept against log n; NaN when the prior has no density."""
    point = theta if isinstance(theta, ChannelPoint) else family.point(theta)
    comp = point.component(target)
    eta = point.eta(target)
    k = eta.size
    if prior.kind == "continuous":
        lo, hi = family.sub_box(target)
        log_w = -float(np.sum(np.log(hi - lo)))
        J = comp.potential_hessian(eta)
    elif prior.kind == "dirichlet":
        p = comp.probabilities(eta)
        log_w = float(gammaln(p.size))
        J = np.diag(1.0 / p[1:]) + 1.0 / p[0]
    else:
        return math.nan
    _, logdet = np.linalg.slogdet(np.atleast_2d(J))
    return -0.5 * k * math.log(2 * math.pi) + 0.5 * logdet - log_w - k / (2 * s) * math.log1p(s)


def clarke_barron_slope(family: ChannelFamily, theta, prior: PriorSpec, n_list: Sequence[int], s: float,
                        target: int = 0, trials: int = 10_000, rng=None, method: str = "auto") -> SlopeFit:
    """Least-squares fit of D_{1+s}(P_theta^n || Q^n) against log n."""
    ns = [int(n) for n in n_list]
    if len(ns) < 4 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("need at least 4 increasing block lengths")
    ratios = np.diff(np.log(ns))
    if np.ptp(ratios) > 0.05 * ratios.mean():
        raise DomainError("block lengths must be geometrically spaced")
    pred = predicted_intercept(family, theta, prior, target, s)
    rows = []
    for n in ns:
        model = build_mixture(family, prior, target, n)
        est = estimate_renyi_to_mixture(family, theta, model, n, s, trials, rng, method)
        rows.append({"n": n, "s": s, "estimate": est.value, "ci_low": est.ci_low, "ci_high": est.ci_high,
                     "predicted": pred + 0.5 * len(family.coords(target)) * math.log(n)
                     if math.isfinite(pred) else math.nan, "method": est.method})
    x = np.log(ns)
    y = np.array([r["estimate"] for r in rows])
    res = stats.linregress(x, y)
    return SlopeFit(float(res.slope), float(res.intercept), float(res.stderr), pred, rows)


@dataclass
class ScoreCheck:
    ks: float
    mean: float
    mean_se: float
    df: int
    statistics: np.ndarray = field(repr=False, default=None)


def chi_square_score_check(family: ChannelFamily, theta, x: int, n: int, trials: int,
                           rng: Optional[np.random.Generator] = None) -> ScoreCheck:
    """KS distance between l^T J^+ l (l the normalised score of n draws) and chi^2_rank(J)."""
    point = theta if isinstance(theta, ChannelPoint) else family.point(theta)
    if not family.is_interior(point.theta):
        raise DomainError("the score check needs theta in the interior")
    rng = np.random.default_rng() if rng is None else rng
    comp = point.component(x)
    eta = point.eta(x)
    mean_g = comp.potential_grad(eta)
    J = np.atleast_2d(comp.potential_hessian(eta))
    if isinstance(comp, DiscreteComponent):
        T = rng.multinomial(n, comp.probabilities(eta), size=trials)[:, 1:].astype(float)
    else:
        T = np.empty((trials, eta.size))
        for t in range(trials):
            T[t] = comp.generators(comp.sample(eta, rng, size=n)).sum(axis=0)
    l = (T - n * mean_g) / math.sqrt(n)
    Jp = np.linalg.pinv(J)
    df = int(np.linalg.matrix_rank(J))
    q = np.einsum("ti,ij,tj->t", l, Jp, l)
    ks = stats.kstest(q, stats.chi2(df).cdf).statistic
    return ScoreCheck(float(ks), float(q.mean()), float(q.std(ddof=1) / math.sqrt(trials)), df, q)
