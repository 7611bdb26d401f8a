"""Parametric channel families with exponential-family output laws.

Every input symbol ``x`` owns a component whose output density is

    W_{theta,x}(y) = W_{0,x}(y) * exp(theta_x . g_x(y) - phi_x(theta_x))

where ``theta_x`` is the slice of the global parameter vector selected by
the component's ``coords``.  Three builtin families are provided: the
logistic discrete memoryless channel, the scalar Gaussian fading channel
and the constant multi-antenna Gaussian channel.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, roots_hermite

from .errors import DomainError

LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class OutputSpace:
    """Output alphabet: ``finite`` (``size`` symbols), ``real`` or ``vector`` (dimension ``dim``)."""

    kind: str
    size: Optional[int] = None
    dim: int = 1

    def __post_init__(self):
        if self.kind == "finite":
            if self.size is None or self.size < 2:
                raise DomainError("a finite output space needs at least 2 symbols")
        elif self.kind == "real":
            if self.dim != 1:
                raise DomainError("real-line output has dimension 1")
        elif self.kind == "vector":
            if self.dim < 1:
                raise DomainError("vector output dimension must be >= 1")
        else:
            raise DomainError(f"unknown output kind {self.kind!r}")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def measure(self) -> str:
        return "counting" if self.is_finite else "lebesgue"


# ---------------------------------------------------------------------------
# components
# ---------------------------------------------------------------------------


class ExpFamilyComponent:
    """Output law of one input symbol.

    Subclasses provide generators, base log-density, the potential (log
    partition function) and a sampler.  All methods broadcast over leading
    axes of ``eta`` (natural parameters, shape ``(..., k)``) and ``y``.
    """

    coords: np.ndarray
    k: int

    def generators(self, y) -> np.ndarray:
        raise NotImplementedError

    def log_base(self, y) -> np.ndarray:
        raise NotImplementedError

    def potential(self, eta) -> np.ndarray:
        raise NotImplementedError

    def potential_grad(self, eta) -> Optional[np.ndarray]:
        return None

    def potential_hessian(self, eta) -> Optional[np.ndarray]:
        return None

    def in_domain(self, eta) -> bool:
        return bool(np.all(np.isfinite(self.potential(np.asarray(eta, float)))))

    def log_density(self, eta, y) -> np.ndarray:
        eta = np.asarray(eta, float)
        g = self.generators(y)
        return self.log_base(y) + g @ eta - self.potential(eta)

    def sample(self, eta, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def expectation_rule(self, eta, order: int = 64):
        """Nodes and weights with sum(w * h(nodes)) ~= E_{W_eta}[h(Y)]."""
        raise NotImplementedError


class DiscreteComponent(ExpFamilyComponent):
    """Logistic parametrisation of all distributions on {0, ..., m}."""

    def __init__(self, m: int, coords: Sequence[int]):
        self.m = int(m)
        self.k = self.m
        self.coords = _frozen(coords, dtype=np.intp)

    def generators(self, y):
        y = np.asarray(y, dtype=np.intp)
        return (y[..., None] == np.arange(1, self.m + 1)).astype(float)

    def log_base(self, y):
        return np.zeros(np.shape(y))

    def potential(self, eta):
        eta = np.asarray(eta, float)
        zero = np.zeros(eta.shape[:-1] + (1,))
        return logsumexp(np.concatenate([zero, eta], axis=-1), axis=-1)

    def probabilities(self, eta) -> np.ndarray:
        """Full pmf over {0..m}, shape (..., m+1)."""
        eta = np.asarray(eta, float)
        zero = np.zeros(eta.shape[:-1] + (1,))
        full = np.concatenate([zero, eta], axis=-1)
        return np.exp(full - logsumexp(full, axis=-1, keepdims=True))

    def log_probabilities(self, eta) -> np.ndarray:
        eta = np.asarray(eta, float)
        zero = np.zeros(eta.shape[:-1] + (1,))
        full = np.concatenate([zero, eta], axis=-1)
        return full - logsumexp(full, axis=-1, keepdims=True)

    def potential_grad(self, eta):
        return self.probabilities(eta)[..., 1:]

    def potential_hessian(self, eta):
        p = self.potential_grad(eta)
        return np.einsum("...i,ij->...ij", p, np.eye(self.m)) - p[..., :, None] * p[..., None, :]

    def sample(self, eta, rng, size=None):
        cdf = np.cumsum(self.probabilities(eta))
        u = rng.random(size)
        return np.minimum(np.searchsorted(cdf, u, side="right"), self.m)

    def expectation_rule(self, eta, order=64):
        return np.arange(self.m + 1), self.probabilities(eta)


class GaussianComponent(ExpFamilyComponent):
    """Y = a*s + Z, Z ~ N(b, v), in coordinates (1/v, a/v, b/v)."""

    def __init__(self, signal: float, coords: Sequence[int] = (0, 1, 2)):
        self.signal = float(signal)
        self.k = 3
        self.coords = _frozen(coords, dtype=np.intp)

    def _split(self, eta):
        eta = np.asarray(eta, float)
        prec = eta[..., 0]
        lin = eta[..., 1] * self.signal + eta[..., 2]
        return prec, lin

    def generators(self, y):
        y = np.asarray(y, float)
        return np.stack([-0.5 * y * y, self.signal * y, y], axis=-1)

    def log_base(self, y):
        return np.full(np.shape(y), -0.5 * LOG_2PI)

    def potential(self, eta):
        prec, lin = self._split(eta)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = lin * lin / (2.0 * prec) - 0.5 * np.log(prec)
        return np.where(prec > 0, out, np.inf)

    def potential_grad(self, eta):
        prec, lin = self._split(eta)
        s = self.signal
        return np.stack(
            [-(lin**2) / (2 * prec**2) - 1.0 / (2 * prec), s * lin / prec, lin / prec], axis=-1
        )

    def potential_hessian(self, eta):
        prec, lin = self._split(eta)
        s = self.signal
        h = np.empty(np.shape(prec) + (3, 3))
        h[..., 0, 0] = lin**2 / prec**3 + 1.0 / (2 * prec**2)
        h[..., 0, 1] = h[..., 1, 0] = -s * lin / prec**2
        h[..., 0, 2] = h[..., 2, 0] = -lin / prec**2
        h[..., 1, 1] = s * s / prec
        h[..., 1, 2] = h[..., 2, 1] = s / prec
        h[..., 2, 2] = 1.0 / prec
        return h

    def moments(self, eta):
        prec, lin = self._split(eta)
        return lin / prec, 1.0 / prec

    def sample(self, eta, rng, size=None):
        mean, var = self.moments(eta)
        return mean + math.sqrt(var) * rng.standard_normal(size)

    def expectation_rule(self, eta, order=64):
        mean, var = self.moments(eta)
        t, w = roots_hermite(order)
        return mean + math.sqrt(2.0 * var) * t, w / math.sqrt(math.pi)


def _triu_pairs(r):
    return [(i, j) for i in range(r) for j in range(i, r)]


class MIMOComponent(ExpFamilyComponent):
    """Y = A x + Z, Z ~ N_r(b, Sigma), in coordinates (Sigma^-1, Sigma^-1 A, Sigma^-1 b).

    Layout of the parameter slice: upper triangle of Sigma^-1 (row-major,
    r(r+1)/2 entries), then Sigma^-1 A row-major (r*t), then Sigma^-1 b (r).
    """

    def __init__(self, signal: Sequence[float], r: int, coords: Optional[Sequence[int]] = None):
        self.signal = np.asarray(signal, float).ravel()
        self.r = int(r)
        self.t = self.signal.size
        self.pairs = _triu_pairs(self.r)
        self.k = len(self.pairs) + self.r * self.t + self.r
        self.coords = _frozen(np.arange(self.k) if coords is None else coords, dtype=np.intp)

    def unpack(self, eta):
        """Return (precision matrix, linear term Sigma^-1 (A x + b))."""
        eta = np.asarray(eta, float)
        lead = eta.shape[:-1]
        r, t, q = self.r, self.t, len(self.pairs)
        prec = np.zeros(lead + (r, r))
        for idx, (i, j) in enumerate(self.pairs):
            prec[..., i, j] = eta[..., idx]
            prec[..., j, i] = eta[..., idx]
        mix = eta[..., q : q + r * t].reshape(lead + (r, t))
        lin = mix @ self.signal + eta[..., q + r * t :]
        return prec, lin

    def generators(self, y):
        y = np.asarray(y, float)
        quad = [(-0.5 if i == j else -1.0) * y[..., i] * y[..., j] for i, j in self.pairs]
        mix = [y[..., i] * self.signal[j] for i in range(self.r) for j in range(self.t)]
        lin = [y[..., i] for i in range(self.r)]
        return np.stack(quad + mix + lin, axis=-1)

    def log_base(self, y):
        return np.full(np.shape(y)[:-1], -0.5 * self.r * LOG_2PI)

    def potential(self, eta):
        prec, lin = self.unpack(eta)
        lead = prec.shape[:-2]
        prec = prec.reshape((-1, self.r, self.r))
        lin = lin.reshape((-1, self.r))
        eig = np.linalg.eigvalsh(prec)
        ok = np.all(eig > 0, axis=-1)
        out = np.full(ok.shape, np.inf)
        if np.any(ok):
            sol = np.linalg.solve(prec[ok], lin[ok][..., None])[..., 0]
            out[ok] = 0.5 * np.sum(lin[ok] * sol, axis=-1) - 0.5 * np.sum(np.log(eig[ok]), axis=-1)
        return out.reshape(lead)

    def moments(self, eta):
        prec, lin = self.unpack(eta)
        cov = np.linalg.inv(prec)
        return cov @ lin, cov

    def sample(self, eta, rng, size=None):
        mean, cov = self.moments(eta)
        shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
        chol = np.linalg.cholesky(cov)
        z = rng.standard_normal(shape + (self.r,))
        return mean + z @ chol.T

    def expectation_rule(self, eta, order=64):
        mean, cov = self.moments(eta)
        # tensor rule; keep the node count bounded in higher dimensions
        per_dim = max(4, min(order, int(round(1e6 ** (1.0 / self.r)))))
        t, w = roots_hermite(per_dim)
        grid = np.array(list(itertools.product(t, repeat=self.r)))
        wts = np.prod(np.array(list(itertools.product(w, repeat=self.r))), axis=1) / math.pi ** (self.r / 2)
        chol = np.linalg.cholesky(cov)
        return mean + math.sqrt(2.0) * grid @ chol.T, wts


# ---------------------------------------------------------------------------
# families and points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChannelFamily:
    """A parametric family {W_theta} over inputs {0..d-1} with box parameter set.

    ``tag`` is ``"A"`` (exponential family), ``"B"`` (compact box) or
    ``"C"`` (nested compact boxes in ``nested``).
    """

    name: str
    output: OutputSpace
    components: tuple
    lower: np.ndarray
    upper: np.ndarray
    tag: str
    nested: Optional[tuple] = None
    descriptor: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def k(self) -> int:
        return self.lower.size

    def component(self, x: int) -> ExpFamilyComponent:
        if not 0 <= x < self.d:
            raise DomainError(f"input symbol {x} outside 0..{self.d - 1}")
        return self.components[x]

    def coords(self, x: int) -> np.ndarray:
        return self.component(x).coords

    def sub(self, theta, x: int) -> np.ndarray:
        return np.asarray(theta, float)[..., self.coords(x)]

    def sub_box(self, x: int):
        c = self.coords(x)
        return self.lower[c], self.upper[c]

    @property
    def compact(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, float)
        return theta.shape == (self.k,) and bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def is_interior(self, theta) -> bool:
        theta = np.asarray(theta, float)
        return self.contains(theta) and bool(np.all(theta > self.lower) and np.all(theta < self.upper))

    def point(self, theta) -> "ChannelPoint":
        return ChannelPoint(self, theta)

    def with_box(self, lower, upper) -> "ChannelFamily":
        lower = _frozen(np.broadcast_to(np.asarray(lower, float), (self.k,)))
        upper = _frozen(np.broadcast_to(np.asarray(upper, float), (self.k,)))
        fam = ChannelFamily(self.name, self.output, self.components, lower, upper, self.tag, None,
                            dict(self.descriptor, lower=lower.tolist(), upper=upper.tolist()))
        _validate_box(fam)
        return fam

    def with_nested_boxes(self, boxes) -> "ChannelFamily":
        """Attach an increasing sequence of compact boxes (tag C).

        The family's own box becomes the last (largest) supplied box.
        """
        boxes = tuple((_frozen(lo), _frozen(hi)) for lo, hi in boxes)
        if not boxes:
            raise DomainError("need at least one nested box")
        for lo, hi in boxes:
            if lo.shape != (self.k,) or hi.shape != (self.k,) or np.any(lo > hi):
                raise DomainError("malformed nested box")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise DomainError("nested boxes must be compact")
        for (lo0, hi0), (lo1, hi1) in zip(boxes, boxes[1:]):
            if np.any(lo1 > lo0) or np.any(hi1 < hi0):
                raise DomainError("nested boxes must increase")
        fam = ChannelFamily(self.name, self.output, self.components, boxes[-1][0], boxes[-1][1], "C", boxes,
                            dict(self.descriptor, nested=[[lo.tolist(), hi.tolist()] for lo, hi in boxes]))
        _validate_box(fam)
        return fam

    def __repr__(self):
        return f"ChannelFamily({self.name!r}, d={self.d}, k={self.k}, tag={self.tag!r})"


@dataclass(frozen=True, eq=False)
class ChannelPoint:
    """A family member W_theta."""

    family: ChannelFamily
    theta: np.ndarray

    def __post_init__(self):
        theta = _frozen(self.theta)
        if theta.shape != (self.family.k,):
            raise DomainError(f"theta must have {self.family.k} coordinates, got shape {theta.shape}")
        if not self.family.contains(theta):
            raise DomainError(f"theta={theta.tolist()} lies outside the parameter box")
        object.__setattr__(self, "theta", theta)

    def eta(self, x: int) -> np.ndarray:
        return self.family.sub(self.theta, x)

    def component(self, x: int) -> ExpFamilyComponent:
        return self.family.component(x)

    def transition_matrix(self) -> np.ndarray:
        """Rows W(.|x) for a finite-output family."""
        if not self.family.output.is_finite:
            raise DomainError("transition matrix needs a finite output alphabet")
        return np.array([self.component(x).probabilities(self.eta(x)) for x in range(self.family.d)])

    def __repr__(self):
        return f"ChannelPoint({self.family.name}, theta={np.round(self.theta, 6).tolist()})"


def _validate_box(fam: ChannelFamily):
    if np.any(fam.lower > fam.upper):
        raise DomainError("box lower corner exceeds upper corner")
    for x in range(fam.d):
        comp = fam.components[x]
        if isinstance(comp, MIMOComponent):
            lo, hi = fam.sub_box(x)
            q = len(comp.pairs)
            if not (np.all(np.isfinite(lo[:q])) and np.all(np.isfinite(hi[:q]))):
                raise DomainError("precision-matrix box must be bounded")
            # the PD cone is convex, so a box lies inside it iff all its corners do
            for corner in itertools.product(*zip(lo[:q], hi[:q])):
                eta = np.concatenate([corner, np.zeros(comp.k - q)])
                prec, _ = comp.unpack(eta)
                if np.linalg.eigvalsh(prec)[0] <= 0:
                    raise DomainError("parameter box contains a non-positive-definite precision matrix")
        elif isinstance(comp, GaussianComponent):
            if fam.lower[comp.coords[0]] <= 0:
                raise DomainError("precision coordinate must stay bounded away from 0")


# ---------------------------------------------------------------------------
# builtin constructors
# ---------------------------------------------------------------------------


def make_dmc_family(d: int, m: int, bound: float = 6.0) -> ChannelFamily:
    """Logistic discrete channel on inputs {0..d-1}, outputs {0..m}.

    ``theta[x*m + (y-1)] = log W(y|x) / W(0|x)``; the box is ``[-bound, bound]^(d*m)``.
    """
    if d < 2:
        raise DomainError("need d >= 2 inputs")
    if m < 1:
        raise DomainError("need m >= 1 (at least two outputs)")
    comps = tuple(DiscreteComponent(m, range(x * m, (x + 1) * m)) for x in range(d))
    k = d * m
    return ChannelFamily(
        "dmc", OutputSpace("finite", size=m + 1), comps,
        _frozen(np.full(k, -float(bound))), _frozen(np.full(k, float(bound))), "A",
        descriptor={"constructor": "dmc", "d": d, "m": m, "bound": float(bound)},
    )


def dmc_theta(matrix) -> np.ndarray:
    """Logistic coordinates of a strictly positive transition matrix (rows x, columns y)."""
    w = np.asarray(matrix, float)
    if np.any(w <= 0):
        raise DomainError("logistic coordinates need strictly positive transition probabilities")
    return np.log(w[:, 1:] / w[:, :1]).ravel()


def make_gaussian_fading(signal_points: Sequence[float], eps0: float = 0.05,
                         gain_range=(-5.0, 5.0), offset_range=(-5.0, 5.0)) -> ChannelFamily:
    """Y = a*x_i + Z with Z ~ N(b, v); theta = (1/v, a/v, b/v), precision in [eps0, 1/eps0]."""
    pts = [float(s) for s in signal_points]
    if len(pts) < 2:
        raise DomainError("need at least two signal points")
    if len(set(pts)) != len(pts):
        raise DomainError("signal points must be distinct")
    if not 0 < eps0 < 1:
        raise DomainError("eps0 must lie in (0, 1)")
    comps = tuple(GaussianComponent(s) for s in pts)
    lower = [eps0, gain_range[0], offset_range[0]]
    upper = [1.0 / eps0, gain_range[1], offset_range[1]]
    fam = ChannelFamily(
        "gaussian_fading", OutputSpace("real"), comps, _frozen(lower), _frozen(upper), "B",
        descriptor={"constructor": "gaussian_fading", "signal_points": pts, "eps0": eps0,
                    "gain_range": list(gain_range), "offset_range": list(offset_range)},
    )
    _validate_box(fam)
    return fam


def gaussian_theta(a: float, b: float, v: float) -> np.ndarray:
    if v <= 0:
        raise DomainError("noise variance must be positive")
    return np.array([1.0 / v, a / v, b / v])


def make_mimo_gaussian(signal_vectors, r: int, precision_box=None, mix_range=(-5.0, 5.0),
                       offset_range=(-5.0, 5.0)) -> ChannelFamily:
    """Constant multi-antenna Gaussian channel with r receive antennas.

    ``precision_box`` is a pair (lower, upper) for the r(r+1)/2 upper-triangle
    entries of Sigma^-1; by default diagonals lie in [0.05, 20] and
    off-diagonals in [-0.04, 0.04], which keeps every box corner positive definite.
    """
    vecs = [np.atleast_1d(np.asarray(v, float)) for v in signal_vectors]
    if len(vecs) < 2:
        raise DomainError("need at least two signal vectors")
    if r < 1:
        raise DomainError("need r >= 1")
    t = vecs[0].size
    if t < 1 or any(v.size != t for v in vecs):
        raise DomainError("signal vectors must share a dimension t >= 1")
    comps = tuple(MIMOComponent(v, r) for v in vecs)
    pairs = _triu_pairs(r)
    if precision_box is None:
        plo = [0.05 if i == j else -0.04 for i, j in pairs]
        phi = [20.0 if i == j else 0.04 for i, j in pairs]
    else:
        plo, phi = (list(np.asarray(b, float).ravel()) for b in precision_box)
    lower = plo + [mix_range[0]] * (r * t) + [offset_range[0]] * r
    upper = phi + [mix_range[1]] * (r * t) + [offset_range[1]] * r
    fam = ChannelFamily(
        "mimo_gaussian", OutputSpace("vector", dim=r), comps, _frozen(lower), _frozen(upper), "B",
        descriptor={"constructor": "mimo_gaussian", "signal_vectors": [v.tolist() for v in vecs], "r": r,
                    "precision_box": [plo, phi], "mix_range": list(mix_range),
                    "offset_range": list(offset_range)},
    )
    _validate_box(fam)
    return fam


def mimo_theta(A, b, sigma) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, float))
    b = np.atleast_1d(np.asarray(b, float))
    prec = np.linalg.inv(np.atleast_2d(np.asarray(sigma, float)))
    r = prec.shape[0]
    tri = [prec[i, j] for i, j in _triu_pairs(r)]
    return np.concatenate([tri, (prec @ A).ravel(), prec @ b])


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


def log_density(point: ChannelPoint, x: int, y) -> np.ndarray:
    """log W_{theta,x}(y); broadcasts over an array of outputs."""
    comp = point.component(x)
    return comp.log_density(point.eta(x), y)


def log_density_sequence(point: ChannelPoint, xs, ys) -> float:
    """log W^n_{theta,x^n}(y^n) for an i.i.d. block."""
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys)
    total = 0.0
    for x in np.unique(xs):
        total += float(np.sum(log_density(point, int(x), ys[xs == x])))
    return total


def sample_output(point: ChannelPoint, x: int, rng: np.random.Generator, size=None):
    """Draw output(s) from W_{theta,x}."""
    return point.component(x).sample(point.eta(x), rng, size)


def sample_sequence(point: ChannelPoint, xs, rng: np.random.Generator) -> np.ndarray:
    """Pass the word ``xs`` through the memoryless channel."""
    xs = np.asarray(xs, dtype=np.intp)
    out_shape = xs.shape + ((point.family.output.dim,) if point.family.output.kind == "vector" else ())
    dtype = np.intp if point.family.output.is_finite else float
    ys = np.empty(out_shape, dtype=dtype)
    for x in range(point.family.d):
        mask = xs == x
        cnt = int(mask.sum())
        if cnt:
            ys[mask] = sample_output(point, x, rng, cnt)
    return ys


def fd_hessian(fun, z, step=None) -> np.ndarray:
    """Central-difference Hessian with per-coordinate step 1e-4 * (1 + |z_i|)."""
    z = np.asarray(z, float)
    k = z.size
    h = 1e-4 * (1.0 + np.abs(z)) if step is None else np.broadcast_to(step, (k,))
    H = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            val = (fun(z + ei + ej) - fun(z + ei - ej) - fun(z - ei + ej) + fun(z - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    return H


def fisher_information(point: ChannelPoint, x: int, method: str = "auto") -> np.ndarray:
    """Fisher information of W_{theta,x} in its own coordinates (Hessian of the potential)."""
    if not point.family.is_interior(point.theta):
        raise DomainError("Fisher information requires theta in the interior of the box")
    comp = point.component(x)
    eta = point.eta(x)
    if method not in ("auto", "analytic", "fd"):
        raise ValueError(f"unknown method {method!r}")
    if method != "fd":
        H = comp.potential_hessian(eta)
        if H is not None:
            return np.asarray(H, float)
        if method == "analytic":
            raise DomainError("component has no analytic Hessian")
    return fd_hessian(lambda z: float(comp.potential(z)), eta)


def exp_family_renyi(comp: ExpFamilyComponent, eta, eta_other, s: float) -> float:
    """Closed-form D_{1+s}(W_eta || W_eta_other) for one component (KL at s=0)."""
    eta = np.asarray(eta, float)
    other = np.asarray(eta_other, float)
    if s == 0:
        grad = comp.potential_grad(eta)
        if grad is None:
            raise DomainError("closed-form KL needs the potential gradient")
        return float(comp.potential(other) - comp.potential(eta) - grad @ (other - eta))
    mid = (1 + s) * eta - s * other
    val = comp.potential(mid) - (1 + s) * comp.potential(eta) + s * comp.potential(other)
    return float(val / s)
