import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp
from scipy.stats import norm

from univcode.channels import gaussian_theta, log_density, make_dmc_family, make_gaussian_fading, sample_output
from univcode.errors import DesignError, DivergenceUndefined, DomainError
from univcode.infomeasures import (ChannelTable, RateParameters, compound_design, dispersion, exponent_lower_bound,
                                   gallager_exponent, gallager_s_info, golden_max, kl_divergence, local_shift,
                                   mutual_information, optimal_r1, renyi_divergence, second_order_bound,
                                   second_order_rate)

from conftest import builtin_families, random_point

UNIFORM = [0.5, 0.5]
# frozen closed forms for BSC(0.1) under the uniform input
I_BSC = math.log(2) + 0.1 * math.log(0.1) + 0.9 * math.log(0.9)
V_BSC = 0.09 * math.log(9) ** 2


def bsc(p):
    return make_dmc_family(2, 1).point([math.log(p / (1 - p)), math.log((1 - p) / p)])


def prob_vectors(size):
    return st.lists(st.floats(0.05, 1.0), min_size=size, max_size=size).map(lambda v: np.asarray(v) / np.sum(v))


# --- divergences -----------------------------------------------------------

def test_kl_examples():
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl_divergence([0.1, 0.9], [0.5, 0.5]) == pytest.approx(0.1 * math.log(0.2) + 0.9 * math.log(1.8), abs=1e-14)
    assert kl_divergence([0.1, 0.9], [0.5, 0.5]) == pytest.approx(I_BSC, abs=1e-14)
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf


def test_kl_gaussian_with_rule():
    nodes, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / w.sum()
    lp = lambda y: norm.logpdf(y)
    lq = lambda y: norm.logpdf(y, loc=1.0)
    assert kl_divergence(lp, lq, (nodes, w)) == pytest.approx(0.5, abs=1e-6)


def test_renyi_examples():
    for s in (-0.5, 0.5, 1.0, 2.0):
        assert renyi_divergence([0.2, 0.8], [0.2, 0.8], s) == pytest.approx(0.0, abs=1e-14)
    assert renyi_divergence([0.1, 0.9], [0.5, 0.5], 1.0) == pytest.approx(math.log(1.64), abs=1e-12)
    with pytest.raises(DomainError):
        renyi_divergence([0.5, 0.5], [0.5, 0.5], 0.0)
    with pytest.raises(DomainError):
        renyi_divergence([0.5, 0.5], [0.5, 0.5], -1.0)


def test_renyi_nonexistent():
    with pytest.raises(DivergenceUndefined):
        renyi_divergence(lambda y: np.full_like(y, np.inf), lambda y: np.zeros_like(y), 1.0, (np.zeros(2), np.ones(2)))


@settings(max_examples=50, deadline=None)
@given(prob_vectors(4), prob_vectors(4))
def test_renyi_small_order_limit(p, q):
    # symmetric finite-s extrapolation cancels the first-order term
    avg = 0.5 * (renyi_divergence(p, q, 1e-3) + renyi_divergence(p, q, -1e-3))
    assert avg == pytest.approx(kl_divergence(p, q), abs=1e-4)


@settings(max_examples=50, deadline=None)
@given(prob_vectors(5), prob_vectors(5))
def test_renyi_monotone_in_order(p, q):
    vals = [renyi_divergence(p, q, s) for s in (-0.5, 0.5, 1.0, 2.0)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@settings(max_examples=50, deadline=None)
@given(prob_vectors(4), prob_vectors(4))
def test_data_processing(p, q):
    merge = lambda v: np.array([v[0] + v[1], v[2], v[3]])
    assert kl_divergence(merge(p), merge(q)) <= kl_divergence(p, q) + 1e-12
    assert renyi_divergence(merge(p), merge(q), 1.0) <= renyi_divergence(p, q, 1.0) + 1e-12


# --- channel quantities ----------------------------------------------------

def test_bsc_oracles():
    pt = bsc(0.1)
    assert gallager_s_info(UNIFORM, pt, 0.0) == 0.0
    # closed two-output sum: -(1/2) log sum_y (sum_x W^{1/2}/2)^2
    direct = -0.5 * math.log(2 * (0.5 * math.sqrt(0.9) + 0.5 * math.sqrt(0.1)) ** 2)
    assert gallager_s_info(UNIFORM, pt, 0.5) == pytest.approx(direct, abs=1e-12)
    assert direct == pytest.approx(-0.5 * math.log(0.8), abs=1e-12)
    assert mutual_information(UNIFORM, pt) == pytest.approx(I_BSC, abs=1e-12)
    assert dispersion(UNIFORM, pt) == pytest.approx(V_BSC, abs=1e-12)
    # rendered values quoted alongside the closed forms
    assert mutual_information(UNIFORM, pt) == pytest.approx(0.368064, abs=1e-6)
    assert dispersion(UNIFORM, pt) == pytest.approx(0.434502, abs=1e-6)


def test_identical_rows_and_point_mass():
    fam = make_dmc_family(2, 2)
    same = fam.point([0.3, -0.2, 0.3, -0.2])
    for s in (0.2, 0.5, 0.9):
        assert gallager_s_info([0.4, 0.6], same, s) == pytest.approx(0.0, abs=1e-13)
    assert mutual_information([0.4, 0.6], same) == pytest.approx(0.0, abs=1e-13)
    assert dispersion([0.4, 0.6], same) == pytest.approx(0.0, abs=1e-13)
    assert mutual_information([1.0, 0.0], bsc(0.1)) == 0.0


def test_gaussian_quantities_match_adaptive():
    fam = make_gaussian_fading([-1.0, 1.0])
    pt = fam.point(gaussian_theta(1.0, 0.0, 1.0))
    fast = gallager_s_info(UNIFORM, pt, 0.5, check=False)
    checked = gallager_s_info(UNIFORM, pt, 0.5)
    assert fast == pytest.approx(checked, abs=1e-8)
    assert 0 < mutual_information(UNIFORM, pt) < math.log(2)


def test_gaussian_dispersion_monte_carlo():
    fam = make_gaussian_fading([-1.0, 1.0])
    pt = fam.point(gaussian_theta(0.8, 0.1, 1.0))
    rng = np.random.default_rng(0)
    n = 1_000_000
    x = rng.integers(2, size=n)
    y = np.where(x == 0, sample_output(pt, 0, rng, n), sample_output(pt, 1, rng, n))
    logs = np.stack([log_density(pt, 0, y), log_density(pt, 1, y)])
    dens = logs[x, np.arange(n)] - logsumexp(logs + math.log(0.5), axis=0)
    assert dispersion(UNIFORM, pt) == pytest.approx(np.var(dens), rel=0.01)


@pytest.mark.parametrize("fam", builtin_families(), ids=lambda f: f"{f.name}-{f.d}")
def test_s_info_concave(fam):
    rng = np.random.default_rng(1)
    s = np.linspace(0, 1, 101)[:-1] if not fam.output.is_finite else np.linspace(0, 1, 101)
    for _ in range(10):
        pt = random_point(fam, rng)
        P = rng.dirichlet(np.ones(fam.d))
        tab = ChannelTable(P, pt, order=32)
        vals = np.array([tab.s_info(v) for v in s])
        assert np.all(np.diff(vals, 2) <= 1e-9)


def test_small_s_limit_finite():
    rng = np.random.default_rng(2)
    fam = make_dmc_family(3, 2)
    for _ in range(10):
        pt = random_point(fam, rng)
        P = rng.dirichlet(np.ones(3))
        assert gallager_s_info(P, pt, 1e-3) / 1e-3 == pytest.approx(mutual_information(P, pt), abs=1e-3)


# --- exponent bound and optimal threshold -----------------------------------

S_GRID = np.linspace(0, 1, 2001)


def _s_table(P, pt, s=S_GRID):
    tab = ChannelTable(P, pt)
    return np.array([tab.s_info(v) for v in s])


def test_exponent_bound_grid():
    pt = bsc(0.1)
    rep = exponent_lower_bound(UNIFORM, pt, RateParameters(R=0.2, R1=0.3))
    inner = np.max(_s_table(UNIFORM, pt) - S_GRID * 0.3)
    assert rep.bound == pytest.approx(max(0.0, min(inner, 0.1)), abs=1e-6)
    assert 0 <= rep.s_star <= 1


def test_exponent_bound_cases():
    pt = bsc(0.1)
    assert exponent_lower_bound(UNIFORM, pt, RateParameters(R=0.3, R1=0.4)).bound == 0.0
    small = exponent_lower_bound(UNIFORM, pt, RateParameters(R=0.05, R1=0.051))
    assert small.bound == pytest.approx(0.001, abs=1e-12)
    with pytest.raises(DomainError):
        exponent_lower_bound(UNIFORM, pt, RateParameters(R=0.2, R1=0.1))


def _grid_max_min(svals, R, I, sgrid, lo=None, hi=None, levels=3):
    """Max over R1 of min(max_s(sI - s R1), R1 - R) by nested zooming 400 x 400 grids."""
    lo, hi = (R, I) if lo is None else (lo, hi)
    best = None
    for _ in range(levels):
        r1 = np.linspace(lo, hi, 400)
        inner = np.max(svals[None, :] - sgrid[None, :] * r1[:, None], axis=1)
        obj = np.minimum(inner, r1 - R)
        j = int(np.argmax(obj))
        best = obj[j]
        step = (hi - lo) / 399
        lo, hi = r1[max(j - 1, 0)], r1[min(j + 1, 399)]
    return best, r1[j]


def test_optimal_r1_grid_bsc():
    pt = bsc(0.1)
    R1, bound = optimal_r1(UNIFORM, pt, 0.2)
    sgrid = np.linspace(0, 1, 400)
    best, r1 = _grid_max_min(_s_table(UNIFORM, pt, sgrid), 0.2, I_BSC, sgrid)
    assert bound == pytest.approx(best, abs=1e-4)
    assert R1 == pytest.approx(r1, abs=1e-3)
    assert R1 - 0.2 == pytest.approx(bound, abs=1e-12)


def test_optimal_r1_identity_random():
    rng = np.random.default_rng(3)
    fam = make_dmc_family(2, 2)
    sgrid = np.linspace(0, 1, 400)
    done = 0
    while done < 20:
        pt = random_point(fam, rng)
        P = rng.dirichlet(np.ones(2))
        I = mutual_information(P, pt)
        if I < 0.02:
            continue
        R = rng.uniform(0.05, 0.9) * I
        _, bound = optimal_r1(P, pt, R)
        best, _ = _grid_max_min(_s_table(P, pt, sgrid), R, I, sgrid)
        assert bound == pytest.approx(best, abs=1e-4)
        done += 1


def test_optimal_r1_degenerate_and_singleton():
    pt = bsc(0.1)
    assert optimal_r1(UNIFORM, pt, 0.5) == (0.5, 0.0)
    assert optimal_r1(UNIFORM, [pt], 0.2) == optimal_r1(UNIFORM, pt, 0.2)


def test_optimal_r1_worst_case_grid():
    pts = [bsc(0.05), bsc(0.15)]
    R1, bound = optimal_r1(UNIFORM, pts, 0.1)
    assert bound == pytest.approx(min(optimal_r1(UNIFORM, p, 0.1)[1] for p in pts), abs=1e-12)


def test_gallager_exponent_dominates():
    pt = bsc(0.1)
    _, universal = optimal_r1(UNIFORM, pt, 0.2)
    assert gallager_exponent(UNIFORM, pt, 0.2) >= universal


def test_golden_max_endpoints():
    assert golden_max(lambda s: -s)[0] == 0.0
    assert golden_max(lambda s: s)[0] == 1.0
    s, v = golden_max(lambda s: -(s - 0.3) ** 2)
    assert s == pytest.approx(0.3, abs=1e-6) and v == pytest.approx(0.0, abs=1e-12)


# --- compound design --------------------------------------------------------

def test_compound_design_examples():
    fam = make_dmc_family(2, 1)
    single = compound_design(fam, [bsc(0.1)], 0.2, "M2", [UNIFORM, [0.3, 0.7]])
    assert single.bound == pytest.approx(optimal_r1(UNIFORM, bsc(0.1), 0.2)[1], abs=1e-12)
    pts = [bsc(0.05), bsc(0.15)]
    two = compound_design(fam, pts, 0.1, "M2", [UNIFORM])
    assert two.bound == pytest.approx(min(optimal_r1(UNIFORM, p, 0.1)[1] for p in pts), abs=1e-12)
    m1 = compound_design(fam, pts, 0.1, "M1", [UNIFORM])
    worst = min(mutual_information(UNIFORM, p) for p in pts)
    assert m1.R1 == pytest.approx(0.5 * (0.1 + worst), abs=1e-12)
    assert 0 < m1.bound <= two.bound + 1e-12
    with pytest.raises(DesignError):
        compound_design(fam, pts, 0.3, "M1", [UNIFORM])
    with pytest.raises(DomainError):
        compound_design(fam, pts, 0.1, "M3", [UNIFORM])


# --- second order -----------------------------------------------------------

def test_second_order_examples():
    pt = bsc(0.1)
    assert second_order_bound(UNIFORM, pt, 0.0).epsilon == pytest.approx(0.5)
    assert second_order_bound(UNIFORM, pt, -50.0).epsilon < 1e-12
    R2 = second_order_rate(UNIFORM, pt, 0.1)
    assert R2 == pytest.approx(norm.ppf(0.1) * math.sqrt(V_BSC), abs=1e-10)
    assert R2 == pytest.approx(-0.844757, abs=1e-6)
    assert second_order_bound(UNIFORM, pt, R2).epsilon == pytest.approx(0.1, abs=1e-12)
    assert second_order_bound(UNIFORM, pt, 0.0, R1_star=0.3).epsilon == 0.0
    assert second_order_bound(UNIFORM, pt, 0.0, R1_star=0.4).epsilon == 1.0


def test_second_order_needs_positive_dispersion():
    same = make_dmc_family(2, 1).point([0.2, 0.2])
    with pytest.raises(DomainError):
        second_order_bound(UNIFORM, same, 0.0)


def test_local_shift():
    fam = make_dmc_family(2, 1)
    t1 = np.array([math.log(1 / 9), math.log(9)])
    t2 = np.array([0.7, -0.4])
    assert local_shift(UNIFORM, fam, t1, [0.0, 0.0]) == 0.0
    f1 = local_shift(UNIFORM, fam, t1, t2)
    assert local_shift(UNIFORM, fam, t1, 2 * t2) == pytest.approx(2 * f1, abs=1e-8)
    h = 1e-5
    fd = (mutual_information(UNIFORM, fam.point(t1 + h * t2)) - mutual_information(UNIFORM, fam.point(t1 - h * t2))) / (2 * h)
    assert f1 == pytest.approx(fd, abs=1e-5)
    with pytest.raises(DomainError):
        local_shift(UNIFORM, fam, [6.0, 0.0], t2)
