import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from univcode.combinatorics import (Codebook, CompositionType, ConditionalType, build_codebook, conditional_type_counts,
                                    count_types, enumerate_types, group_average_bound_check, log_message_count,
                                    message_count, packing_violations, random_type_class_word, round_to_type,
                                    stabilizer_orbit, type_class_size, type_class_words, type_of)
from univcode.errors import CapacityError, DomainError


def test_type_counts():
    assert len(enumerate_types(4, 2)) == 5
    assert len(enumerate_types(2, 3)) == 6
    assert all(t.n == 4 for t in enumerate_types(4, 2))
    assert count_types(20, 2) == 21


def test_enumeration_cap():
    with pytest.raises(CapacityError):
        enumerate_types(1000, 3, cap=10**4)


def test_round_to_type_examples():
    assert round_to_type([0.5, 0.5], 4).counts == (2, 2)
    assert round_to_type([1 / 3, 2 / 3], 4).counts == (1, 3)
    assert round_to_type([1.0, 0.0], 7).counts == (7, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=4), st.integers(1, 12))
def test_round_to_type_is_tv_closest(raw, n):
    p = np.asarray(raw) / np.sum(raw)
    t = round_to_type(p, n)
    assert t.n == n
    best = min(np.abs(np.asarray(c) / n - p).sum() for c in itertools.product(range(n + 1), repeat=p.size) if sum(c) == n)
    assert np.abs(t.distribution - p).sum() <= best + 1e-9


def test_type_class_sizes():
    assert type_class_size(CompositionType((2, 2))).size == 6
    assert type_class_size(CompositionType((1, 3))).size == 4
    big = type_class_size(CompositionType((10, 10)))
    assert math.exp(big.log_c) <= 21 and big.c_bound_holds
    huge = type_class_size(CompositionType((100, 100)))
    assert huge.size is None and huge.log_size == pytest.approx(math.lgamma(201) - 2 * math.lgamma(101))


@pytest.mark.parametrize("n,d", [(6, 2), (9, 3), (20, 2), (20, 3)])
def test_type_class_sizes_sum_to_all_words(n, d):
    assert sum(type_class_size(t).size for t in enumerate_types(n, d)) == d ** n


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=2, max_size=3).filter(lambda c: sum(c) > 0))
def test_uniform_on_type_class_identity(counts):
    # P_{T_P}(x) / c_{n,P} = e^{-n H(P)} for x in T_P
    P = CompositionType(tuple(counts))
    ts = type_class_size(P)
    assert -ts.log_size - ts.log_c == pytest.approx(-P.n * P.entropy, abs=1e-10)
    assert ts.c_bound_holds


def test_type_class_words_and_sampling():
    P = CompositionType((2, 1, 1))
    words = type_class_words(P)
    assert words.shape == (12, 4)
    assert len({w.tobytes() for w in words}) == 12
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert type_of(random_type_class_word(P, rng), 3) == P


def test_conditional_types():
    ref = np.array([0, 0, 1, 1, 1])
    other = np.array([0, 1, 1, 0, 0])
    V = ConditionalType.of(ref, other, 2)
    assert V.table == ((1, 1), (2, 1))
    assert not V.is_identity
    assert ConditionalType.of(ref, ref, 2).is_identity
    assert V.log_shell_size() == pytest.approx(math.log(2) + math.log(3))
    tabs = conditional_type_counts(ref, np.stack([other, ref]), 2)
    assert np.array_equal(tabs[0], V.array) and np.array_equal(tabs[1], np.diag([2, 3]))


def test_message_count():
    assert message_count(4, 0.01) == 2
    assert message_count(8, (math.log(4.5) + 8 ** 0.25) / 8) == 4
    assert log_message_count(1000, 0.5) == pytest.approx(500 - 1000 ** 0.25)
    with pytest.raises(CapacityError):
        message_count(10_000, 0.5)


def test_codebook_small():
    P = CompositionType((2, 2))
    cb = build_codebook(P, 0.01, np.random.default_rng(1))
    assert cb.M == 2
    assert cb.words[0].tobytes() != cb.words[1].tobytes()
    assert all(type_of(w, 2) == P for w in cb.words)


def test_codebook_too_large():
    with pytest.raises(CapacityError):
        build_codebook(CompositionType((2, 2)), 0.01, np.random.default_rng(0), M=7)


def test_codebook_determinism_and_text_round_trip():
    P = CompositionType((6, 4))
    a = build_codebook(P, 0.4, np.random.default_rng(11))
    b = build_codebook(P, 0.4, np.random.default_rng(11))
    assert np.array_equal(a.words, b.words)
    back = Codebook.from_text(a.to_text())
    assert np.array_equal(back.words, a.words) and back.P == P and back.R == a.R


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(5, 5), (3, 4, 3), (8, 2)]))
def test_codebook_words_distinct_and_constant_composition(seed, counts):
    P = CompositionType(counts)
    cb = build_codebook(P, 0.3, np.random.default_rng(seed))
    assert len({w.tobytes() for w in cb.words}) == cb.M
    assert all(type_of(w, P.d) == P for w in cb.words)


def _brute_packing_ok(words, P, R):
    """Independent oracle: for every codeword and every word of T_P, compare
    the number of other codewords sharing its conditional type with the shell size."""
    n = P.n
    pool = type_class_words(P)
    for i, ref in enumerate(words):
        shell = {}
        for w in pool:
            key = tuple(ConditionalType.of(ref, w, P.d).table)
            shell[key] = shell.get(key, 0) + 1
        for key, size in shell.items():
            if ConditionalType(key).is_identity:
                continue
            hits = sum(tuple(ConditionalType.of(ref, w, P.d).table) == key for j, w in enumerate(words) if j != i)
            if hits > size * math.exp(-n * (P.entropy - R)) + 1e-12:
                return False
    return True


def test_packing_verification_n8():
    P = CompositionType((4, 4))
    R = (math.log(4.5) + 8 ** 0.25) / 8
    cb = build_codebook(P, R, np.random.default_rng(3), verify=True)
    assert cb.M == 4 and cb.packing_verified
    assert _brute_packing_ok(cb.words, P, R)
    assert packing_violations(cb.words, P, R).size == 0


def test_packing_detects_violation():
    P = CompositionType((4, 4))
    words = type_class_words(P)[:20]
    assert packing_violations(words, P, 0.01).size > 0
    assert not _brute_packing_ok(words, P, 0.01)


def test_verify_cap():
    with pytest.raises(CapacityError):
        build_codebook(CompositionType((6, 6)), 0.3, np.random.default_rng(0), verify=True)


def test_stabilizer_orbit_size():
    ref = np.array([0, 0, 1, 1, 1, 0])
    other = np.array([0, 1, 1, 0, 1, 0])
    orbit = stabilizer_orbit(ref, other)
    # positions of ref==0 hold {0,1,0}, ref==1 hold {1,0,1}: 3 * 3 arrangements
    assert orbit.shape == (9, 6)
    for w in orbit:
        assert ConditionalType.of(ref, w, 2) == ConditionalType.of(ref, other, 2)


def test_group_average_full_codebook_finite():
    P = CompositionType((2, 2))
    cb = Codebook(4, P, type_class_words(P), 0.1)
    r = group_average_bound_check(cb, [1, 1, 0, 0], reference=cb.words[0])
    assert np.isfinite(r) and r > 0


def test_group_average_verified_codebook_below_one():
    P = CompositionType((4, 4))
    R = (math.log(4.5) + 8 ** 0.25) / 8
    cb = build_codebook(P, R, np.random.default_rng(3), verify=True)
    ref = cb.words[0]
    ratios = [group_average_bound_check(cb, w, reference=ref)
              for w in type_class_words(P) if w.tobytes() != ref.tobytes()]
    assert max(ratios) <= 1.0


def test_group_average_single_word_outside_orbit():
    P = CompositionType((2, 2))
    cb = Codebook(4, P, np.array([[0, 0, 1, 1]]), 0.0)
    # [0,1,1,0] relative to ref [0,0,1,1] has conditional type with one swap; the codeword itself is not in that orbit
    assert group_average_bound_check(cb, [0, 1, 1, 0], reference=[0, 0, 1, 1]) == 0.0


def test_group_average_rejects_wrong_composition():
    P = CompositionType((2, 2))
    cb = Codebook(4, P, type_class_words(P), 0.1)
    with pytest.raises(DomainError):
        group_average_bound_check(cb, [1, 1, 1, 0])
