"""Method of types: compositions, type classes, conditional types and
constant-composition codebooks with packing verification."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, DomainError

ENUMERATION_CAP = 10**6
EXHAUSTIVE_MAX_N = 10
EXHAUSTIVE_MAX_D = 3


@dataclass(frozen=True)
class CompositionType:
    """Empirical distribution of a length-n word, stored as integer counts."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) < 1 or any(c < 0 for c in counts):
            raise DomainError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def distribution(self) -> np.ndarray:
        return np.asarray(self.counts, float) / self.n

    @property
    def entropy(self) -> float:
        p = self.distribution
        p = p[p > 0]
        return float(-np.sum(p * np.log(p)))

    def __iter__(self):
        return iter(self.counts)

    def __getitem__(self, i):
        return self.counts[i]

    def __repr__(self):
        return f"CompositionType{self.counts}"


def type_of(word: Sequence[int], d: int) -> CompositionType:
    word = np.asarray(word, dtype=np.intp)
    return CompositionType(tuple(np.bincount(word, minlength=d)[:d]))


def _compositions(n: int, d: int) -> Iterator[tuple]:
    if d == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, d - 1):
            yield (first,) + rest


def count_types(n: int, d: int) -> int:
    """|T_n(X)| = C(n+d-1, d-1)."""
    return math.comb(n + d - 1, d - 1)


def enumerate_types(n: int, d: int, cap: int = ENUMERATION_CAP) -> list:
    """All compositions of n into d parts in lexicographic order of counts."""
    if n < 1 or d < 2:
        raise DomainError("need n >= 1 and d >= 2")
    if n * d > cap or count_types(n, d) > cap:
        raise CapacityError(f"type enumeration for n={n}, d={d} exceeds cap {cap}")
    return [CompositionType(c) for c in sorted(_compositions(n, d))]


def round_to_type(P: Sequence[float], n: int) -> CompositionType:
    """Closest type to P in total variation; leftover units go to the largest
    fractional parts, ties to the lowest input index."""
    p = np.asarray(P, float)
    if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise DomainError("P must be a probability vector")
    target = p * n
    base = np.floor(target + 1e-12).astype(int)
    base = np.minimum(base, n)
    frac = target - base
    left = n - int(base.sum())
    # stable sort on -frac keeps lower indices first among ties
    order = sorted(range(p.size), key=lambda i: (-round(frac[i], 12), i))
    for i in order[:left]:
        base[i] += 1
    return CompositionType(tuple(base))


@dataclass(frozen=True)
class TypeClassSize:
    size: Optional[int]
    log_size: float
    log_c: float
    c_bound_holds: bool


def log_multinomial(counts) -> float:
    counts = np.asarray(counts, float)
    return float(gammaln(counts.sum() + 1) - np.sum(gammaln(counts + 1)))


def type_class_size(P: CompositionType) -> TypeClassSize:
    """|T_P|, its log, and log c_{n,P} where c_{n,P} = e^{nH(P)} / |T_P|.

    The exact integer is only reported for n <= 170.
    """
    n = P.n
    log_size = log_multinomial(P.counts)
    size = None
    if n <= 170:
        size = math.factorial(n)
        for c in P.counts:
            size //= math.factorial(c)
        log_size = math.log(size)
    log_c = n * P.entropy - log_size
    holds = log_c <= math.log(count_types(n, P.d)) + 1e-12
    return TypeClassSize(size, log_size, log_c, holds)


def type_class_words(P: CompositionType) -> np.ndarray:
    """All words of composition P in lexicographic order (small n only)."""
    words = []
    n = P.n

    def rec(prefix, remaining):
        if len(prefix) == n:
            words.append(tuple(prefix))
            return
        for x, r in enumerate(remaining):
            if r:
                remaining[x] -= 1
                prefix.append(x)
                rec(prefix, remaining)
                prefix.pop()
                remaining[x] += 1

    total = type_class_size(P).log_size
    if total > math.log(ENUMERATION_CAP):
        raise CapacityError("type class too large to enumerate")
    rec([], list(P.counts))
    return np.array(words, dtype=np.int8).reshape(len(words), n)


def random_type_class_word(P: CompositionType, rng: np.random.Generator) -> np.ndarray:
    word = np.repeat(np.arange(P.d, dtype=np.int8), P.counts)
    rng.shuffle(word)
    return word


# ---------------------------------------------------------------------------
# conditional types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalType:
    """V = (v_0, ..., v_{d-1}): v_a is the composition of the second word on the
    positions where the reference word equals a.  Stored as a d x d count table."""

    table: tuple

    @classmethod
    def of(cls, reference, other, d: int) -> "ConditionalType":
        reference = np.asarray(reference, dtype=np.intp)
        other = np.asarray(other, dtype=np.intp)
        tab = np.zeros((d, d), dtype=int)
        np.add.at(tab, (reference, other), 1)
        return cls(tuple(map(tuple, tab)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=int)

    @property
    def is_identity(self) -> bool:
        a = self.array
        return bool(np.all(a == np.diag(np.diag(a))))

    def log_shell_size(self) -> float:
        """log |T_V(x^n)| = sum_a log multinomial(v_a)."""
        return float(sum(log_multinomial(row) for row in self.array))


def conditional_type_counts(reference, words, d: int) -> np.ndarray:
    """Per-word d x d conditional-type tables relative to ``reference``."""
    reference = np.asarray(reference, dtype=np.intp)
    words = np.asarray(words, dtype=np.intp)
    out = np.zeros((words.shape[0], d, d), dtype=int)
    for a in range(d):
        cols = words[:, reference == a]
        for b in range(d):
            out[:, a, b] = np.sum(cols == b, axis=1)
    return out


# ---------------------------------------------------------------------------
# codebooks
# ---------------------------------------------------------------------------


def message_count(n: int, R: float) -> int:
    """M_n = max(2, floor(exp(nR - n^{1/4})))."""
    expo = n * R - n**0.25
    if expo > 700:
        raise CapacityError(f"codebook size e^{expo:.1f} is not representable")
    return max(2, int(math.floor(math.exp(expo) + 1e-9)))


def log_message_count(n: int, R: float) -> float:
    """log M_n without materialising the integer (floor/minimum ignored above e^30)."""
    expo = n * R - n**0.25
    if expo < 30:
        return math.log(max(2, int(math.floor(math.exp(expo) + 1e-9))))
    return expo


@dataclass(frozen=True, eq=False)
class Codebook:
    """Ordered distinct constant-composition codewords (rows of ``words``)."""

    n: int
    P: CompositionType
    words: np.ndarray
    R: float
    R1: Optional[float] = None
    packing_verified: Optional[bool] = None

    def __post_init__(self):
        words = np.array(self.words, dtype=np.int8)
        if words.ndim != 2 or words.shape[1] != self.n:
            raise DomainError("codewords must form an (M, n) array")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @property
    def M(self) -> int:
        return self.words.shape[0]

    def __len__(self):
        return self.M

    def to_text(self) -> str:
        """One codeword per line, symbols as space-separated integers."""
        header = f"# n={self.n} P={','.join(map(str, self.P.counts))} R={self.R!r} R1={self.R1!r}\n"
        return header + "".join(" ".join(map(str, row)) + "\n" for row in self.words.tolist())

    @classmethod
    def from_text(cls, text: str) -> "Codebook":
        meta = {}
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    meta[key] = val
                continue
            rows.append([int(t) for t in line.split()])
        words = np.array(rows, dtype=np.int8)
        n = int(meta.get("n", words.shape[1]))
        if "P" in meta:
            P = CompositionType(tuple(int(c) for c in meta["P"].split(",")))
        else:
            P = type_of(words[0], int(words.max()) + 1)
        R1 = meta.get("R1", "None")
        return cls(n, P, words, float(meta.get("R", "nan")), None if R1 == "None" else float(R1))


def packing_violations(words: np.ndarray, P: CompositionType, R: float) -> np.ndarray:
    """Indices of codewords x^n for which some non-identity conditional type V has
    |T_V(x^n) cap (M \\ {x^n})| > |T_V(x^n)| e^{-n(H(P)-R)}."""
    n = P.n
    d = P.d
    slack = -n * (P.entropy - R)
    bad = []
    for i, ref in enumerate(words):
        tabs = conditional_type_counts(ref, np.delete(words, i, axis=0), d)
        hits = Counter(tuple(t.ravel()) for t in tabs)
        for key, count in hits.items():
            V = np.asarray(key).reshape(d, d)
            log_shell = sum(log_multinomial(row) for row in V)
            if math.log(count) > log_shell + slack + 1e-12:
                bad.append(i)
                break
    return np.asarray(bad, dtype=int)


def build_codebook(P: CompositionType, R: float, rng: np.random.Generator, verify: bool = False,
                   max_retries: int = 200, M: Optional[int] = None) -> Codebook:
    """Draw M_n distinct words uniformly without replacement from T_P.

    With ``verify`` the packing inequality is checked exhaustively and
    violating codewords are redrawn up to ``max_retries`` times.  Failure to
    reach a packing codebook is reported in ``packing_verified`` rather than
    raised.
    """
    n = P.n
    if M is None:
        M = message_count(n, R)
    tsize = type_class_size(P)
    if math.log(M) > tsize.log_size + 1e-9:
        raise CapacityError(f"M_n={M} exceeds |T_P|={tsize.size}")
    if verify and (n > EXHAUSTIVE_MAX_N or P.d > EXHAUSTIVE_MAX_D):
        raise CapacityError("packing verification is exhaustive and limited to n <= 10, d <= 3")

    if tsize.size is not None and tsize.size <= 4 * M and tsize.size <= ENUMERATION_CAP:
        pool = type_class_words(P)
        idx = rng.choice(pool.shape[0], size=M, replace=False)
        words = pool[idx]
    else:
        seen = set()
        rows = []
        while len(rows) < M:
            w = random_type_class_word(P, rng)
            key = w.tobytes()
            if key not in seen:
                seen.add(key)
                rows.append(w)
        words = np.array(rows, dtype=np.int8)

    verified = None
    if verify:
        verified = False
        for _ in range(max_retries + 1):
            bad = packing_violations(words, P, R)
            if bad.size == 0:
                verified = True
                break
            used = {w.tobytes() for w in words}
            for i in bad:
                while True:
                    w = random_type_class_word(P, rng)
                    if w.tobytes() not in used:
                        used.discard(words[i].tobytes())
                        used.add(w.tobytes())
                        words[i] = w
                        break
    return Codebook(n, P, words, R, packing_verified=verified)


def _multiset_permutations(values) -> list:
    """Distinct orderings of a multiset (lexicographic)."""
    values = sorted(values)
    out = []

    def rec(prefix, counter):
        if len(prefix) == len(values):
            out.append(tuple(prefix))
            return
        for v in sorted(counter):
            if counter[v]:
                counter[v] -= 1
                prefix.append(v)
                rec(prefix, counter)
                prefix.pop()
                counter[v] += 1

    rec([], Counter(values))
    return out


def stabilizer_orbit(reference, other) -> np.ndarray:
    """Orbit of ``other`` under permutations fixing ``reference``.

    The orbit is enumerated block by block (positions sharing a reference
    symbol), one representative per coset, never over all n! permutations.
    """
    reference = np.asarray(reference, dtype=np.intp)
    other = np.asarray(other, dtype=np.intp)
    blocks = [np.flatnonzero(reference == a) for a in np.unique(reference)]
    per_block = [_multiset_permutations(other[b]) for b in blocks]
    n = reference.size
    orbit = []
    for combo in itertools.product(*per_block):
        w = np.empty(n, dtype=np.intp)
        for b, vals in zip(blocks, combo):
            w[b] = vals
        orbit.append(w)
    return np.array(orbit)


def group_average_bound_check(codebook: Codebook, other, reference=None) -> float:
    """Ratio of the stabilizer average of P_M at ``other`` to
    (1/c_{n,P}) P_{T_P}(other) e^{n^{1/4}} = e^{-nH(P) + n^{1/4}}.

    ``reference`` defaults to the first codeword.  A packing-verified codebook
    yields a ratio <= 1 for every ``other`` != reference in T_P.
    """
    n = codebook.n
    P = codebook.P
    if n > EXHAUSTIVE_MAX_N or P.d > EXHAUSTIVE_MAX_D:
        raise CapacityError("group average is exhaustive and limited to n <= 10, d <= 3")
    reference = codebook.words[0] if reference is None else np.asarray(reference)
    other = np.asarray(other, dtype=np.intp)
    if type_of(other, P.d) != P:
        raise DomainError("the second word must lie in T_P")
    orbit = stabilizer_orbit(reference, other)
    code_keys = {tuple(int(v) for v in w) for w in codebook.words}
    hits = sum(tuple(int(v) for v in w) in code_keys for w in orbit)
    lhs = hits / (orbit.shape[0] * codebook.M)
    log_rhs = -n * P.entropy + n**0.25
    return lhs / math.exp(log_rhs)
