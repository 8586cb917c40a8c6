"""Set partitions, non-crossing partitions and moment/cumulant conversions.

Indices in :class:`Partition` are 1-based to match the usual block
notation ``{{1,3},{2}}``.  Moment and cumulant sequences are plain Python
lists indexed from 1 (``values[0]`` is the first moment).

The conversions never build the Moebius function of NC(n).  They peel off
the one-block term using the first-block decomposition of a non-crossing
partition, which costs O(n^3) instead of |NC(n)|.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Hashable, Iterator, Mapping, Sequence

__all__ = [
    "Partition",
    "NestingTree",
    "enumerate_partitions",
    "enumerate_nc",
    "is_noncrossing",
    "moments_to_free_cumulants",
    "free_cumulants_to_moments",
    "moments_to_classical_cumulants",
    "classical_cumulants_to_moments",
    "free_mixed_moment",
    "gaussian_pairing_count",
    "nesting_tree",
    "catalan",
]

MAX_PARTITIONS_N = 12
MAX_NC_N = 14
BRUTE_FORCE_NC_BELOW = 10


@dataclass(frozen=True)
class Partition:
    """A partition of ``{1, ..., n}`` with blocks sorted by minimum."""

    n: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks), key=lambda b: b[0] if b else 0))
        if any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be nonempty")
        flat = sorted(i for b in blocks for i in b)
        if flat != list(range(1, self.n + 1)):
            raise ValueError(f"blocks {blocks} do not partition 1..{self.n}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def _trusted(cls, n: int, blocks: tuple) -> "Partition":
        # caller guarantees canonical, valid blocks
        obj = object.__new__(cls)
        object.__setattr__(obj, "n", n)
        object.__setattr__(obj, "blocks", blocks)
        return obj

    @classmethod
    def from_rgs(cls, rgs: Sequence[int]) -> "Partition":
        """From a restricted-growth string (``rgs[i]`` is the block of ``i+1``)."""
        groups: dict[int, list[int]] = {}
        for i, label in enumerate(rgs, start=1):
            groups.setdefault(label, []).append(i)
        return cls(len(rgs), tuple(tuple(g) for g in groups.values()))

    def block_sizes(self) -> tuple:
        return tuple(len(b) for b in self.blocks)

    def block_of(self) -> list:
        """``out[i-1]`` is the index of the block containing ``i``."""
        out = [0] * self.n
        for k, b in enumerate(self.blocks):
            for i in b:
                out[i - 1] = k
        return out

    def is_noncrossing(self) -> bool:
        return is_noncrossing(self)

    def __str__(self):
        return "{" + ",".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks) + "}"


def _check_range(n: int, hi: int) -> None:
    if not isinstance(n, int) or not 1 <= n <= hi:
        raise ValueError(f"n must be an integer in [1, {hi}], got {n!r}")


def _rgs(n: int) -> Iterator[list]:
    """Restricted-growth strings of length n in lexicographic order."""
    a = [0] * n
    yield list(a)
    if n == 1:
        return
    m = [0] * n  # m[i] = max(a[:i])
    while True:
        i = n - 1
        while i > 0 and a[i] == m[i] + 1:
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, n):
            a[j] = 0
            m[j] = max(m[j - 1], a[j - 1])
        yield list(a)


def enumerate_partitions(n: int) -> list:
    """All of P(n), ``1 <= n <= 12``, in restricted-growth-string order."""
    _check_range(n, MAX_PARTITIONS_N)
    return [Partition.from_rgs(s) for s in _rgs(n)]


def is_noncrossing(pi: Partition) -> bool:
    """No ``p1 < q1 < p2 < q2`` with p's in one block and q's in another."""
    label = pi.block_of()
    # a partition is non-crossing iff scanning left to right, each block
    # closes before any block opened after it reopens: a stack check on
    # the sequence of (first, last) spans plus interleaving
    last = {}
    for i, b in enumerate(label):
        last[b] = i
    stack: list[int] = []
    for i, b in enumerate(label):
        if stack and stack[-1] == b:
            pass
        elif b in stack:
            return False
        else:
            stack.append(b)
        if last[b] == i:
            stack.pop()
    return True


def _nc_direct(n: int) -> list:
    """Non-crossing partitions via the first-block recursion."""

    @lru_cache(maxsize=None)
    def build(lo: int, hi: int) -> tuple:
        # NC partitions of the interval lo..hi (inclusive); tuples of blocks
        if lo > hi:
            return ((),)
        out = []
        rest = list(range(lo + 1, hi + 1))
        # choose the other legs of the block of `lo`; gaps are filled recursively
        for mask in range(1 << len(rest)):
            legs = [lo] + [rest[k] for k in range(len(rest)) if mask >> k & 1]
            gap_parts = [build(legs[k] + 1, legs[k + 1] - 1) for k in range(len(legs) - 1)]
            gap_parts.append(build(legs[-1] + 1, hi))
            combos = [()]
            for options in gap_parts:
                combos = [c + o for c in combos for o in options]
            out.extend((tuple(legs),) + c for c in combos)
        return tuple(out)

    # blocks come out sorted by minimum: gaps are filled left to right
    return [Partition._trusted(n, blocks) for blocks in build(1, n)]


def enumerate_nc(n: int) -> list:
    """All non-crossing partitions of ``{1..n}``, ``1 <= n <= 14``.

    Below n = 10 this filters :func:`enumerate_partitions`; above, the
    direct recursive generator is used.  Order is the restricted-growth
    order in both cases.
    """
    _check_range(n, MAX_NC_N)
    if n < BRUTE_FORCE_NC_BELOW:
        return [p for p in enumerate_partitions(n) if is_noncrossing(p)]
    parts = _nc_direct(n)
    parts.sort(key=lambda p: p.block_of())
    return parts


def catalan(n: int) -> int:
    """Catalan numbers by the convolution recurrence."""
    c = [1]
    for k in range(1, n + 1):
        c.append(sum(c[i] * c[k - 1 - i] for i in range(k)))
    return c[n]


# ---------------------------------------------------------------------------
# moments <-> cumulants


def _power_coeffs(m: Sequence[complex], upto: int) -> list:
    """powers[s][j] = coefficient of z^j in M(z)^s, for s, j <= upto."""
    # integer seeds keep exact inputs (ints, Fractions) exact
    M = [1] + list(m[:upto])
    M += [0] * (upto + 1 - len(M))
    powers = [[1] + [0] * upto]
    for _ in range(upto):
        prev = powers[-1]
        nxt = [sum(prev[i] * M[j - i] for i in range(j + 1)) for j in range(upto + 1)]
        powers.append(nxt)
    return powers


def moments_to_free_cumulants(m: Sequence[complex]) -> list:
    """Free cumulants kappa_1..kappa_n from moments m_1..m_n.

    Solves ``m_k = sum_{pi in NC(k)} kappa_pi`` triangularly: every
    non-crossing partition other than the one-block partition is counted
    through its first block, leaving kappa_k as the remainder.
    """
    n = len(m)
    if n > MAX_NC_N:
        raise ValueError(f"at most {MAX_NC_N} moments supported, got {n}")
    powers = _power_coeffs(m, n)
    kappa: list = []
    for k in range(1, n + 1):
        # sum over first blocks of size s < k of kappa_s * [z^{k-s}] M^s
        rest = sum(kappa[s - 1] * powers[s][k - s] for s in range(1, k))
        kappa.append(m[k - 1] - rest)
    return kappa


def free_cumulants_to_moments(kappa: Sequence[complex]) -> list:
    """Moments m_1..m_n from free cumulants via the first-block recursion

    ``m_n = sum_s kappa_s sum_{i_1+...+i_s = n-s} m_{i_1} ... m_{i_s}``.
    """
    n = len(kappa)
    if n > 30:
        raise ValueError(f"at most 30 cumulants supported, got {n}")
    m: list = []
    for k in range(1, n + 1):
        # the inner sums use only m_0..m_{k-1}
        powers = _power_coeffs(m, k)
        m.append(sum(kappa[s - 1] * powers[s][k - s] for s in range(1, k + 1)))
    return m


def moments_to_classical_cumulants(m: Sequence[complex]) -> list:
    """Classical cumulants from ``m_k = sum_{pi in P(k)} c_pi``.

    Uses the block of 1: ``m_k = sum_j C(k-1, j-1) c_j m_{k-j}``.
    """
    n = len(m)
    if n > MAX_PARTITIONS_N:
        raise ValueError(f"at most {MAX_PARTITIONS_N} moments supported, got {n}")
    mm = [1] + list(m)
    c: list = []
    for k in range(1, n + 1):
        rest = sum(comb(k - 1, j - 1) * c[j - 1] * mm[k - j] for j in range(1, k))
        c.append(mm[k] - rest)
    return c


def classical_cumulants_to_moments(c: Sequence[complex]) -> list:
    n = len(c)
    mm = [1]
    for k in range(1, n + 1):
        mm.append(sum(comb(k - 1, j - 1) * c[j - 1] * mm[k - j] for j in range(1, k + 1)))
    return mm[1:]


def free_mixed_moment(word: Sequence[Hashable],
                      moments: Mapping[Hashable, Sequence[complex]]) -> complex:
    """Mixed moment of a word in free variables from the marginal moments.

    Mixed free cumulants vanish, so only non-crossing partitions whose
    blocks each carry a single letter contribute; each such partition
    adds the product of the per-block free cumulants.
    """
    word = tuple(word)
    n = len(word)
    if n == 0:
        return 1.0
    if n > 12:
        raise ValueError("word length at most 12 supported")
    kappas = {}
    for letter in set(word):
        if letter not in moments:
            raise KeyError(f"no moments given for variable {letter!r}")
        need = word.count(letter)
        seq = list(moments[letter])
        if len(seq) < need:
            raise ValueError(f"variable {letter!r} needs {need} moments, got {len(seq)}")
        kappas[letter] = moments_to_free_cumulants(seq[:need])

    @lru_cache(maxsize=None)
    def interval(lo: int, hi: int) -> complex:
        # sum over single-letter NC partitions of positions lo..hi-1
        if lo >= hi:
            return 1.0
        letter = word[lo]
        kap = kappas[letter]
        total = 0.0
        same = [j for j in range(lo + 1, hi) if word[j] == letter]

        def extend(legs: list, k: int) -> complex:
            # legs fixed so far; options for the next leg are same[k:]
            s = 0.0
            # close the block here
            prod = kap[len(legs) - 1]
            for a, b in zip(legs, legs[1:]):
                prod *= interval(a + 1, b)
            if prod != 0:
                s += prod * interval(legs[-1] + 1, hi)
            for t in range(k, len(same)):
                s += extend(legs + [same[t]], t + 1)
            return s

        total = extend([lo], 0)
        return total

    return interval(0, n)


def gaussian_pairing_count(word: Sequence[Hashable]) -> int:
    """Number of non-crossing pairings of ``word`` joining equal letters only."""
    word = tuple(word)
    n = len(word)
    if n % 2:
        return 0
    if n > 24:
        raise ValueError("word length at most 24 supported")

    @lru_cache(maxsize=None)
    def count(lo: int, hi: int) -> int:
        if lo >= hi:
            return 1
        total = 0
        for k in range(lo + 1, hi, 2):
            if word[k] == word[lo]:
                total += count(lo + 1, k) * count(k + 1, hi)
        return total

    return count(0, n)


# ---------------------------------------------------------------------------
# nesting


@dataclass
class NestingTree:
    """Forest of blocks of a non-crossing partition ordered by nesting.

    ``children[k]`` lists, for each gap between consecutive legs of
    ``block``, the child subtrees sitting in that gap.
    """

    block: tuple
    children: list = field(default_factory=list)

    @property
    def child_blocks(self) -> list:
        return [c.block for gap in self.children for c in gap]

    def blocks(self) -> list:
        out = [self.block]
        for gap in self.children:
            for c in gap:
                out.extend(c.blocks())
        return out

    def bracket(self, labels: Sequence[str] | None = None, kappa: str = "κ") -> str:
        """Render as a nested cumulant expression, e.g. ``κ2(a1·κ1(a2),a3)``."""

        def lab(i):
            return labels[i - 1] if labels is not None else f"a{i}"

        args = []
        for k, leg in enumerate(self.block):
            parts = [lab(leg)]
            if k < len(self.children):
                parts.extend(c.bracket(labels, kappa) for c in self.children[k])
            args.append("·".join(parts))
        return f"{kappa}{len(self.block)}(" + ",".join(args) + ")"


def nesting_tree(pi: Partition) -> list:
    """Roots of the nesting forest of a non-crossing partition."""
    if not is_noncrossing(pi):
        raise ValueError(f"partition {pi} is crossing")
    nodes = {b: NestingTree(b, [[] for _ in range(len(b) - 1)]) for b in pi.blocks}
    roots = []
    for b in pi.blocks:  # sorted by minimum, so parents come first
        parent = None
        for w in pi.blocks:
            if w[0] < b[0] and w[-1] > b[-1]:
                if parent is None or w[0] > parent[0]:
                    parent = w
        if parent is None:
            roots.append(nodes[b])
        else:
            gap = max(k for k, leg in enumerate(parent) if leg < b[0])
            nodes[parent].children[gap].append(nodes[b])
    return roots


def forest_bracket(roots: Sequence[NestingTree], labels: Sequence[str] | None = None) -> str:
    return "·".join(r.bracket(labels) for r in roots)


def flatten_forest(roots: Sequence[NestingTree], n: int) -> Partition:
    blocks = [b for r in roots for b in r.blocks()]
    return Partition(n, tuple(blocks))
