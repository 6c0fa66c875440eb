"""Query-model layer: metered conditional-sampling oracles over exact tables.

Each oracle wraps one distribution behind one access model (subcube, prefix,
marginal prefix, interval, ...), owns a seeded RNG stream, and counts every
query by class.  Table-backed oracles additionally expose the exact
conditional probabilities they sample from; the testers' collapsed execution
mode relies on this introspection, while the sampled mode only ever consumes
served samples.

Batched helpers (``*_count``) serve the sum of m i.i.d. single-sample queries
with a single binomial draw.  The output distribution is identical to m
independent queries and the meter is charged m; only the RNG stream layout
differs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .distcore import (
    DistributionTable,
    DomainError,
    TupleDomain,
    bits_to_index,
    index_to_bits,
)


class QueryClass(enum.Enum):
    UNCONDITIONAL = "unconditional"
    PREFIX = "prefix"
    SUBCUBE = "subcube"
    MARGINAL = "marginal"
    INTERVAL = "interval"


class OracleErrorKind(enum.Enum):
    ZERO_PROBABILITY_CONDITION = "zero-probability-condition"
    DIMENSION_MISMATCH = "dimension-mismatch"
    MALFORMED_QUERY = "malformed-query"


class OracleError(Exception):
    def __init__(self, kind: OracleErrorKind, message: str):
        super().__init__(message)
        self.kind = kind


def _zero_prob(msg: str) -> OracleError:
    return OracleError(OracleErrorKind.ZERO_PROBABILITY_CONDITION, msg)


def _malformed(msg: str) -> OracleError:
    return OracleError(OracleErrorKind.MALFORMED_QUERY, msg)


@dataclass
class QueryCounter:
    counts: dict[QueryClass, int] = field(default_factory=dict)

    def add(self, cls: QueryClass, k: int = 1) -> None:
        if k < 0:
            raise ValueError("counters never decrease")
        self.counts[cls] = self.counts.get(cls, 0) + k

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def snapshot(self) -> dict[str, int]:
        return {cls.value: self.counts.get(cls, 0) for cls in QueryClass}


@dataclass(frozen=True)
class SubcubeQuery:
    """Per-coordinate constraints: None for unconstrained, else a nonempty
    frozenset of allowed values."""

    constraints: tuple

    def __post_init__(self):
        for c in self.constraints:
            if c is not None and len(c) == 0:
                raise _malformed("constrained sets must be nonempty")

    @classmethod
    def from_pattern(cls, pattern: str) -> "SubcubeQuery":
        """Binary shorthand: '0', '1' or '*' per coordinate, e.g. '0**1'."""
        table = {"0": frozenset({0}), "1": frozenset({1}), "*": None}
        try:
            return cls(tuple(table[ch] for ch in pattern))
        except KeyError:
            raise _malformed(f"bad pattern {pattern!r}") from None

    @property
    def n(self) -> int:
        return len(self.constraints)

    def contains(self, x) -> bool:
        """Membership of a point, given as a per-coordinate value sequence."""
        if len(x) != self.n:
            raise _malformed(f"point of length {len(x)} for {self.n} coordinates")
        return all(c is None or v in c for c, v in zip(self.constraints, x))

    def is_prefix_shaped(self) -> bool:
        """Singleton constraints on an initial segment, at most one trailing
        non-singleton constraint, nothing after it."""
        seen_break = False
        for c in self.constraints:
            if seen_break:
                if c is not None:
                    return False
            elif c is None or len(c) > 1:
                seen_break = True
        return True


@dataclass(frozen=True)
class PrefixQuery:
    """Fixed values for coordinates 1..i-1 plus an allowed set at the
    break-off coordinate i."""

    i: int
    fixed: tuple
    allowed: frozenset

    def __post_init__(self):
        if len(self.fixed) != self.i - 1:
            raise _malformed(f"prefix of length {len(self.fixed)} for break-off {self.i}")
        if len(self.allowed) == 0:
            raise _malformed("allowed set must be nonempty")

    @classmethod
    def bits(cls, fixed_bits, allowed=(0, 1)) -> "PrefixQuery":
        fixed_bits = tuple(fixed_bits)
        return cls(len(fixed_bits) + 1, fixed_bits, frozenset(allowed))


# ----------------------------------------------------------------------
# bin / unbin and the prefix -> interval translation


def unbin(bits) -> int:
    """MSB-first bits -> integer (sum of 2^(i-j) x_j)."""
    return bits_to_index(bits)


def bin_of(ell: int, value: int) -> tuple[int, ...]:
    """Integer in [0, 2^ell) -> MSB-first bits; inverse of unbin."""
    return index_to_bits(value, ell)


def prefix_to_interval(ell: int, i: int, w) -> tuple[int, int]:
    """Interval [a, b] of elements of [2^ell] whose (value-1) binary form
    starts with the prefix w (|w| = i - 1)."""
    w = tuple(w)
    if not 1 <= i <= ell + 1 or len(w) != i - 1:
        raise _malformed(f"bad prefix ({i}, {w}) for ell={ell}")
    width = 1 << (ell - i + 1)
    a = width * unbin(w) + 1
    return a, a + width - 1


# ----------------------------------------------------------------------
# binary table oracle


class TableOracle:
    """Metered sampling access to a dense binary DistributionTable.

    Supports the unconditional, subcube, prefix, and marginal prefix models.
    Conditional cdfs are cached per distinct conditioning; caches are
    behavior-invisible.
    """

    def __init__(self, table: DistributionTable, seed=None):
        self.table = table
        self.n = table.n
        self.rng = np.random.default_rng(seed)
        self.counter = QueryCounter()
        self._cdf_cache: dict = {}

    # -- internals ------------------------------------------------------

    def _block(self, i: int, prefix_idx: int) -> tuple[int, int]:
        width = 1 << (self.n - i + 1)
        return prefix_idx * width, (prefix_idx + 1) * width

    def _prefix_cdf(self, i: int, prefix_idx: int) -> tuple[np.ndarray, float, int]:
        key = (i, prefix_idx)
        hit = self._cdf_cache.get(key)
        if hit is None:
            lo, hi = self._block(i, prefix_idx)
            block = self.table.probs[lo:hi]
            total = float(block.sum())
            cdf = np.cumsum(block)
            hit = (cdf, total, lo)
            self._cdf_cache[key] = hit
        return hit

    def _sample_prefix_block(self, i: int, prefix_idx: int, k: int) -> np.ndarray:
        cdf, total, lo = self._prefix_cdf(i, prefix_idx)
        if total <= 0.0:
            raise _zero_prob(f"prefix {prefix_idx} at slice {i} has zero mass")
        u = self.rng.random(k) * total
        return lo + np.searchsorted(cdf, u, side="right")

    def exact_bit_prob(self, i: int, prefix_idx: int) -> float:
        """Pr[x_i = 1 | x_[i-1] = prefix]; OracleError on dead prefixes."""
        levels = self.table.level_sums()
        parent = float(levels[i - 1][prefix_idx])
        if parent <= 0.0:
            raise _zero_prob(f"prefix {prefix_idx} at slice {i} has zero mass")
        return float(levels[i][2 * prefix_idx + 1]) / parent

    # -- single-sample API ----------------------------------------------

    def draw_unconditional(self) -> tuple[int, ...]:
        self.counter.add(QueryClass.UNCONDITIONAL)
        idx = self._sample_prefix_block(1, 0, 1)[0]
        return index_to_bits(int(idx), self.n)

    def subcube_sample(self, query: SubcubeQuery) -> tuple[int, ...]:
        if query.n != self.n:
            raise OracleError(OracleErrorKind.DIMENSION_MISMATCH,
                              f"query over {query.n} coordinates, domain has {self.n}")
        self.counter.add(QueryClass.SUBCUBE)
        key = ("subcube", query.constraints)
        hit = self._cdf_cache.get(key)
        if hit is None:
            idx = np.arange(1 << self.n)
            mask = np.ones(idx.shape[0], dtype=bool)
            for pos, c in enumerate(query.constraints):
                if c is not None:
                    bit = (idx >> (self.n - 1 - pos)) & 1
                    mask &= np.isin(bit, list(c))
            sel = np.nonzero(mask)[0]
            weights = self.table.probs[sel]
            total = float(weights.sum())
            hit = (sel, np.cumsum(weights), total)
            self._cdf_cache[key] = hit
        sel, cdf, total = hit
        if total <= 0.0:
            raise _zero_prob("subcube has zero probability")
        u = self.rng.random() * total
        return index_to_bits(int(sel[np.searchsorted(cdf, u, side="right")]), self.n)

    def prefix_sample(self, query: PrefixQuery) -> tuple[int, ...]:
        """Full sample conditioned on a prefix query; prefix-shaped only."""
        if query.i > self.n:
            raise OracleError(OracleErrorKind.DIMENSION_MISMATCH,
                              f"break-off {query.i} beyond n={self.n}")
        self.counter.add(QueryClass.PREFIX)
        return self._prefix_sample_uncounted(query)

    def _prefix_sample_uncounted(self, query: PrefixQuery) -> tuple[int, ...]:
        prefix_idx = bits_to_index(query.fixed)
        if query.allowed == frozenset({0, 1}):
            idx = self._sample_prefix_block(query.i, prefix_idx, 1)[0]
        else:
            (bit,) = query.allowed
            idx = self._sample_prefix_block(query.i + 1, 2 * prefix_idx + bit, 1)[0]
        return index_to_bits(int(idx), self.n)

    def marginal_prefix_sample(self, i: int, w) -> int:
        """Single bit distributed as the conditional marginal of x_i."""
        w = tuple(w)
        if len(w) != i - 1:
            raise _malformed(f"prefix length {len(w)} for index {i}")
        self.counter.add(QueryClass.MARGINAL)
        p = self.exact_bit_prob(i, bits_to_index(w))
        return int(self.rng.random() < p)

    # -- batched API (distribution-identical, meter charged per sample) --

    def prefix_sample_index_batch(self, k: int) -> np.ndarray:
        """k unconditional samples (empty-prefix prefix queries), as indices."""
        self.counter.add(QueryClass.PREFIX, k)
        return self._sample_prefix_block(1, 0, k)

    def sample_full_indices_uncounted(self, k: int) -> np.ndarray:
        """k full-domain sample indices with no meter charge; callers are
        responsible for charging per consumed draw."""
        return self._sample_prefix_block(1, 0, k)

    def prefix_bit_count(self, i: int, prefix_idx: int, m: int) -> int:
        """Number of ones among m prefix-query samples of bit i."""
        self.counter.add(QueryClass.PREFIX, m)
        return int(self.rng.binomial(m, self.exact_bit_prob(i, prefix_idx)))

    def marginal_prefix_count(self, i: int, prefix_idx: int, m: int) -> int:
        """Number of ones among m marginal-prefix samples."""
        self.counter.add(QueryClass.MARGINAL, m)
        return int(self.rng.binomial(m, self.exact_bit_prob(i, prefix_idx)))


# ----------------------------------------------------------------------
# interval oracle and the interval-backed prefix view


class IntervalOracle:
    """Metered interval-conditional sampling over an explicit pmf on [N]."""

    def __init__(self, pmf, seed=None):
        pmf = np.asarray(pmf, dtype=np.float64)
        if pmf.ndim != 1 or pmf.shape[0] < 1:
            raise DomainError("pmf must be a nonempty vector")
        if np.any(pmf < 0) or abs(float(pmf.sum()) - 1.0) > 1e-12:
            raise DomainError("pmf must be a probability vector")
        self.N = pmf.shape[0]
        self.pmf = pmf
        self.cdf = np.cumsum(pmf)
        self.rng = np.random.default_rng(seed)
        self.counter = QueryCounter()

    def interval_mass(self, a: int, b: int) -> float:
        if not 1 <= a <= b <= self.N:
            raise _malformed(f"bad interval [{a}, {b}] for N={self.N}")
        return float(self.cdf[b - 1] - (self.cdf[a - 2] if a > 1 else 0.0))

    def interval_sample(self, a: int, b: int) -> int:
        """Element of [a, b] distributed as the conditional; 1-based."""
        self.counter.add(QueryClass.INTERVAL)
        total = self.interval_mass(a, b)
        if total <= 0.0:
            raise _zero_prob(f"interval [{a}, {b}] has zero probability")
        base = self.cdf[a - 2] if a > 1 else 0.0
        u = base + self.rng.random() * total
        return int(np.searchsorted(self.cdf, u, side="right")) + 1

    def interval_split_count(self, a: int, b: int, mid: int, m: int) -> int:
        """Among m conditional samples from [a, b], how many land in [mid, b].
        One binomial draw; meter charged m."""
        self.counter.add(QueryClass.INTERVAL, m)
        total = self.interval_mass(a, b)
        if total <= 0.0:
            raise _zero_prob(f"interval [{a}, {b}] has zero probability")
        return int(self.rng.binomial(m, self.interval_mass(mid, b) / total))


class IntervalBackedPrefixOracle:
    """Binary prefix/marginal-prefix oracle over [2^ell], translating every
    prefix query into exactly one interval query."""

    def __init__(self, base: IntervalOracle, ell: int):
        if base.N != 1 << ell:
            raise DomainError(f"base oracle has N={base.N}, expected 2^{ell}")
        self.base = base
        self.n = ell
        self.counter = QueryCounter()

    def _interval_of_prefix_idx(self, i: int, prefix_idx: int) -> tuple[int, int]:
        return prefix_to_interval(self.n, i, index_to_bits(prefix_idx, i - 1))

    def exact_bit_prob(self, i: int, prefix_idx: int) -> float:
        a, b = self._interval_of_prefix_idx(i, prefix_idx)
        total = self.base.interval_mass(a, b)
        if total <= 0.0:
            raise _zero_prob(f"prefix {prefix_idx} at slice {i} has zero mass")
        mid = a + (b - a + 1) // 2
        return self.base.interval_mass(mid, b) / total

    def prefix_sample_index_batch(self, k: int) -> np.ndarray:
        self.counter.add(QueryClass.PREFIX, k)
        out = np.empty(k, dtype=np.int64)
        for j in range(k):
            out[j] = self.base.interval_sample(1, self.base.N) - 1
        return out

    def sample_full_indices_uncounted(self, k: int) -> np.ndarray:
        """As prefix_sample_index_batch but meter-free; callers charge per
        consumed draw."""
        u = self.base.rng.random(k) * float(self.base.cdf[-1])
        return np.searchsorted(self.base.cdf, u, side="right")

    def prefix_sample(self, query: PrefixQuery) -> tuple[int, ...]:
        self.counter.add(QueryClass.PREFIX)
        prefix_idx = bits_to_index(query.fixed)
        if query.allowed != frozenset({0, 1}):
            (bit,) = query.allowed
            prefix_idx = 2 * prefix_idx + bit
            a, b = self._interval_of_prefix_idx(query.i + 1, prefix_idx)
        else:
            a, b = self._interval_of_prefix_idx(query.i, prefix_idx)
        return index_to_bits(self.base.interval_sample(a, b) - 1, self.n)

    def prefix_bit_count(self, i: int, prefix_idx: int, m: int) -> int:
        self.counter.add(QueryClass.PREFIX, m)
        a, b = self._interval_of_prefix_idx(i, prefix_idx)
        mid = a + (b - a + 1) // 2
        return self.base.interval_split_count(a, b, mid, m)

    def marginal_prefix_count(self, i: int, prefix_idx: int, m: int) -> int:
        self.counter.add(QueryClass.MARGINAL, m)
        a, b = self._interval_of_prefix_idx(i, prefix_idx)
        mid = a + (b - a + 1) // 2
        return self.base.interval_split_count(a, b, mid, m)

    def marginal_prefix_sample(self, i: int, w) -> int:
        return 1 if self.marginal_prefix_count(i, bits_to_index(w), 1) else 0


# ----------------------------------------------------------------------
# tuple-domain oracle and the binary encoding


class TupleTableOracle:
    """Metered subcube/prefix/marginal access to an explicit joint pmf over a
    TupleDomain."""

    def __init__(self, domain: TupleDomain, probs, seed=None):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.shape != (domain.size(),):
            raise DomainError(f"expected {domain.size()} probabilities")
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-12:
            raise DomainError("probs must form a distribution")
        self.domain = domain
        self.probs = probs
        self.rng = np.random.default_rng(seed)
        self.counter = QueryCounter()
        # coordinate value of every flat index, per coordinate
        sizes = domain.sizes
        idx = np.arange(domain.size())
        self._coord_digits = []
        rem = idx
        for size in reversed(sizes):
            self._coord_digits.append(rem % size)
            rem = rem // size
        self._coord_digits.reverse()

    def _mask_of_sets(self, sets) -> np.ndarray:
        mask = np.ones(self.probs.shape[0], dtype=bool)
        for pos, allowed in enumerate(sets):
            if allowed is None:
                continue
            alpha = self.domain.alphabets[pos]
            codes = [alpha.index(x) for x in allowed]
            mask &= np.isin(self._coord_digits[pos], codes)
        return mask

    def _conditional_draw(self, mask: np.ndarray) -> int:
        sel = np.nonzero(mask)[0]
        weights = self.probs[sel]
        total = float(weights.sum())
        if total <= 0.0:
            raise _zero_prob("condition has zero probability")
        u = self.rng.random() * total
        return int(sel[np.searchsorted(np.cumsum(weights), u, side="right")])

    def subcube_sample(self, sets) -> tuple:
        """sets: per-coordinate allowed collection or None."""
        if len(sets) != self.domain.n:
            raise OracleError(OracleErrorKind.DIMENSION_MISMATCH, "bad arity")
        self.counter.add(QueryClass.SUBCUBE)
        return self.domain.element_of(self._conditional_draw(self._mask_of_sets(sets)))

    def prefix_sample(self, i: int, fixed, allowed) -> tuple:
        """Prefix query: coordinates 1..i-1 fixed, coordinate i in ``allowed``."""
        self.counter.add(QueryClass.PREFIX)
        sets = self._prefix_sets(i, fixed, allowed)
        return self.domain.element_of(self._conditional_draw(self._mask_of_sets(sets)))

    def marginal_prefix_sample(self, i: int, fixed, allowed):
        """Coordinate i only, conditioned as in prefix_sample."""
        self.counter.add(QueryClass.MARGINAL)
        sets = self._prefix_sets(i, fixed, allowed)
        full = self.domain.element_of(self._conditional_draw(self._mask_of_sets(sets)))
        return full[i - 1]

    def _prefix_sets(self, i: int, fixed, allowed) -> list:
        if len(fixed) != i - 1:
            raise _malformed(f"fixed part has length {len(fixed)}, expected {i - 1}")
        sets: list = [None] * self.domain.n
        for pos, value in enumerate(fixed):
            sets[pos] = (value,)
        sets[i - 1] = tuple(allowed)
        return sets

    def exact_conditional_mass(self, sets) -> float:
        return float(self.probs[self._mask_of_sets(sets)].sum())


class BinaryEncodedOracle:
    """Binary view of a tuple-domain distribution.

    Coordinate i is encoded with its canonical-order index as a
    ceil(log2 |Omega_i|)-bit MSB-first block.  Every binary subcube, prefix,
    or marginal-prefix query translates to exactly one query of the same
    shape on the underlying tuple oracle.
    """

    def __init__(self, base: TupleTableOracle):
        self.base = base
        self.domain = base.domain
        self.n = self.domain.total_bits
        self.counter = QueryCounter()
        self._widths = self.domain.bit_widths
        self._starts = []
        acc = 0
        for wdt in self._widths:
            self._starts.append(acc)
            acc += wdt

    # -- encoding helpers ----------------------------------------------

    def encode(self, element) -> tuple[int, ...]:
        bits: list[int] = []
        for alpha, wdt, x in zip(self.domain.alphabets, self._widths, element):
            bits.extend(index_to_bits(alpha.index(x), wdt))
        return tuple(bits)

    def _coord_of_bit(self, bit_pos: int) -> int:
        """0-based coordinate owning 0-based bit position."""
        for j in range(self.domain.n - 1, -1, -1):
            if bit_pos >= self._starts[j]:
                return j
        raise _malformed(f"bad bit position {bit_pos}")

    def _symbols_matching(self, coord: int, fixed_bits: dict[int, int]) -> tuple:
        """Symbols of coordinate ``coord`` whose code agrees with the given
        {within-block bit offset: value} constraints."""
        alpha = self.domain.alphabets[coord]
        wdt = self._widths[coord]
        out = []
        for code, symbol in enumerate(alpha):
            bits = index_to_bits(code, wdt)
            if all(bits[off] == v for off, v in fixed_bits.items()):
                out.append(symbol)
        return tuple(out)

    def _translate_subcube(self, constraints) -> list:
        per_coord: list[dict[int, int]] = [dict() for _ in range(self.domain.n)]
        for pos, c in enumerate(constraints):
            if c is None:
                continue
            if len(c) != 1:
                # General binary subcube constraints are singletons anyway.
                raise _malformed("binary constraints must be singletons or trivial")
            (v,) = c
            coord = self._coord_of_bit(pos)
            per_coord[coord][pos - self._starts[coord]] = v
        sets: list = []
        for coord, fixed in enumerate(per_coord):
            if not fixed:
                sets.append(None)
                continue
            symbols = self._symbols_matching(coord, fixed)
            if not symbols:
                raise _zero_prob("constraint excludes every symbol")
            sets.append(symbols)
        return sets

    # -- query API ------------------------------------------------------

    def subcube_sample(self, query: SubcubeQuery) -> tuple[int, ...]:
        if query.n != self.n:
            raise OracleError(OracleErrorKind.DIMENSION_MISMATCH, "bad arity")
        self.counter.add(QueryClass.SUBCUBE)
        sets = self._translate_subcube(query.constraints)
        return self.encode(self.base.subcube_sample(sets))

    def _translate_prefix(self, i: int, prefix_bits) -> tuple[int, tuple, tuple]:
        """Binary prefix (bits 1..i-1 fixed) -> tuple prefix query parts
        (break-off coordinate, fixed symbols, allowed set)."""
        coord = self._coord_of_bit(i - 1) if i <= self.n else self.domain.n - 1
        fixed_symbols = []
        for j in range(coord):
            lo, wdt = self._starts[j], self._widths[j]
            code_bits = tuple(prefix_bits[lo:lo + wdt])
            symbols = self._symbols_matching(j, dict(enumerate(code_bits)))
            if not symbols:
                raise _zero_prob("prefix fixes a non-image code")
            if len(symbols) != 1:
                raise _malformed("full block must decode to a single symbol")
            fixed_symbols.append(symbols[0])
        within = {off: prefix_bits[self._starts[coord] + off]
                  for off in range(i - 1 - self._starts[coord])}
        allowed = self._symbols_matching(coord, within)
        if not allowed:
            raise _zero_prob("prefix fixes a non-image code")
        return coord, tuple(fixed_symbols), allowed

    def prefix_sample(self, query: PrefixQuery) -> tuple[int, ...]:
        self.counter.add(QueryClass.PREFIX)
        bits = list(query.fixed)
        if query.allowed != frozenset({0, 1}):
            (bit,) = query.allowed
            bits.append(bit)
        if not bits:
            coord, fixed, allowed = 0, (), tuple(self.domain.alphabets[0])
        else:
            coord, fixed, allowed = self._translate_prefix(len(bits) + 1, tuple(bits))
        sample = self.base.prefix_sample(coord + 1, fixed, allowed)
        return self.encode(sample)

    def marginal_prefix_sample(self, i: int, w) -> int:
        self.counter.add(QueryClass.MARGINAL)
        w = tuple(w)
        coord, fixed, allowed = self._translate_prefix(i, w)
        symbol = self.base.marginal_prefix_sample(coord + 1, fixed, allowed)
        code_bits = index_to_bits(self.domain.alphabets[coord].index(symbol),
                                  self._widths[coord])
        return code_bits[i - 1 - self._starts[coord]]

    # -- collapsed-mode support ----------------------------------------

    def exact_bit_prob(self, i: int, prefix_idx: int) -> float:
        w = index_to_bits(prefix_idx, i - 1)
        coord, fixed, allowed = self._translate_prefix(i, w)
        off = i - 1 - self._starts[coord]
        ones = tuple(s for s in allowed
                     if index_to_bits(self.domain.alphabets[coord].index(s),
                                      self._widths[coord])[off] == 1)
        sets: list = [None] * self.domain.n
        for pos, value in enumerate(fixed):
            sets[pos] = (value,)
        sets[coord] = allowed
        total = self.base.exact_conditional_mass(sets)
        if total <= 0.0:
            raise _zero_prob("prefix has zero probability")
        sets[coord] = ones if ones else None
        mass_one = self.base.exact_conditional_mass(sets) if ones else 0.0
        return mass_one / total

    def prefix_sample_index_batch(self, k: int) -> np.ndarray:
        self.counter.add(QueryClass.PREFIX, k)
        self.base.counter.add(QueryClass.PREFIX, k)
        return self.sample_full_indices_uncounted(k)

    def sample_full_indices_uncounted(self, k: int) -> np.ndarray:
        """k full-domain samples as encoded bit-string indices, meter-free."""
        cdf = np.cumsum(self.base.probs)
        u = self.base.rng.random(k) * float(cdf[-1])
        flat = np.searchsorted(cdf, u, side="right")
        out = np.empty(k, dtype=np.int64)
        for j in range(k):
            element = self.base.domain.element_of(int(flat[j]))
            out[j] = bits_to_index(self.encode(element))
        return out

    def prefix_bit_count(self, i: int, prefix_idx: int, m: int) -> int:
        self.counter.add(QueryClass.PREFIX, m)
        self.base.counter.add(QueryClass.PREFIX, m)
        return int(self.base.rng.binomial(m, self.exact_bit_prob(i, prefix_idx)))

    def marginal_prefix_count(self, i: int, prefix_idx: int, m: int) -> int:
        self.counter.add(QueryClass.MARGINAL, m)
        self.base.counter.add(QueryClass.MARGINAL, m)
        return int(self.base.rng.binomial(m, self.exact_bit_prob(i, prefix_idx)))


# ----------------------------------------------------------------------
# product-of-marginals views


class ProductMarginalOracle:
    """Marginal-prefix oracle over the product of a binary distribution's
    marginals, served through one unconditional (empty-prefix) sample of the
    base distribution per query."""

    def __init__(self, base: TableOracle):
        self.base = base
        self.n = base.n
        self.counter = QueryCounter()
        self._marginals = None

    def marginal_prefix_sample(self, i: int, w) -> int:
        self.counter.add(QueryClass.MARGINAL)
        self.base.counter.add(QueryClass.PREFIX)
        sample = self.base._prefix_sample_uncounted(PrefixQuery.bits(()))
        return sample[i - 1]

    def marginal_prefix_count(self, i: int, prefix_idx: int, m: int) -> int:
        self.counter.add(QueryClass.MARGINAL, m)
        self.base.counter.add(QueryClass.PREFIX, m)
        return int(self.base.rng.binomial(m, self.exact_bit_prob(i, prefix_idx)))

    def exact_bit_prob(self, i: int, prefix_idx: int) -> float:
        # marginals are prefix-independent by construction
        if self._marginals is None:
            self._marginals = self.base.table.marginals()
        return float(self._marginals[i - 1])


class GeneralProductMarginalOracle:
    """Marginal-prefix oracle over the binary encoding of the product of a
    tuple distribution's coordinate marginals.  Each query costs one subcube
    query to the base tuple oracle (the break-off bit may sit in the middle
    of a coordinate's bit block, forcing a nontrivial allowed set there)."""

    def __init__(self, encoded: BinaryEncodedOracle):
        self.encoded = encoded
        self.base = encoded.base
        self.n = encoded.n
        self.counter = QueryCounter()

    def _within_block_sets(self, i: int, w) -> tuple[int, list, tuple]:
        coord = self.encoded._coord_of_bit(i - 1)
        start = self.encoded._starts[coord]
        within = {off: w[start + off] for off in range(i - 1 - start)}
        allowed = self.encoded._symbols_matching(coord, within)
        if not allowed:
            raise _zero_prob("prefix fixes a non-image code")
        sets: list = [None] * self.base.domain.n
        sets[coord] = allowed
        return coord, sets, allowed

    def marginal_prefix_sample(self, i: int, w) -> int:
        # Coordinates other than the one owning bit i are independent under
        # the product of marginals, so only the within-block prefix matters.
        self.counter.add(QueryClass.MARGINAL)
        coord, sets, _ = self._within_block_sets(i, tuple(w))
        sample = self.base.subcube_sample(sets)
        code = self.base.domain.alphabets[coord].index(sample[coord])
        bits = index_to_bits(code, self.encoded._widths[coord])
        return bits[i - 1 - self.encoded._starts[coord]]

    def marginal_prefix_count(self, i: int, prefix_idx: int, m: int) -> int:
        self.counter.add(QueryClass.MARGINAL, m)
        self.base.counter.add(QueryClass.SUBCUBE, m)
        return int(self.base.rng.binomial(m, self.exact_bit_prob(i, prefix_idx)))

    def exact_bit_prob(self, i: int, prefix_idx: int) -> float:
        w = index_to_bits(prefix_idx, i - 1)
        coord, sets, allowed = self._within_block_sets(i, w)
        total = self.base.exact_conditional_mass(sets)
        if total <= 0.0:
            raise _zero_prob("prefix has zero probability under the marginal")
        off = i - 1 - self.encoded._starts[coord]
        ones = tuple(s for s in allowed
                     if index_to_bits(self.base.domain.alphabets[coord].index(s),
                                      self.encoded._widths[coord])[off] == 1)
        if not ones:
            return 0.0
        sets[coord] = ones
        return self.base.exact_conditional_mass(sets) / total


def binary_encode(base: TupleTableOracle) -> BinaryEncodedOracle:
    """Binary-oracle view of a tuple-domain oracle (one-query translation)."""
    return BinaryEncodedOracle(base)


def product_marginal_oracle(base) -> ProductMarginalOracle | GeneralProductMarginalOracle:
    """Marginal-prefix access to the product of the base's marginals."""
    if isinstance(base, TableOracle):
        return ProductMarginalOracle(base)
    if isinstance(base, BinaryEncodedOracle):
        return GeneralProductMarginalOracle(base)
    raise DomainError(f"unsupported base oracle {type(base).__name__}")
