"""Hard instance families and simulation gadgets for conditional-sampling
testers.

The central object is a pairwise-correlated family: coordinates are grouped
into fixed pairs (2i-1, 2i), each pair carrying a +/- "anti-product" bias.
Every single-coordinate marginal is exactly Ber(1/2), yet each instance is
far in total variation from every product distribution — the correlation is
invisible to marginals but not to conditional queries.  The module also
provides the XOR change of variables that turns a biased pair into an honest
product (used to relate the paired family to a biased-product family), the
one-unconditional-sample simulation of arbitrary subcube queries against
these instances, and a grid search certifying distance to the set of product
distributions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .distcore import (
    MAX_DENSE_N,
    DistributionTable,
    DomainError,
    index_to_bits,
    product_of_marginals,
    tv_distance,
)
from .oracles import SubcubeQuery

MAX_PAIR_DELTA = 0.25  # keeps every cell probability inside (0, 1/2)


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta < MAX_PAIR_DELTA:
        raise DomainError(f"pair bias magnitude must lie in [0, 0.25), got {delta}")


@dataclass(frozen=True)
class PairBias:
    """Signed bias of one coordinate pair: b in {-1, 0, +1} and magnitude
    delta in [0, 1/4)."""

    b: int
    delta: float

    def __post_init__(self):
        if self.b not in (-1, 0, 1):
            raise DomainError(f"bias sign must be -1, 0 or +1, got {self.b}")
        _check_delta(self.delta)


def nu_b_table(b: int, delta: float) -> DistributionTable:
    """Two-bit pair distribution with cells (1/4 + b*delta, 1/4 - b*delta,
    1/4 - b*delta, 1/4 + b*delta) on (00, 01, 10, 11).

    Both marginals are exactly Ber(1/2); the parity bit is Ber(1/2 - 2*b*delta).
    b = 0 gives the uniform distribution over two bits.
    """
    PairBias(b, delta)
    q = 0.25 + b * delta
    r = 0.25 - b * delta
    return DistributionTable(2, np.array([q, r, r, q]))


@dataclass(frozen=True)
class AdversarialInstance:
    """A draw from the paired-bias family over {0,1}^n.

    Coordinates (2i-1, 2i) form biased pairs with common magnitude
    delta = eps / sqrt(n); an odd trailing coordinate, if any, is uniform and
    independent.  All marginals are Ber(1/2) exactly.
    """

    n: int
    eps: float
    biases: tuple

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"need n >= 2, got {self.n}")
        if len(self.biases) != self.n // 2:
            raise DomainError(f"expected {self.n // 2} pair biases, got {len(self.biases)}")
        if any(b not in (-1, 1) for b in self.biases):
            raise DomainError("pair biases must be +1 or -1")
        _check_delta(self.delta)

    @property
    def delta(self) -> float:
        return self.eps / math.sqrt(self.n)

    @property
    def n_pairs(self) -> int:
        return self.n // 2

    def pair_table(self, j: int) -> DistributionTable:
        """Distribution of pair j (0-based)."""
        return nu_b_table(self.biases[j], self.delta)

    def table(self) -> DistributionTable:
        """Dense joint table (product over pairs); n <= 20 only."""
        if self.n > MAX_DENSE_N:
            raise DomainError(f"dense table refused for n={self.n} > {MAX_DENSE_N}")
        probs = np.array([1.0])
        for j in range(self.n_pairs):
            probs = np.kron(probs, self.pair_table(j).probs)
        if self.n % 2:
            probs = np.kron(probs, np.array([0.5, 0.5]))
        return DistributionTable(self.n, probs)

    def draw_unconditional(self, rng) -> tuple[int, ...]:
        """One sample, without materializing the joint table."""
        bits: list[int] = []
        for j in range(self.n_pairs):
            cell = int(np.searchsorted(np.cumsum(self.pair_table(j).probs),
                                       rng.random(), side="right"))
            bits.extend((cell >> 1, cell & 1))
        if self.n % 2:
            bits.append(int(rng.random() < 0.5))
        return tuple(bits)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "eps": self.eps,
                           "biases": list(self.biases)})

    @classmethod
    def from_json(cls, text: str) -> "AdversarialInstance":
        payload = json.loads(text)
        return cls(int(payload["n"]), float(payload["eps"]),
                   tuple(int(b) for b in payload["biases"]))


def sample_paired_instance(n: int, eps: float, rng) -> AdversarialInstance:
    """Draw an instance of the paired-bias family: each pair's sign is
    uniform in {+1, -1}, independently."""
    biases = tuple(int(b) for b in rng.choice((-1, 1), size=n // 2))
    return AdversarialInstance(n, eps, biases)


def _is_free(constraint) -> bool:
    return constraint is None or constraint == frozenset({0, 1})


def simulate_pair_conditional(q, x) -> tuple[int, int]:
    """Serve a subcube query over one biased pair from a single unconditional
    sample, without knowing the pair's bias sign.

    ``q`` is a SubcubeQuery over {0,1}^2 (or its '01*' string shorthand) and
    ``x`` an unconditional sample of the pair.  The map is deterministic in
    (q, x) and its pushforward equals the conditional distribution exactly,
    for every bias sign: half-free queries route through the parity bit
    x1 XOR x2, whose law carries the pair's entire non-uniformity.
    """
    if isinstance(q, str):
        q = SubcubeQuery.from_pattern(q)
    if q.n != 2:
        raise DomainError(f"pair query must cover 2 coordinates, got {q.n}")
    c1, c2 = q.constraints
    if _is_free(c1) and _is_free(c2):
        return tuple(x)
    if not _is_free(c1) and not _is_free(c2):
        (v1,) = c1
        (v2,) = c2
        return v1, v2
    parity = x[0] ^ x[1]
    if not _is_free(c1):
        (v1,) = c1
        return (0, parity) if v1 == 0 else (1, 1 ^ parity)
    (v2,) = c2
    return (parity, 0) if v2 == 0 else (1 ^ parity, 1)


def subcube_query_via_unconditional(q: SubcubeQuery,
                                    instance: AdversarialInstance,
                                    rng) -> tuple[int, ...]:
    """Answer a subcube query against a paired instance with exactly one
    unconditional sample, applying the pair simulation pairwise.

    Exactness rests on the pairs (and the odd trailing bit) being mutually
    independent under the instance.
    """
    if q.n != instance.n:
        raise DomainError(f"query over {q.n} coordinates for n={instance.n}")
    x = instance.draw_unconditional(rng)
    out: list[int] = []
    for j in range(instance.n_pairs):
        sub = SubcubeQuery(q.constraints[2 * j:2 * j + 2])
        out.extend(simulate_pair_conditional(sub, x[2 * j:2 * j + 2]))
    if instance.n % 2:
        last = q.constraints[-1]
        if _is_free(last):
            out.append(x[-1])
        else:
            (v,) = last
            out.append(v)
    return tuple(out)


def xor_transform(table: DistributionTable) -> DistributionTable:
    """Pushforward under the pairwise change of variables
    (x, y) -> (x XOR y, y) applied to each pair (2i-1, 2i).

    The map is a self-inverse bijection; it sends a biased pair with sign b
    and magnitude delta to Ber(1/2 + 2*b*delta) x Ber(1/2) and fixes the
    uniform distribution.
    """
    n = table.n
    if n % 2:
        raise DomainError(f"pairwise transform needs even n, got {n}")
    idx = np.arange(1 << n)
    # y-bits sit at even bit positions (second coordinate of each pair).
    y_mask = sum(1 << s for s in range(0, n, 2))
    target = idx ^ ((idx & y_mask) << 1)
    probs = np.empty_like(table.probs)
    probs[target] = table.probs
    return DistributionTable(n, probs)


@dataclass(frozen=True)
class ProductSampler:
    """Implicit sampler for a product of Bernoullis (any n)."""

    ps: tuple

    def draw(self, rng, k: int = 1) -> np.ndarray:
        return (rng.random((k, len(self.ps))) < np.asarray(self.ps)).astype(np.int64)


def uniformity_lb_instance(n: int, eps: float, rng):
    """Biased-product hard instance for uniformity testing: each coordinate is
    Ber(1/2 + b_i * eps/sqrt(n)) with independent uniform signs b_i.

    Returns a dense DistributionTable for n <= 20, an implicit ProductSampler
    above that.  eps = 0 gives the uniform distribution.
    """
    bias = eps / math.sqrt(n)
    if not 0.0 <= bias < 0.5:
        raise DomainError(f"coordinate bias must lie in [0, 0.5), got {bias}")
    signs = rng.choice((-1, 1), size=n)
    ps = 0.5 + signs * bias
    if n <= MAX_DENSE_N:
        return DistributionTable.bernoulli_product(ps)
    return ProductSampler(tuple(float(p) for p in ps))


# ----------------------------------------------------------------------
# distance to the set of product distributions


@dataclass(frozen=True)
class GridProductDistance:
    """Result of a distance-to-products search: the certified value, the
    marginal grid step, how it was obtained, and (for exact searches) the
    minimizing grid marginals."""

    distance: float
    step: float
    method: str
    marginals: tuple | None = None


def _factor_table(k: int, grid: np.ndarray) -> np.ndarray:
    """(g^k, 2^k) array of product-cell probabilities over all grid-marginal
    assignments to k coordinates, rows in mixed-radix grid order."""
    if k == 0:
        return np.ones((1, 1))
    single = np.stack([1.0 - grid, grid], axis=1)
    out = single
    for _ in range(k - 1):
        out = np.einsum("ia,jb->ijab", out, single).reshape(
            out.shape[0] * grid.shape[0], out.shape[1] * 2)
    return out


def distance_to_grid_products(table: DistributionTable,
                              step: float = 0.01) -> GridProductDistance:
    """Exact minimum total-variation distance from ``table`` to products whose
    marginals lie on the grid {0, step, 2*step, ..., 1}.

    Any product distribution is within n*step/2 of a grid product in total
    variation, so (distance - n*step/2) lower-bounds the distance to all
    products.  Exhaustive; intended for n <= 4.
    """
    n = table.n
    if n > 4:
        raise DomainError("exhaustive grid search is limited to n <= 4; "
                          "use pair decomposition for larger instances")
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    g = grid.shape[0]
    h1, h2 = n // 2, n - n // 2
    left = _factor_table(h1, grid)
    right = _factor_table(h2, grid)
    target = table.probs.reshape(1 << h1, 1 << h2)
    best = np.inf
    best_pair = (0, 0)
    for i in range(left.shape[0]):
        l1 = np.abs(target[None, :, :]
                    - left[i][None, :, None] * right[:, None, :]).sum(axis=(1, 2))
        j = int(np.argmin(l1))
        if l1[j] < best:
            best = float(l1[j])
            best_pair = (i, j)
    def _decode(flat: int, k: int) -> list[float]:
        digits = []
        for _ in range(k):
            digits.append(float(grid[flat % g]))
            flat //= g
        return digits[::-1]
    marginals = tuple(_decode(best_pair[0], h1) + _decode(best_pair[1], h2))
    return GridProductDistance(best / 2.0, step, "exact-grid", marginals)


def pairwise_product_distance_bound(instance: AdversarialInstance,
                                    step: float = 0.01) -> GridProductDistance:
    """Certified lower bound on the distance from a paired instance to every
    product distribution, at any n.

    Marginalizing to one pair can only shrink total variation, and a product
    marginalizes to a two-coordinate product; so the joint distance is at
    least the pair's grid minimum less the grid resolution (each of the two
    grid marginals is within step/2 of any real marginal).
    """
    per_pair = [distance_to_grid_products(instance.pair_table(j), step).distance
                for j in range(instance.n_pairs)]
    return GridProductDistance(max(per_pair) - step, step, "pairwise-lower-bound")


def distance_to_product_of_marginals(table: DistributionTable) -> float:
    """Exact dtv between a distribution and the product of its own marginals
    (an upper bound on its distance to the nearest product)."""
    return tv_distance(table, product_of_marginals(table))


def odd_coordinate_marginals(table: DistributionTable) -> np.ndarray:
    """Marginals of coordinates 1, 3, 5, ... — under the XOR transform of a
    paired instance these carry the Ber(1/2 + 2*b*delta) biases."""
    return table.marginals()[0::2]
