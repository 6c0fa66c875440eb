"""Randomized testers: single-bit chi-square test, Levin work balance, the
equivalence tester, the product tester, and the alphabet/interval wrappers.

Two execution modes are provided for the full testers.

``sampled``
    The literal algorithm: every trial consumes oracle samples (batched
    binomial draws, which are distribution-identical to one-at-a-time
    sampling).  The schedule's constants make this mode astronomically
    expensive at realistic parameters (~10^12 samples at n=8, eps=0.3), so
    it is practical only for tiny configurations and for validating the
    collapsed mode.

``collapsed``
    Exact-verdict simulation: for each drawn (i, w) the accept probability of
    a black-box invocation is computed in closed form from the oracles' exact
    conditional probabilities, and the per-draw survival event is decided by
    a single Bernoulli draw.  The verdict law is mathematically identical to
    the sampled mode (binomial trial sums -> multinomial (A, B) counts ->
    binomial majority tally), and meters are charged exactly per the
    schedule.  This is what makes the statistical acceptance experiments
    runnable at all.

``auto`` picks sampled when the deterministic sample budget is small enough,
collapsed otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom as _binom

from .oracles import (
    GeneralProductMarginalOracle,
    IntervalBackedPrefixOracle,
    IntervalOracle,
    OracleError,
    OracleErrorKind,
    ProductMarginalOracle,
    QueryClass,
    binary_encode,
    product_marginal_oracle,
)

CHI2_TRIALS = 64
CHI2_THRESHOLD = 40
CHI2_SAMPLE_FACTOR = 24  # ceil(24 / eps) samples per trial (proof-consistent)


@dataclass
class TestConfig:
    epsilon: float
    seed: int | None = None
    mode: str = "auto"  # auto | sampled | collapsed
    sampled_budget_limit: int = 50_000_000

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.mode not in ("auto", "sampled", "collapsed"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class Verdict:
    accepted: bool
    queries_used: dict[str, int] = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def decision(self) -> str:
        return "accept" if self.accepted else "reject"


class BitSampler:
    """Zero-argument access to i.i.d. bits from a fixed Bernoulli source.

    ``draw_sums(m, k)`` returns k independent sums of m bits each; the
    sampler's own meter counts individual bits.
    """

    def __init__(self, draw_sums_fn):
        self._fn = draw_sums_fn
        self.count = 0

    def draw_sums(self, m: int, k: int) -> np.ndarray:
        self.count += m * k
        return np.asarray(self._fn(m, k))

    @classmethod
    def from_probability(cls, p: float, rng) -> "BitSampler":
        return cls(lambda m, k: rng.binomial(m, p, size=k))

    @classmethod
    def constant(cls, bit: int) -> "BitSampler":
        return cls(lambda m, k: np.full(k, bit * m))


def single_bit_chi2_test(sampler_p: BitSampler, sampler_q: BitSampler,
                         eps: float) -> Verdict:
    """Distinguish p = q from chi2(p, q) > eps at success probability 2/3.

    64 trials; each trial compares sums of N = ceil(24/eps) draws from the
    two samplers.  Accept iff at most 40 trials fall on each side.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0,1], got {eps}")
    n_draws = math.ceil(CHI2_SAMPLE_FACTOR / eps)
    xs = sampler_p.draw_sums(n_draws, CHI2_TRIALS)
    ys = sampler_q.draw_sums(n_draws, CHI2_TRIALS)
    a = int(np.sum(xs > ys))
    b = int(np.sum(xs < ys))
    accepted = a <= CHI2_THRESHOLD and b <= CHI2_THRESHOLD
    return Verdict(accepted, {"samples_per_source": CHI2_TRIALS * n_draws},
                   trace=[{"A": a, "B": b, "N": n_draws}])


# ----------------------------------------------------------------------
# Levin's work-balance procedure


def levin_schedule(eps: float) -> list[tuple[int, float, int, int]]:
    """Deterministic schedule rows (t, eps', outer draws, inner repetitions)."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0,1), got {eps}")
    t_max = math.ceil(math.log2(2.0 / eps))
    inner = math.ceil(64 * (math.log2(1.0 / eps) + 2))
    return [(t, 2.0 ** -t, math.ceil(2.0 ** (3 - t) / eps), inner)
            for t in range(1, t_max + 1)]


def levin_balance(draw_y, black_box, eps: float) -> Verdict:
    """Distinguish E[X] = 0 from E[X] > eps given a two-sided-error black box
    for the conditional means E[X | Y = y].

    For each threshold eps' = 2^-t the black box is run a logarithmic number
    of times per drawn y and the majority tally decides; any majority-reject
    y rejects the whole procedure.
    """
    trace = []
    for t, eps_prime, outer, inner in levin_schedule(eps):
        for j in range(outer):
            y = draw_y()
            tally = 0
            for _ in range(inner):
                tally += 1 if black_box(y, eps_prime) else -1
            if tally < 0:
                trace.append({"t": t, "eps_prime": eps_prime, "outer": outer,
                              "inner": inner, "rejected_at": j})
                return Verdict(False, trace=trace)
        trace.append({"t": t, "eps_prime": eps_prime, "outer": outer,
                      "inner": inner, "rejected_at": None})
    return Verdict(True, trace=trace)


# ----------------------------------------------------------------------
# deterministic query budgets


def slice_divergence_threshold(n: int, eps: float) -> float:
    """Levin threshold rho = eps^2 / (24 log2(2n/eps)) for the slice-wise
    chi-square divergence."""
    return eps ** 2 / (24.0 * math.log2(2.0 * n / eps))


def expected_equivalence_queries(n: int, eps: float) -> dict[str, int]:
    """Accept-path query counts of the equivalence tester, per source.

    tau pays one prefix query per outer draw plus N per black-box trial
    batch; mu pays N marginal-prefix queries per black-box run.
    """
    eps_l = slice_divergence_threshold(n, eps) / n
    tau = 0
    mu = 0
    for _, eps_prime, outer, inner in levin_schedule(eps_l):
        n_draws = math.ceil(CHI2_SAMPLE_FACTOR / eps_prime)
        per_bb = CHI2_TRIALS * n_draws
        tau += outer * (1 + inner * per_bb)
        mu += outer * inner * per_bb
    return {"tau": tau, "mu": mu, "total": tau + mu}


# ----------------------------------------------------------------------
# collapsed-mode probability calculus

_PROB_CACHE: dict = {}


def chi2_trial_compare_probs(n_draws: int, p: float, q: float) -> tuple[float, float]:
    """(Pr[X > Y], Pr[X < Y]) for X ~ Bin(N, p), Y ~ Bin(N, q), independent."""
    key = ("cmp", n_draws, p, q)
    hit = _PROB_CACHE.get(key)
    if hit is not None:
        return hit
    k = np.arange(n_draws + 1)
    pmf_q = _binom.pmf(k, n_draws, q)
    alpha = float(np.dot(pmf_q, _binom.sf(k, n_draws, p)))
    beta = float(np.dot(pmf_q, _binom.cdf(k - 1, n_draws, p)))
    hit = (min(alpha, 1.0), min(beta, 1.0))
    _PROB_CACHE[key] = hit
    return hit


def chi2_accept_prob(alpha: float, beta: float) -> float:
    """Pr[A <= 40 and B <= 40] for (A, B) ~ Multinomial(64; alpha, beta)."""
    if alpha >= 1.0:
        return 0.0
    a = np.arange(0, CHI2_THRESHOLD + 1)
    pa = _binom.pmf(a, CHI2_TRIALS, alpha)
    ratio = min(beta / (1.0 - alpha), 1.0)
    pb = _binom.cdf(CHI2_THRESHOLD, CHI2_TRIALS - a, ratio)
    return float(np.dot(pa, pb))


def blackbox_survive_prob(n_draws: int, p: float, q: float, inner: int) -> float:
    """Probability that the inner majority tally over ``inner`` black-box runs
    is non-negative, for the chi-square black box on Ber(p) vs Ber(q)."""
    key = ("survive", n_draws, p, q, inner)
    hit = _PROB_CACHE.get(key)
    if hit is None:
        alpha, beta = chi2_trial_compare_probs(n_draws, p, q)
        gamma = chi2_accept_prob(alpha, beta)
        hit = float(_binom.sf(math.ceil(inner / 2) - 1, inner, gamma))
        _PROB_CACHE[key] = hit
    return hit


# ----------------------------------------------------------------------
# equivalence tester


def _collect_counters(oracles) -> list:
    seen = []
    for oracle in oracles:
        node = oracle
        while node is not None:
            counter = getattr(node, "counter", None)
            if counter is not None and all(counter is not c for c in seen):
                seen.append(counter)
            node = getattr(node, "base", None)
    return seen


def _counter_totals(counters) -> dict[str, int]:
    out = {cls.value: 0 for cls in QueryClass}
    for counter in counters:
        for cls, k in counter.counts.items():
            out[cls.value] += k
    return out


def _queries_delta(before: dict[str, int], counters) -> dict[str, int]:
    after = _counter_totals(counters)
    delta = {name: after[name] - before[name] for name in after}
    delta["total"] = sum(delta.values())
    return delta


def _charge_targets(oracle, kind: str) -> list:
    """(counter, class) pairs a query of ``kind`` hits, wrapper included —
    exactly what the sampled path's serving code charges."""
    own = QueryClass.PREFIX if kind == "prefix" else QueryClass.MARGINAL
    targets = [(oracle.counter, own)]
    base = getattr(oracle, "base", None)
    if base is None:
        return targets
    if isinstance(oracle, IntervalBackedPrefixOracle):
        inner = base.base.counter if hasattr(base, "base") else base.counter
        targets.append((inner, QueryClass.INTERVAL))
    elif isinstance(oracle, ProductMarginalOracle):
        targets.append((base.counter, QueryClass.PREFIX))
    elif isinstance(oracle, GeneralProductMarginalOracle):
        targets.append((base.counter, QueryClass.SUBCUBE))
    else:
        targets.append((base.counter, own))
    return targets


def _charge(oracle, kind: str, m: int) -> None:
    """Charge meters exactly as m queries of the sampled path would."""
    for counter, cls in _charge_targets(oracle, kind):
        counter.add(cls, m)


def _count_trials(oracle, kind: str, i: int, prefix_idx: int,
                  m: int, k: int) -> np.ndarray:
    """k independent counts of ones among m bit samples at (i, prefix);
    distribution-identical to m*k single-sample queries, charged as such."""
    p = oracle.exact_bit_prob(i, prefix_idx)
    _charge(oracle, kind, m * k)
    rng = getattr(oracle, "rng", None)
    if rng is None:
        rng = oracle.base.rng
    return rng.binomial(m, p, size=k)


def _run_equivalence_sampled(tau, mu, n: int, eps_l: float, rng) -> Verdict:
    def draw_y():
        i = int(rng.integers(1, n + 1))
        w_idx = int(tau.prefix_sample_index_batch(1)[0])
        return i, w_idx >> (n - i + 1)

    def black_box(y, eps_prime):
        i, prefix_idx = y
        sp = BitSampler(lambda m, k: _count_trials(mu, "marginal", i, prefix_idx, m, k))
        sq = BitSampler(lambda m, k: _count_trials(tau, "prefix", i, prefix_idx, m, k))
        return single_bit_chi2_test(sp, sq, eps_prime).accepted

    try:
        return levin_balance(draw_y, black_box, eps_l)
    except OracleError as err:
        if err.kind is OracleErrorKind.ZERO_PROBABILITY_CONDITION:
            # The prefix was drawn from tau, hence tau-positive; a dead mu
            # prefix is conclusive evidence that tau != mu.
            return Verdict(False, trace=[{"zero_probability_reject": True}])
        raise


def _run_equivalence_collapsed(tau, mu, n: int, eps_l: float, rng) -> Verdict:
    tau_targets = _charge_targets(tau, "prefix")
    mu_targets = _charge_targets(mu, "marginal")
    chunk = 512
    trace = []
    for t, eps_prime, outer, inner in levin_schedule(eps_l):
        n_draws = math.ceil(CHI2_SAMPLE_FACTOR / eps_prime)
        per_bb = CHI2_TRIALS * n_draws
        i_arr = rng.integers(1, n + 1, size=outer)
        u_arr = rng.random(outer)
        survive_memo: dict = {}
        buf = None
        buf_pos = 0
        for j in range(outer):
            # y-draws are real tau samples, pulled in meter-free chunks and
            # charged one prefix query per consumed draw, so a truncated
            # level is billed exactly as the literal loop would bill it.
            if buf is None or buf_pos == buf.shape[0]:
                buf = tau.sample_full_indices_uncounted(min(chunk, outer - j))
                buf_pos = 0
            w_idx = int(buf[buf_pos])
            buf_pos += 1
            i = int(i_arr[j])
            prefix_idx = w_idx >> (n - i + 1)
            key = (i, prefix_idx)
            survive = survive_memo.get(key)
            if survive is None:
                p_tau = tau.exact_bit_prob(i, prefix_idx)
                try:
                    p_mu = mu.exact_bit_prob(i, prefix_idx)
                except OracleError as err:
                    if err.kind is OracleErrorKind.ZERO_PROBABILITY_CONDITION:
                        for counter, cls in tau_targets:
                            counter.add(cls, 1)
                        for counter, cls in mu_targets:
                            counter.add(cls, 1)
                        trace.append({"t": t, "rejected_at": j,
                                      "zero_probability_reject": True})
                        return Verdict(False, trace=trace)
                    raise
                survive = blackbox_survive_prob(n_draws, p_mu, p_tau, inner)
                survive_memo[key] = survive
            cost = inner * per_bb
            for counter, cls in tau_targets:
                counter.add(cls, 1 + cost)
            for counter, cls in mu_targets:
                counter.add(cls, cost)
            if u_arr[j] >= survive:
                trace.append({"t": t, "eps_prime": eps_prime, "outer": outer,
                              "inner": inner, "rejected_at": j})
                return Verdict(False, trace=trace)
        trace.append({"t": t, "eps_prime": eps_prime, "outer": outer,
                      "inner": inner, "rejected_at": None})
    return Verdict(True, trace=trace)


def _resolve_mode(cfg: TestConfig, n: int) -> str:
    if cfg.mode != "auto":
        return cfg.mode
    budget = expected_equivalence_queries(n, cfg.epsilon)["total"]
    return "sampled" if budget <= cfg.sampled_budget_limit else "collapsed"


def _equivalence_core(tau, mu, n: int, cfg: TestConfig) -> Verdict:
    mode = _resolve_mode(cfg, n)
    rng = np.random.default_rng(cfg.seed)
    counters = _collect_counters([tau, mu])
    before = _counter_totals(counters)
    eps_l = slice_divergence_threshold(n, cfg.epsilon) / n
    if mode == "sampled":
        verdict = _run_equivalence_sampled(tau, mu, n, eps_l, rng)
    else:
        verdict = _run_equivalence_collapsed(tau, mu, n, eps_l, rng)
    verdict.queries_used = _queries_delta(before, counters)
    verdict.trace.append({"mode": mode, "eps_levin": eps_l})
    return verdict


def equivalence_test(tau, mu, cfg: TestConfig) -> Verdict:
    """eps-test for equivalence of two distributions over {0,1}^n.

    ``tau`` needs prefix access, ``mu`` marginal-prefix access.  Accepts
    tau = mu and rejects dtv(tau, mu) > eps, each with probability >= 2/3.
    """
    n = tau.n
    if getattr(mu, "n", n) != n:
        raise ValueError(f"dimension mismatch: tau has n={n}, mu has n={mu.n}")
    return _equivalence_core(tau, mu, n, cfg)


def product_test(mu, cfg: TestConfig) -> Verdict:
    """eps-test for mu being a product distribution.

    Runs the equivalence tester against the product of mu's marginals, whose
    marginal-prefix queries are simulated through mu itself.  For binary
    domains every emitted query is a prefix query.
    """
    marginal_view = product_marginal_oracle(mu)
    verdict = _equivalence_core(mu, marginal_view, mu.n, cfg)
    base = mu
    while getattr(base, "base", None) is not None:
        base = base.base
    prefix_only = (base.counter.counts.get(QueryClass.INTERVAL, 0) == 0
                   and base.counter.counts.get(QueryClass.SUBCUBE, 0) == 0)
    verdict.trace.append({"prefix_queries_only": prefix_only})
    return verdict


def equivalence_test_general(tau, mu, cfg: TestConfig) -> Verdict:
    """Equivalence test over a general tuple domain via binary encoding.

    Each binary query translates to exactly one query on the underlying
    tuple oracle; the effective dimension is the total encoded bit width.
    """
    tau_bin = binary_encode(tau)
    mu_bin = binary_encode(mu)
    if tau_bin.n != mu_bin.n:
        raise ValueError("tau and mu must share a domain")
    return _equivalence_core(tau_bin, mu_bin, tau_bin.n, cfg)


class _PaddedIntervalView:
    """Interval oracle over [2^ell] backed by one over [N], N <= 2^ell; the
    padding elements carry zero probability."""

    def __init__(self, base: IntervalOracle, ell: int):
        self.base = base
        self.N = 1 << ell

    @property
    def counter(self):
        return self.base.counter

    @property
    def rng(self):
        return self.base.rng

    @property
    def cdf(self):
        # The padding carries no mass, so the base cdf already covers the
        # padded domain for sampling purposes.
        return self.base.cdf

    def interval_mass(self, a: int, b: int) -> float:
        if a > self.base.N:
            return 0.0
        return self.base.interval_mass(a, min(b, self.base.N))

    def interval_sample(self, a: int, b: int) -> int:
        if a > self.base.N:
            self.base.counter.add(QueryClass.INTERVAL)
            raise OracleError(OracleErrorKind.ZERO_PROBABILITY_CONDITION,
                              "interval lies in the zero-probability padding")
        return self.base.interval_sample(a, min(b, self.base.N))

    def interval_split_count(self, a: int, b: int, mid: int, m: int) -> int:
        if mid > self.base.N:
            self.base.counter.add(QueryClass.INTERVAL, m)
            return 0
        return self.base.interval_split_count(a, min(b, self.base.N),
                                              mid, m)


def interval_equivalence_test(tau: IntervalOracle, mu: IntervalOracle,
                              cfg: TestConfig) -> Verdict:
    """Equivalence test for two distributions over [N] with interval access.

    Pads to the next power of two and runs the binary equivalence tester
    with every prefix query translated to one interval query.
    """
    if tau.N != mu.N:
        raise ValueError(f"domain mismatch: {tau.N} vs {mu.N}")
    if tau.N == 1:
        return Verdict(True, queries_used={cls.value: 0 for cls in QueryClass} | {"total": 0},
                       trace=[{"vacuous": True}])
    ell = max(1, math.ceil(math.log2(tau.N)))
    tau_view = tau if tau.N == 1 << ell else _PaddedIntervalView(tau, ell)
    mu_view = mu if mu.N == 1 << ell else _PaddedIntervalView(mu, ell)
    tau_bits = IntervalBackedPrefixOracle(tau_view, ell)
    mu_bits = IntervalBackedPrefixOracle(mu_view, ell)
    return _equivalence_core(tau_bits, mu_bits, ell, cfg)
