"""Experiment harness: seeded repetition driver, aggregate statistics, and
plot-ready CSV/JSON emission.

Replay contract: a spec plus master seed determines every byte of the CSV
output.  Per-repetition RNG streams are spawned from the master seed with
``numpy``'s SeedSequence, so repetitions are order-independent; wall-clock
time is reported only in the JSON summary, never in the CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import beta as _beta

from . import adversarial, distcore, oracles, testers

EXPERIMENT_KINDS = ("equivalence", "product", "interval", "single-bit",
                    "inequality-grid", "adversarial-distance", "scaling-sweep")

CONFIDENCE_METHOD = "clopper-pearson one-sided 0.99"
OUT_DIR_ENV = "CONDTEST_OUT_DIR"

_COLUMNS = {
    "verdict": ["experiment_id", "kind", "rep", "seed", "n", "eps", "verdict",
                "unconditional", "prefix", "subcube", "marginal", "interval",
                "total_queries"],
    "inequality-grid": ["p", "q", "chi2", "kl_bound", "violation"],
    "adversarial-distance": ["rep", "n", "eps", "biases", "method",
                             "grid_step", "grid_distance",
                             "dtv_product_of_marginals"],
    "scaling-sweep": ["n", "eps", "runs", "median_queries", "p25", "p75"],
}


def _schema_of(kind: str) -> str:
    if kind in ("equivalence", "product", "interval", "single-bit"):
        return "verdict"
    return kind


class HarnessError(Exception):
    pass


@dataclass
class ExperimentSpec:
    kind: str
    n: int | None = None
    eps: float | None = None
    N: int | None = None
    runs: int = 1
    seed: int = 0
    tau: str | None = None
    mu: str | None = None
    p: float | None = None
    q: float | None = None
    grid_step: float = 0.01
    n_list: tuple = ()
    eps_list: tuple = ()
    mode: str = "auto"
    out: str | None = None
    experiment_id: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise HarnessError(f"unknown experiment kind {self.kind!r}; "
                               f"expected one of {EXPERIMENT_KINDS}")
        if self.runs < 1:
            raise HarnessError(f"runs must be >= 1, got {self.runs}")
        if self.experiment_id is None:
            self.experiment_id = f"{self.kind}-seed{self.seed}"


@dataclass
class ResultRow:
    kind: str
    data: dict = field(default_factory=dict)


# ----------------------------------------------------------------------
# distribution sources


def load_distribution(source: str, n: int | None = None) -> distcore.DistributionTable:
    """Resolve a binary-domain distribution source.

    Accepts the shorthands ``uniform`` (requires n), ``point:<bitstring>``,
    ``bernoulli:<p>`` (repeated n times) or ``bernoulli:p1,p2,...``, or a
    path to a JSON file (dense table, conditional tree, or a paired-bias
    instance with a "biases" key).
    """
    if source == "uniform":
        if n is None:
            raise HarnessError("'uniform' needs an explicit n")
        return distcore.DistributionTable.uniform(n)
    if source.startswith("point:"):
        spec = source[len("point:"):]
        if not spec or any(c not in "01" for c in spec):
            raise HarnessError(f"bad point-mass spec {source!r}")
        bits = [int(c) for c in spec]
        return distcore.DistributionTable.point_mass(bits)
    if source.startswith("bernoulli:"):
        parts = source[len("bernoulli:"):].split(",")
        ps = [float(x) for x in parts]
        if len(ps) == 1 and n is not None:
            ps = ps * n
        return distcore.DistributionTable.bernoulli_product(ps)
    path = Path(source)
    if not path.exists():
        raise HarnessError(f"distribution source {source!r} is neither a "
                           "shorthand nor an existing file")
    payload = json.loads(path.read_text())
    if "biases" in payload:
        return adversarial.AdversarialInstance.from_json(path.read_text()).table()
    return distcore.DistributionTable.from_json(path.read_text())


def load_interval_pmf(source: str, N: int) -> np.ndarray:
    """Resolve a pmf over [N]: ``uniform``, ``block:a,b`` (uniform on the
    sub-range [a, b]), or a JSON file with a "pmf" array."""
    if source == "uniform":
        return np.full(N, 1.0 / N)
    if source.startswith("block:"):
        a, b = (int(x) for x in source[len("block:"):].split(","))
        if not 1 <= a <= b <= N:
            raise HarnessError(f"bad block [{a}, {b}] for N={N}")
        pmf = np.zeros(N)
        pmf[a - 1:b] = 1.0 / (b - a + 1)
        return pmf
    path = Path(source)
    if not path.exists():
        raise HarnessError(f"pmf source {source!r} is neither a shorthand "
                           "nor an existing file")
    pmf = np.asarray(json.loads(path.read_text())["pmf"], dtype=np.float64)
    if pmf.shape[0] != N:
        raise HarnessError(f"pmf has {pmf.shape[0]} entries, expected {N}")
    return pmf


# ----------------------------------------------------------------------
# statistics


def rate_lower_bound(successes: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided Clopper-Pearson lower confidence bound on a binomial rate."""
    if not 0 <= successes <= trials:
        raise HarnessError("successes out of range")
    if successes == 0:
        return 0.0
    return float(_beta.ppf(1.0 - confidence, successes, trials - successes + 1))


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


# ----------------------------------------------------------------------
# per-kind drivers


def _verdict_row(spec: ExperimentSpec, rep: int, seed_label: str,
                 verdict: testers.Verdict) -> ResultRow:
    q = verdict.queries_used
    return ResultRow(spec.kind, {
        "experiment_id": spec.experiment_id,
        "kind": spec.kind,
        "rep": rep,
        "seed": seed_label,
        "n": spec.n if spec.kind != "interval" else spec.N,
        "eps": spec.eps,
        "verdict": verdict.decision,
        "unconditional": q.get("unconditional", 0),
        "prefix": q.get("prefix", 0),
        "subcube": q.get("subcube", 0),
        "marginal": q.get("marginal", 0),
        "interval": q.get("interval", 0),
        "total_queries": q.get("total", 0),
    })


def _spawned(spec: ExperimentSpec, count: int):
    return np.random.SeedSequence(spec.seed).spawn(count)


def _run_equivalence(spec: ExperimentSpec) -> list[ResultRow]:
    if spec.n is None or spec.eps is None or spec.tau is None or spec.mu is None:
        raise HarnessError("equivalence needs n, eps, tau, mu")
    tau_table = load_distribution(spec.tau, spec.n)
    mu_table = load_distribution(spec.mu, spec.n)
    rows = []
    for rep, child in enumerate(_spawned(spec, spec.runs)):
        s_tau, s_mu, s_test = child.spawn(3)
        tau = oracles.TableOracle(tau_table, seed=s_tau)
        mu = oracles.TableOracle(mu_table, seed=s_mu)
        cfg = testers.TestConfig(spec.eps, seed=s_test, mode=spec.mode)
        verdict = testers.equivalence_test(tau, mu, cfg)
        rows.append(_verdict_row(spec, rep, f"{spec.seed}/{rep}", verdict))
    return rows


def _run_product(spec: ExperimentSpec) -> list[ResultRow]:
    if spec.n is None or spec.eps is None or spec.mu is None:
        raise HarnessError("product needs n, eps, mu")
    mu_table = load_distribution(spec.mu, spec.n)
    rows = []
    for rep, child in enumerate(_spawned(spec, spec.runs)):
        s_mu, s_test = child.spawn(2)
        mu = oracles.TableOracle(mu_table, seed=s_mu)
        cfg = testers.TestConfig(spec.eps, seed=s_test, mode=spec.mode)
        verdict = testers.product_test(mu, cfg)
        rows.append(_verdict_row(spec, rep, f"{spec.seed}/{rep}", verdict))
    return rows


def _run_interval(spec: ExperimentSpec) -> list[ResultRow]:
    if spec.N is None or spec.eps is None or spec.tau is None or spec.mu is None:
        raise HarnessError("interval needs N, eps, tau, mu")
    tau_pmf = load_interval_pmf(spec.tau, spec.N)
    mu_pmf = load_interval_pmf(spec.mu, spec.N)
    rows = []
    for rep, child in enumerate(_spawned(spec, spec.runs)):
        s_tau, s_mu, s_test = child.spawn(3)
        tau = oracles.IntervalOracle(tau_pmf, seed=s_tau)
        mu = oracles.IntervalOracle(mu_pmf, seed=s_mu)
        cfg = testers.TestConfig(spec.eps, seed=s_test, mode=spec.mode)
        verdict = testers.interval_equivalence_test(tau, mu, cfg)
        rows.append(_verdict_row(spec, rep, f"{spec.seed}/{rep}", verdict))
    return rows


def _run_single_bit(spec: ExperimentSpec) -> list[ResultRow]:
    if spec.p is None or spec.q is None or spec.eps is None:
        raise HarnessError("single-bit needs p, q, eps")
    rows = []
    for rep, child in enumerate(_spawned(spec, spec.runs)):
        rng = np.random.default_rng(child)
        sp = testers.BitSampler.from_probability(spec.p, rng)
        sq = testers.BitSampler.from_probability(spec.q, rng)
        verdict = testers.single_bit_chi2_test(sp, sq, spec.eps)
        row = _verdict_row(spec, rep, f"{spec.seed}/{rep}", verdict)
        row.data["total_queries"] = sp.count + sq.count
        rows.append(row)
    return rows


def _run_inequality_grid(spec: ExperimentSpec) -> list[ResultRow]:
    rows = []
    for pi in range(101):
        p = pi / 100.0
        for qi in range(1, 100):
            q = qi / 100.0
            chi2 = distcore.single_bit_divergence(distcore.DivergenceKind.CHI2, p, q)
            kl = distcore.single_bit_divergence(distcore.DivergenceKind.KL, p, q)
            bound = kl / (12.0 * math.log2(max(1.0 / q, 1.0 / (1.0 - q))))
            rows.append(ResultRow(spec.kind, {
                "p": p, "q": q, "chi2": chi2, "kl_bound": bound,
                "violation": int(chi2 < bound - 1e-12),
            }))
    return rows


def _run_adversarial_distance(spec: ExperimentSpec) -> list[ResultRow]:
    if spec.n is None or spec.eps is None:
        raise HarnessError("adversarial-distance needs n, eps")
    rows = []
    for rep, child in enumerate(_spawned(spec, spec.runs)):
        rng = np.random.default_rng(child)
        inst = adversarial.sample_paired_instance(spec.n, spec.eps, rng)
        if spec.n <= 4:
            result = adversarial.distance_to_grid_products(inst.table(),
                                                           spec.grid_step)
        else:
            result = adversarial.pairwise_product_distance_bound(inst,
                                                                 spec.grid_step)
        dtv_pom = (adversarial.distance_to_product_of_marginals(inst.table())
                   if spec.n <= distcore.MAX_DENSE_N else float("nan"))
        rows.append(ResultRow(spec.kind, {
            "rep": rep, "n": spec.n, "eps": spec.eps,
            "biases": "".join("+" if b > 0 else "-" for b in inst.biases),
            "method": result.method, "grid_step": result.step,
            "grid_distance": result.distance,
            "dtv_product_of_marginals": dtv_pom,
        }))
    return rows


def _run_scaling_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    if not spec.n_list or not spec.eps_list:
        raise HarnessError("scaling-sweep needs n_list and eps_list")
    rows = []
    for n in spec.n_list:
        for eps in spec.eps_list:
            sub = ExperimentSpec(kind="equivalence", n=n, eps=eps,
                                 runs=spec.runs, seed=spec.seed,
                                 tau="uniform", mu="uniform", mode=spec.mode)
            totals = [row.data["total_queries"] for row in _run_equivalence(sub)]
            rows.append(ResultRow(spec.kind, {
                "n": n, "eps": eps, "runs": spec.runs,
                "median_queries": float(np.median(totals)),
                "p25": float(np.percentile(totals, 25)),
                "p75": float(np.percentile(totals, 75)),
            }))
    return rows


_DRIVERS = {
    "equivalence": _run_equivalence,
    "product": _run_product,
    "interval": _run_interval,
    "single-bit": _run_single_bit,
    "inequality-grid": _run_inequality_grid,
    "adversarial-distance": _run_adversarial_distance,
    "scaling-sweep": _run_scaling_sweep,
}


# ----------------------------------------------------------------------
# aggregation and emission


def summarize(rows: list[ResultRow]) -> dict:
    """Pure fold over rows; recomputable from the emitted CSV."""
    if not rows:
        return {"rows": 0}
    kind = rows[0].kind
    summary: dict = {"kind": kind, "rows": len(rows),
                     "confidence_method": CONFIDENCE_METHOD}
    if _schema_of(kind) == "verdict":
        accepts = sum(1 for r in rows if r.data["verdict"] == "accept")
        total = len(rows)
        summary.update({
            "accepts": accepts,
            "rejects": total - accepts,
            "accept_rate": accepts / total,
            "accept_rate_lb99": rate_lower_bound(accepts, total),
            "reject_rate_lb99": rate_lower_bound(total - accepts, total),
            "median_total_queries": float(np.median(
                [r.data["total_queries"] for r in rows])),
        })
    elif kind == "inequality-grid":
        summary["violations"] = int(sum(r.data["violation"] for r in rows))
    elif kind == "adversarial-distance":
        summary["min_grid_distance"] = min(r.data["grid_distance"] for r in rows)
    return summary


def emit_plot_data(rows: list[ResultRow], kind: str | None = None) -> str:
    """Render rows as CSV text with the frozen per-kind column schema.

    Deterministic: identical rows give identical bytes.  ``kind`` is only
    needed for an empty row set (header-only output); mixing kinds in one
    call is a schema error.
    """
    kinds = {row.kind for row in rows}
    if len(kinds) > 1:
        raise HarnessError(f"mixed experiment kinds in one emission: {sorted(kinds)}")
    if rows:
        kind = rows[0].kind
    elif kind is None:
        raise HarnessError("empty row set needs an explicit kind for the header")
    columns = _COLUMNS[_schema_of(kind)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.data[c]) for c in columns])
    return buf.getvalue()


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "condtest-out"))


def run_experiment(spec: ExperimentSpec, write: bool = True):
    """Execute a spec: repetition rows, aggregate summary, optional emission.

    Returns (rows, summary).  With ``write`` and an output directory set (or
    defaulted), writes <id>.csv (replay-stable) and <id>.json (summary plus
    wall time and the spec)."""
    start = time.perf_counter()
    rows = _DRIVERS[spec.kind](spec)
    wall = time.perf_counter() - start
    summary = summarize(rows)
    summary["wall_time_s"] = wall
    if write:
        out_dir = Path(spec.out) if spec.out else default_out_dir()
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{spec.experiment_id}.csv").write_text(
            emit_plot_data(rows, spec.kind))
        payload = {"spec": {f.name: getattr(spec, f.name) for f in fields(spec)},
                   "summary": summary}
        (out_dir / f"{spec.experiment_id}.json").write_text(
            json.dumps(payload, indent=2, default=str) + "\n")
    return rows, summary
