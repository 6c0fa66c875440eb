"""Command-line entry point for the experiment harness.

Every subcommand builds an ExperimentSpec and runs it.  A JSON config file
(--config) may supply any flag under its long name (hyphens or underscores);
explicit command-line flags win.  The default output directory comes from
the CONDTEST_OUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ExperimentSpec, HarnessError, default_out_dir, run_experiment

_DEFAULTS = {"runs": 1, "seed": 0, "grid_step": 0.01, "mode": "auto"}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--runs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory (default: "
                        "$CONDTEST_OUT_DIR or ./condtest-out)")
    parser.add_argument("--mode", choices=("auto", "sampled", "collapsed"))
    parser.add_argument("--config", help="JSON file mirroring the flags; "
                        "explicit flags win")
    parser.add_argument("--id", dest="experiment_id")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condtest",
        description="Conditional-sampling distribution testers: experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test-equivalence",
                       help="equivalence tester accept/reject experiment")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--tau", help="distribution source (file or shorthand)")
    p.add_argument("--mu", help="distribution source (file or shorthand)")
    _add_common(p)

    p = sub.add_parser("test-product", help="product tester experiment")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--mu")
    _add_common(p)

    p = sub.add_parser("test-interval",
                       help="interval-oracle equivalence experiment")
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--eps", type=float)
    p.add_argument("--tau", help="pmf source (file, 'uniform', or 'block:a,b')")
    p.add_argument("--mu", help="pmf source")
    _add_common(p)

    p = sub.add_parser("check-inequalities",
                       help="chi-square vs KL divergence grid check")
    _add_common(p)

    p = sub.add_parser("adversarial-distance",
                       help="distance of paired-bias instances to product "
                            "distributions")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--grid-step", type=float, dest="grid_step")
    _add_common(p)

    p = sub.add_parser("sweep", help="query-count scaling sweep")
    p.add_argument("--kind", choices=("equivalence",), default="equivalence")
    p.add_argument("--n-list", dest="n_list",
                   help="comma-separated dimensions, e.g. 4,8,16")
    p.add_argument("--eps-list", dest="eps_list",
                   help="comma-separated distances, e.g. 0.3,0.5")
    _add_common(p)

    return parser


_COMMAND_KIND = {
    "test-equivalence": "equivalence",
    "test-product": "product",
    "test-interval": "interval",
    "check-inequalities": "inequality-grid",
    "adversarial-distance": "adversarial-distance",
    "sweep": "scaling-sweep",
}


def _merge_config(args: argparse.Namespace) -> dict:
    merged: dict = {}
    if getattr(args, "config", None):
        payload = json.loads(Path(args.config).read_text())
        merged.update({k.replace("-", "_"): v for k, v in payload.items()})
    for key, value in vars(args).items():
        if key in ("command", "config", "kind"):
            continue
        if value is not None:
            merged[key] = value
    for key, value in _DEFAULTS.items():
        merged.setdefault(key, value)
    return merged


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    merged = _merge_config(args)
    for key in ("n_list", "eps_list"):
        value = merged.get(key)
        if isinstance(value, str):
            cast = int if key == "n_list" else float
            merged[key] = tuple(cast(x) for x in value.split(","))
        elif value is not None:
            merged[key] = tuple(value)
    merged = {k: v for k, v in merged.items() if v is not None}
    try:
        return ExperimentSpec(kind=_COMMAND_KIND[args.command], **merged)
    except TypeError as err:
        raise HarnessError(f"unrecognized option in config or flags: {err}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        rows, summary = run_experiment(spec)
    except HarnessError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    out_dir = Path(spec.out) if spec.out else default_out_dir()
    print(json.dumps(summary, indent=2, default=str))
    print(f"wrote {out_dir / spec.experiment_id}.csv and .json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
