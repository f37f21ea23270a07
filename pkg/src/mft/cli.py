"""Command-line entry point.

    mft run --config PATH --out DIR [--seeds N] [--horizon T]
            [--policy NAME] [--scheme NAME] [--verbose-components]
    mft compare-selection --config PATH --out DIR
    mft figures --in DIR --out DIR

`figures` discovers *_aggregate.csv files in the input directory and
delegates rendering to the figure tool (resolved from $MFT_FIGURES_BIN,
then `mft-figures` on PATH, then the bundled frontend build).
"""

from __future__ import annotations

import argparse
import os
import shlex
import shutil
import subprocess
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError
from .harness import run_experiment, selection_comparison

__all__ = ["main"]


def _cmd_run(args) -> int:
    cfg = load_config(
        args.config,
        seeds=args.seeds,
        horizon=args.horizon,
        policy=args.policy,
        scheme=args.scheme,
        verbose_components=args.verbose_components,
    )
    result = run_experiment(cfg, out_dir=args.out)
    final = result.aggregates[-1]
    print(f"{cfg.label}: policy={cfg.policy.kind} seeds={cfg.seeds} "
          f"T={cfg.horizon} mean regret={final.regret_mean:.4g} "
          f"(n_eff={final.n_eff}, diverged={len(result.diverged_seeds)})")
    return 0


def _cmd_compare_selection(args) -> int:
    cfg = load_config(args.config)
    results = selection_comparison(cfg, out_dir=args.out)
    for scheme, aggs in results.items():
        print(f"selection_{scheme}: mean relative regret at T "
              f"= {aggs[-1].regret_mean:.4g}")
    return 0


def _figures_command() -> list[str]:
    env_bin = os.environ.get("MFT_FIGURES_BIN")
    if env_bin:
        return shlex.split(env_bin)
    on_path = shutil.which("mft-figures")
    if on_path:
        return [on_path]
    for root in (Path.cwd(), Path(__file__).resolve().parents[2]):
        bundled = root / "frontend" / "dist" / "cli.js"
        if bundled.is_file():
            node = shutil.which("node")
            if node:
                return [node, str(bundled)]
    raise ConfigError(
        "no figure renderer found: set MFT_FIGURES_BIN, put mft-figures on "
        "PATH, or build the frontend (cd frontend && npm install && npm run build)"
    )


def _discover_figures(in_dir: Path, out_dir: Path):
    """Map aggregate CSVs in a directory to the figure kinds to render."""
    files = sorted(in_dir.glob("*_aggregate.csv"))
    if not files:
        raise ConfigError(f"no *_aggregate.csv files in {in_dir}")
    labels = {f.name[: -len("_aggregate.csv")]: f for f in files}
    regular = {k: v for k, v in labels.items() if not k.startswith("selection_")}
    selection = {k[len("selection_"):]: v for k, v in labels.items()
                 if k.startswith("selection_")}
    has_naive = any(k.startswith("naive") for k in regular)
    has_plain = any(not k.startswith("naive") for k in regular)

    jobs = []
    if regular:
        jobs.append(("regret", regular, out_dir / "regret.svg"))
        jobs.append(("regret_over_sqrt_t", regular, out_dir / "regret_sqrt.svg"))
    if has_naive and has_plain:
        jobs.append(("comparison", regular, out_dir / "comparison.svg"))
    if selection:
        jobs.append(("selection", selection, out_dir / "selection.svg"))
    return jobs


def _cmd_figures(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    if not in_dir.is_dir():
        raise ConfigError(f"input directory not found: {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    command = _figures_command()
    for kind, inputs, out_file in _discover_figures(in_dir, out_dir):
        inputs_arg = ",".join(f"{label}={path}"
                              for label, path in sorted(inputs.items()))
        argv = command + ["--kind", kind, "--inputs", inputs_arg,
                          "--out", str(out_file)]
        proc = subprocess.run(argv)
        if proc.returncode != 0:
            raise ConfigError(f"figure renderer failed for kind={kind} "
                              f"(exit {proc.returncode})")
        print(f"wrote {out_file}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mft",
        description="Adaptive control experiments for LQ mean-field teams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", required=True)
    run_p.add_argument("--seeds", type=int, default=None)
    run_p.add_argument("--horizon", type=int, default=None)
    run_p.add_argument("--policy", default=None,
                       choices=["tsde_mf", "naive_tsde", "optimal", "fixed_gain"])
    run_p.add_argument("--scheme", default=None)
    run_p.add_argument("--verbose-components", action="store_true")
    run_p.set_defaults(func=_cmd_run)

    cmp_p = sub.add_parser("compare-selection",
                           help="sweep the agent-selection schemes")
    cmp_p.add_argument("--config", required=True)
    cmp_p.add_argument("--out", required=True)
    cmp_p.set_defaults(func=_cmd_compare_selection)

    fig_p = sub.add_parser("figures", help="render figures from aggregate CSVs")
    fig_p.add_argument("--in", dest="in_dir", required=True)
    fig_p.add_argument("--out", required=True)
    fig_p.set_defaults(func=_cmd_figures)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
