"""Command-line entry point: ``pillarstokes <study> [--config FILE] [overrides]``."""
from __future__ import annotations

import argparse
import sys

from .experiments.config import ConfigError, Study, load_config
from .experiments.studies import run_study

# flag name -> config key; values are parsed by the config loader
_FLAGS = {
    "--m": "m",
    "--m-list": "m_list",
    "--h-list": "h_list",
    "--delta": "delta",
    "--delta-list": "delta_list",
    "--rho": "rho",
    "--N-g": "N_g",
    "--L-x": "L_x",
    "--L-y": "L_y",
    "--L-b": "L_b",
    "--buffer-list": "buffer_list",
    "--setups": "setups",
    "--mu": "mu",
    "--precond": "precond",
    "--gamma0": "gamma0",
    "--gamma0-list": "gamma0_list",
    "--field-m": "field_m",
    "--rel-tol": "rel_tol",
    "--abs-tol": "abs_tol",
    "--max-iter": "max_iter",
    "--restart": "restart",
    "--seed": "seed",
    "--output-dir": "output_dir",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pillarstokes", description="Stokes flow through pillar arrays: validation studies.")
    sub = parser.add_subparsers(dest="study", required=True)
    helps = {
        Study.INFSUP: "discrete inf-sup constant against pillar density",
        Study.CONVERGENCE: "P2-P1 convergence at fixed density against P3-P2",
        Study.AMPLIFY: "error amplification at fixed local resolution",
        Study.BUFFERS: "velocity-driven runs with inlet/outlet buffers",
        Study.BENCH: "Std against augmented Lagrangian FGMRES iteration counts",
        Study.MESH: "mesh generation and Triangle-format export only",
    }
    for study, text in helps.items():
        p = sub.add_parser(study.value, help=text)
        p.add_argument("--config", help="key = value file with ExperimentConfig fields")
        for flag, key in _FLAGS.items():
            p.add_argument(flag, dest=key, metavar=key.upper(), help=f"override {key} (lists comma separated)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config field")
        p.add_argument("--export-matrices", action="store_true", help="write Matrix Market files of the blocks")
        p.add_argument("--large", action="store_true", help="allow m above the desk-scale limit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, key) for key in _FLAGS.values()}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    if args.export_matrices:
        overrides["export_matrices"] = True
    if args.large:
        overrides["large"] = True
    try:
        cfg = load_config(args.study, args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run_study(cfg)
    for row in result.rows:
        if row.get("status") != "ok":
            print(f"row m={row.get('m')}: {row['status']}", file=sys.stderr)
    print(f"{cfg.study.value}: {len(result.rows) - result.failures}/{len(result.rows)} rows ok -> {result.csv_path}")
    if "slope_fit" in result.extra:
        print(f"slope fit: {result.extra['slope_fit']}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
