"""Command-line entry point: ``sfsim run|compare|oracle-check|show-manifest``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ArgumentError, IntegrityError, ResourceError
from .harness import (
    RunConfig,
    compare_connected_disconnected,
    fmt,
    load_config,
    oracle_check,
    run_sweep,
)

EXIT_ARGUMENT, EXIT_RESOURCE, EXIT_INTEGRITY = 2, 3, 4


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


_FLAG_TYPES = {
    "L1": int, "L2": int, "alpha1": float, "alpha2": float, "Np": int, "T": int,
    "gate_kind": str, "custom_gate": json.loads, "realizations": int, "master_seed": int,
    "mode": str, "fraction": float, "workers": int, "oracle_check": _bool,
    "oracle_cap": int, "max_trajectories": int, "sample_rescale": _bool, "output_path": str,
}


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="YAML config file, manifest.json, or result directory")
    group = p.add_argument_group("overrides (same names as the config fields)")
    for name, typ in _FLAG_TYPES.items():
        group.add_argument(f"--{name}", type=typ, default=None, metavar=name.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_args(sub.add_parser("run", help="disorder-averaged survival probability sweep"))
    _add_config_args(sub.add_parser("compare", help="connected vs disconnected on identical realizations"))
    oc = sub.add_parser("oracle-check", help="compare the engine against full state-vector evolution")
    _add_config_args(oc)
    oc.add_argument("--tolerance", type=float, default=1e-10)
    sm = sub.add_parser("show-manifest", help="print the manifest of a result directory")
    sm.add_argument("result_dir")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {name: getattr(args, name) for name in _FLAG_TYPES}


def _print_table(mean, se, label: str = "mean_L") -> None:
    print(f"t\t{label}\tstderr")
    for t, (m, e) in enumerate(zip(mean, se)):
        print(f"{t}\t{fmt(m)}\t{fmt(e)}")


def _cmd_run(cfg: RunConfig) -> int:
    res = run_sweep(cfg)
    _print_table(res.mean, res.stderr)
    if res.oracle_max_deviation is not None:
        print(f"oracle max |L_sf - L_oracle| = {res.oracle_max_deviation:.3e}")
    return 0


def _cmd_compare(cfg: RunConfig) -> int:
    from .harness import aggregate

    res = compare_connected_disconnected(cfg)
    mc, ec = aggregate(res.connected_values)
    md, ed = aggregate(res.disconnected_values)
    print("t\tmean_connected\tstderr_connected\tmean_disconnected\tstderr_disconnected")
    for t in range(cfg.T + 1):
        print(f"{t}\t{fmt(mc[t])}\t{fmt(ec[t])}\t{fmt(md[t])}\t{fmt(ed[t])}")
    return 0


def _cmd_oracle_check(cfg: RunConfig, tolerance: float) -> int:
    devs = oracle_check(cfg)
    for i, d in enumerate(devs):
        print(f"realization {i}: max deviation {d:.3e}")
    worst = max(devs)
    ok = worst <= tolerance
    print(f"{'PASS' if ok else 'FAIL'}: max deviation {worst:.3e} (tolerance {tolerance:.1e})")
    return 0 if ok else 1


def _cmd_show_manifest(result_dir: str) -> int:
    path = Path(result_dir) / "manifest.json"
    if not path.is_file():
        raise ArgumentError(f"no manifest.json in {result_dir}")
    print(json.dumps(json.loads(path.read_text(encoding="utf-8")), indent=2, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "show-manifest":
            return _cmd_show_manifest(args.result_dir)
        cfg = load_config(args.config, _overrides(args))
        if args.command == "run":
            return _cmd_run(cfg)
        if args.command == "compare":
            return _cmd_compare(cfg)
        return _cmd_oracle_check(cfg, args.tolerance)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
