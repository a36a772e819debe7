"""Command-line entry point for scenario runs."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import signals
from .exceptions import ConfigurationError
from .harness import (default_config_path, emit_artifacts, load_config,
                      run_scenario, validate_strict_paper)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="simulate",
        description="Simulate a 16-channel DWDM radio-over-fiber link and "
                    "emit metric/spectrum/eye CSV artifacts.",
    )
    ap.add_argument("--config", default=str(default_config_path()),
                    help="configuration file (sectioned key=value text)")
    ap.add_argument("--out", required=True, help="output directory for CSV artifacts")
    ap.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    ap.add_argument("--distances", default=None,
                    help="comma-separated distances in km, overriding the config")
    ap.add_argument("--scenario", choices=["soa", "scro", "both"], default=None,
                    help="mitigation scenario(s) to run")
    ap.add_argument("--strict-paper", action="store_true",
                    help="reject configurations outside the published architecture ranges")
    ap.add_argument("--threads", type=int, default=1,
                    help="FFT worker threads (recorded in the manifest)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    signals.set_fft_workers(args.threads)
    try:
        cfg = load_config(args.config)
        run = cfg.run
        if args.seed is not None:
            run = replace(run, master_seed=args.seed)
        if args.distances is not None:
            try:
                dists = tuple(float(x) for x in args.distances.split(",") if x.strip())
            except ValueError:
                raise ConfigurationError("--distances expects comma-separated numbers")
            if not dists:
                raise ConfigurationError("--distances is empty")
            run = replace(run, distances_km=dists)
        if args.scenario is not None:
            run = replace(run, mitigation=args.scenario)
        cfg = replace(cfg, run=run)
        if args.strict_paper:
            validate_strict_paper(cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    result = run_scenario(cfg, progress=lambda msg: print(f"[simulate] {msg}", flush=True))
    emit_artifacts(result, args.out)
    for p in result.points:
        status = "ok" if p.status == "ok" else f"FAILED: {p.reason}"
        print(f"[simulate] {p.scenario} @ {p.distance_km:g} km: {status}")
    print(f"[simulate] artifacts written to {args.out} "
          f"({result.telemetry['points_ok']} ok, {result.telemetry['points_failed']} failed)")
    return EXIT_OK if result.all_ok else EXIT_PARTIAL


if __name__ == "__main__":
    raise SystemExit(main())
