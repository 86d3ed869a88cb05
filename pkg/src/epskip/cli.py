"""Command-line interface for the benchmark harness."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .harness import run_experiment_matrix

CONFIG_KEYS = """\
config file keys (JSON object):
  sampler     "euler" | "ddim" | "ab2" | "res2m"            (default "euler")
  steps       number of schedule transitions                 (required unless
              the schedule is two_stage, where it is derived)
  seed        integer RNG seed for the starting latent       (default 0)
  shape       latent dimensions, e.g. [1, 4, 32, 32]         (default shown)
  schedule    {"kind": "simple" | "karras" | "two_stage",
               "sigma_max": float, "sigma_min": float,
               "rho": float (karras), "append_zero": bool,
               "first"/"second": stage specs with their own "steps" (two_stage)}
  model       {"kind": "gaussian", "mean": ..., "variance": ...}
              {"kind": "gaussian_mixture", "weights": [...], "variances": [...],
               "means": [...] or "means_seed": int (+ "means_scale": float)}
              {"kind": "scripted", "epsilons": [...]}
  variants    list of {"name": str, "skip": {...}, "stabilizer": {...}}

variant skip keys:
  mode                  "none" | "fixed" | "adaptive" | "explicit"
  order                 "h2" | "h3" | "h4"          (fixed / explicit)
  skip_calls            real calls per skip cycle   (fixed, default 3)
  tolerance             gate acceptance threshold   (adaptive, default 0.1)
  anchor_interval       forced-real-call spacing    (adaptive, default 4)
  max_consecutive_skips back-to-back skip cap       (adaptive, default 2)
  gate                  "epsilon" | "latent"        (adaptive, default "epsilon")
  indices               e.g. "h3, 6, 9, 12"         (explicit)
  protect_first         head steps never skipped    (default 1)
  protect_last          tail steps never skipped    (default 1)

variant stabilizer keys:
  mode             "none" | "learning" | "grad_est" | "learn+grad_est"
  beta             EMA smoothing for the learning ratio (default 0.995)
  curvature_scale  curvature correction strength (default 2.0)

The baseline (skip mode "none", no stabilizer) always runs first; every
variant is compared against it with the same seed, model, and schedule.
"""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="epskip",
        description="Benchmark step-skipping policies on analytic denoisers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser(
        "run",
        help="execute a benchmark config",
        description="Run the baseline and every variant from a JSON config.",
        epilog=CONFIG_KEYS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    run_parser.add_argument("config", help="path to the JSON config file")
    run_parser.add_argument("--out", default="out", help="output directory (default: out)")
    run_parser.add_argument(
        "--only",
        action="append",
        metavar="VARIANT",
        help="run only this variant (repeatable); the baseline always runs",
    )
    run_parser.add_argument(
        "--dump-latents",
        action="store_true",
        help="also write final latents as little-endian float32 with a JSON sidecar",
    )
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            return run_experiment_matrix(
                args.config, args.out, only=args.only, dump_latents=args.dump_latents
            )
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
