"""Command-line entry point: ``qecml sweep|threshold|slope|kernel-cache``."""
from __future__ import annotations

import argparse
import sys
from collections import defaultdict
from pathlib import Path

from . import harness
from .circuit import build_circuit
from .code import SurfaceCode
from .ml import cached_kernel

EXIT_CONFIG = 2


def _curves(points, decoder=None):
    by_d = defaultdict(list)
    for r in points:
        if decoder is None or r.decoder == decoder:
            by_d[r.distance].append(r)
    return {d: harness.Curve.from_points(v) for d, v in by_d.items() if any(x.usable for x in v)}


def cmd_sweep(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    out = Path(args.out or cfg.out)
    log = None if args.quiet else (lambda s: print(s, file=sys.stderr, flush=True))
    results = harness.run_sweep(cfg, workers=args.workers, log=log)
    out.parent.mkdir(parents=True, exist_ok=True)
    harness.write_results(results, out)
    harness.write_manifest(cfg, results, out.with_suffix(".manifest.json"), harness.kernel_hashes(cfg))
    print(out)
    return 0


def cmd_threshold(args) -> int:
    points = harness.read_results(args.results)
    decoders = sorted({r.decoder for r in points})
    status = 0
    for dec in decoders:
        try:
            main, pairwise = harness.estimate_threshold(_curves(points, dec))
        except harness.NoCrossing as exc:
            print(f"{dec}: {exc}")
            status = 1
            continue
        a, b = main.distances
        print(f"{dec}: p_c = {main.p_c:.5g} [{main.lo:.5g}, {main.hi:.5g}] (d={a}/{b})")
        for c in pairwise:
            print(f"  d={c.distances[0]}/{c.distances[1]}: {c.p_c:.5g} [{c.lo:.5g}, {c.hi:.5g}]")
    return status


def cmd_slope(args) -> int:
    points = harness.read_results(args.results)
    groups = defaultdict(list)
    for r in points:
        if args.distance is None or r.distance == args.distance:
            groups[(r.decoder, r.distance)].append(r)
    status = 0
    for (dec, d), pts in sorted(groups.items()):
        try:
            fit = harness.slope_from_points(pts, args.pmax)
        except ValueError as exc:
            print(f"{dec} d={d}: {exc}")
            status = 1
            continue
        print(f"{dec} d={d}: slope = {fit.slope:.4f} +/- {fit.stderr:.4f} ({fit.n} points)")
    return status


def cmd_kernel_cache(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else None
    cache = Path(args.dir)
    if cfg is None:
        cache.mkdir(parents=True, exist_ok=True)
        files = sorted(cache.glob("*.qk"))
        for f in files:
            print(f.name)
        print(f"{len(files)} kernels in {cache}")
        return 0
    if cfg.decoder == "mwpm":
        print("matching decoder uses no kernels")
        return 0
    for d in cfg.distances:
        code = SurfaceCode(d)
        circuit = build_circuit(code, cfg.schedule, cfg.steps)
        tracking_full = cfg.decoder == "mlcln-full" or (cfg.decoder == "ml-phenomenological" and d <= 3)
        names = ("full",) if tracking_full else ("X", "Z")
        for p in cfg.p_grid:
            model = harness.make_model(cfg.model, p, cfg.model_params)
            if cfg.rate_scale != 1.0:
                model = model.scaled(cfg.rate_scale)
            for nm in names:
                K = cached_kernel(cache, code, circuit, model, nm)
                print(f"d={d} p={p:g} sector={nm} {K.model_hash}.qk {K.content_hash()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qecml", description="Surface-code memory experiments with MWPM and ML decoders.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run every grid point of a JSON config and write the CSV table")
    sp.add_argument("config")
    sp.add_argument("--out", help="override the config's output path")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("threshold", help="crossing of the two largest distances, plus pairwise drift")
    sp.add_argument("results")
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("slope", help="fit log(1/<t_L>) against log(p)")
    sp.add_argument("results")
    sp.add_argument("--pmax", type=float, default=None, help="only use points with p <= PMAX")
    sp.add_argument("--distance", type=int, default=None)
    sp.set_defaults(func=cmd_slope)

    sp = sub.add_parser("kernel-cache", help="list cached kernels, or precompute those a config needs")
    sp.add_argument("dir")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_kernel_cache)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
