"""Command-line front end.

Subcommands:
  simulate      synthesize a scan grid of noisy traces into the raw format
  sweep         run a Monte-Carlo parameter sweep and emit CSV tables
  crb           emit square-root CRBs across a sweep grid
  map           estimate an acoustic parameter map from a scan
  ingest-check  validate a scan manifest and its binary payload
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import acoustics, crb, harness, spectrum_prep, warmup
from .acoustics import METHODS, PipelineConfig, build_map, map_to_csv, write_map_summary
from .estimators import ReweightConfig
from .hankel_admm import ADMMConfig
from .signal_forward import GroundTruth, acoustic_to_spectral, simulate_trace
from .spectrum_prep import BandSelection


def _add_pipeline_flags(parser):
    parser.add_argument("--method", choices=METHODS, default=None,
                        help="estimator to run (default from config)")
    parser.add_argument("--band-db", type=float, default=None,
                        help="band threshold in dB relative to the reference peak")
    parser.add_argument("--cadzow-iters", type=int, default=None,
                        help="Cadzow denoising iterations")
    parser.add_argument("--order", default=None,
                        help="model order: fixed:<N> or auto")
    parser.add_argument("--rho", type=float, default=None, help="ADMM penalty")
    parser.add_argument("--admm-iters", type=int, default=None, help="ADMM iterations")
    parser.add_argument("--tukey-c", type=float, default=None,
                        help="Tukey bisquare cutoff constant")
    parser.add_argument("--reweight-iters", type=int, default=None,
                        help="robust reweighting outer iterations")


def _apply_pipeline_flags(cfg: PipelineConfig, args) -> PipelineConfig:
    if args.method is not None:
        cfg = replace(cfg, method=args.method)
    if args.band_db is not None:
        cfg = replace(cfg, band=BandSelection(args.band_db))
    if args.cadzow_iters is not None:
        cfg = replace(cfg, cadzow_iters=args.cadzow_iters)
    if args.order is not None:
        if args.order == "auto":
            cfg = replace(cfg, P=None)
        elif args.order.startswith("fixed:"):
            cfg = replace(cfg, P=int(args.order.split(":", 1)[1]))
        else:
            raise SystemExit(f"--order expects 'auto' or 'fixed:<N>', got {args.order!r}")
    admm = cfg.admm
    if args.rho is not None:
        admm = replace(admm, rho=args.rho)
    if args.admm_iters is not None:
        admm = replace(admm, n_iters=args.admm_iters)
    if admm is not cfg.admm:
        cfg = replace(cfg, admm=admm)
    rw = cfg.reweight
    if args.tukey_c is not None:
        rw = replace(rw, tukey_c=args.tukey_c)
    if args.reweight_iters is not None:
        rw = replace(rw, outer_iters=args.reweight_iters)
    if rw is not cfg.reweight:
        cfg = replace(cfg, reweight=rw)
    return cfg


def _cmd_simulate(args) -> int:
    gt = GroundTruth(c=args.c, Z=args.Z, alpha=args.alpha, d=args.d)
    ref = harness.ReferencePulse(frac_bw=args.frac_bw)
    h0 = ref.build()
    medium = harness.MediumConstants()
    model = acoustic_to_spectral(gt, medium, h0.fs)
    traces = np.empty((args.rows, args.cols, h0.n_samples))
    ss = np.random.SeedSequence(args.seed)
    seeds = ss.generate_state(args.rows * args.cols, dtype=np.uint64)
    for i in range(args.rows):
        for j in range(args.cols):
            t = simulate_trace(model, h0, args.snr, int(seeds[i * args.cols + j]))
            traces[i, j] = t.samples
    path = harness.export_scan(args.out, traces, h0, step_um=args.step_um)
    print(f"wrote {args.rows}x{args.cols} scan to {path}")
    return 0


def _cmd_sweep(args) -> int:
    manifest = harness.load_manifest(args.config)
    if args.realizations is not None:
        manifest = replace(manifest, n_realizations=args.realizations)
    if args.seed is not None:
        manifest = replace(manifest, seed=args.seed)
    warmup()
    result = harness.run_sweep(manifest, n_threads=args.threads,
                               progress=lambda i, n: print(f"point {i}/{n}", file=sys.stderr))
    paths = harness.emit_tables(result, args.out)
    print(f"wrote {paths['csv']}")
    return 0


def _cmd_crb(args) -> int:
    manifest = harness.load_manifest(args.config)
    if args.seed is not None:
        manifest = replace(manifest, seed=args.seed)
    h0 = manifest.reference.build()
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"crb_{manifest.sweep_parameter}.csv")
    import csv as _csv
    cache = {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["sweep_value", "sigma2", "sqrt_crb_c", "sqrt_crb_Z",
                         "sqrt_crb_alpha", "sqrt_crb_d"])
        for idx, value in enumerate(manifest.grid_values()):
            gt, snr_db, _band_db = harness._point_settings(manifest, value)
            bounds, sigma2 = harness._point_crb(manifest, h0, gt, snr_db, cache)
            writer.writerow([harness._fmt(float(value)), harness._fmt(sigma2),
                             harness._fmt(bounds["c"]), harness._fmt(bounds["Z"]),
                             harness._fmt(bounds["alpha"]), harness._fmt(bounds["d"])])
    print(f"wrote {path}")
    return 0


def _cmd_map(args) -> int:
    scan = harness.ingest_scan(args.config)
    cfg = _apply_pipeline_flags(PipelineConfig(), args)
    warmup()
    amap = build_map(scan.traces, scan.h0, cfg, step_um=scan.step_um)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "map.csv")
    map_to_csv(amap, csv_path)
    write_map_summary(amap, os.path.join(args.out, "map_summary.json"))
    print(f"wrote {csv_path} (outliers: {amap.outlier_pct:.1f}%)")
    return 0


def _cmd_ingest_check(args) -> int:
    scan = harness.ingest_scan(args.config)
    rows, cols, samples = scan.traces.shape
    print(f"ok: {rows}x{cols} traces of {samples} samples at fs={scan.fs:g} Hz, "
          f"step {scan.step_um:g} um")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qamkit",
                                     description="Acoustic-microscopy spectral estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize a scan grid")
    p_sim.add_argument("--rows", type=int, default=2)
    p_sim.add_argument("--cols", type=int, default=2)
    p_sim.add_argument("--snr", type=float, default=50.0)
    p_sim.add_argument("--c", type=float, default=1600.0)
    p_sim.add_argument("--Z", type=float, default=1.63)
    p_sim.add_argument("--alpha", type=float, default=10.0)
    p_sim.add_argument("--d", type=float, default=4.0)
    p_sim.add_argument("--frac-bw", type=float, default=harness.ReferencePulse.frac_bw)
    p_sim.add_argument("--step-um", type=float, default=1.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    p_sweep.add_argument("--config", required=True, help="experiment manifest (JSON)")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--realizations", type=int, default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_crb = sub.add_parser("crb", help="emit sqrt-CRB tables for a sweep grid")
    p_crb.add_argument("--config", required=True)
    p_crb.add_argument("--out", required=True)
    p_crb.add_argument("--seed", type=int, default=None)
    p_crb.set_defaults(func=_cmd_crb)

    p_map = sub.add_parser("map", help="build an acoustic parameter map from a scan")
    p_map.add_argument("--config", required=True, help="scan manifest (JSON)")
    p_map.add_argument("--out", required=True)
    _add_pipeline_flags(p_map)
    p_map.set_defaults(func=_cmd_map)

    p_chk = sub.add_parser("ingest-check", help="validate a scan manifest")
    p_chk.add_argument("--config", required=True)
    p_chk.set_defaults(func=_cmd_ingest_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
