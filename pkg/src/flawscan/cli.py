"""Command-line interface: ``flawscan <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .decision import QUANTILE_METHOD, calibrate_alpha, classify_dataset
from .baselines import calibrate_zth
from .exceptions import FlawScanError, ParameterError
from .extraction import VolumeConfig
from .filtering import DEFAULT_FWHM, make_kernel, matched_filter
from .imagery import load_image, load_manifest, save_image, save_pgm
from .nim import NimParams, PeakAmpParams, a90, fit_nim, pod, pod_peakamp
from .pipeline import ScanConfig, score_filtered, score_image
from ._version import __version__

log = logging.getLogger("flawscan")


def _add_scan_args(p, methods=("ellipse", "rectangle", "peakamp")):
    p.add_argument("--method", choices=methods, default="ellipse")
    p.add_argument("--fwhm", type=float, default=DEFAULT_FWHM, help="matched-filter FWHM in pixels")
    p.add_argument("--lambda", dest="lam", type=float, default=100.0,
                   help="penalty weight on non-positive corrected intensities")
    p.add_argument("--rho", type=float, default=0.9, help="minimum relative candidate amplitude")
    p.add_argument("--merge-distance", type=float, default=10.0,
                   help="closeness (pixels) for merging paired hotspots; negative disables")
    p.add_argument("--merge-snr", type=float, default=2.5)
    p.add_argument("--axis-aligned", action="store_true", help="axis-aligned rectangles")


def _scan_config(args):
    return ScanConfig(
        method=args.method, fwhm=args.fwhm, volume=VolumeConfig(lam=args.lam), rho=args.rho,
        merge=args.merge_distance >= 0, merge_distance=args.merge_distance,
        merge_snr=args.merge_snr, axis_aligned=args.axis_aligned,
    )


def _range(text, name, n_parts):
    parts = text.split(":")
    if len(parts) != n_parts:
        raise ParameterError(f"{name} must look like {':'.join(['x'] * n_parts)}, got {text!r}")
    try:
        return [float(x) for x in parts]
    except ValueError:
        raise ParameterError(f"bad {name} {text!r}") from None


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _load_params(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    d = d.get("params", d)
    if "z_th" in d:
        return PeakAmpParams.from_dict(d)
    return NimParams.from_dict(d)


def _pod_fn(params):
    if isinstance(params, PeakAmpParams):
        return lambda s: pod_peakamp(params, s)
    return lambda s: pod(params, s)


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args):
    cfg = _scan_config(args)
    raw = load_image(args.image)
    filtered = matched_filter(raw, make_kernel(cfg.fwhm))
    if args.filtered_out:
        save_image(args.filtered_out, filtered)
    score = score_filtered(filtered, cfg)
    _write_json([ind.to_dict() for ind in score.indications], args.out)
    if args.overlay:
        canvas = filtered.copy()
        top = float(canvas.max())
        for ind in score.indications:
            for region in (ind.pair.inner, ind.pair.outer):
                m = region.mask(canvas.shape)
                edge = m & ~_erode(m)
                canvas[edge] = top
        save_pgm(args.overlay, canvas)
    return 0


def _erode(mask):
    inner = mask.copy()
    inner[1:, :] &= mask[:-1, :]
    inner[:-1, :] &= mask[1:, :]
    inner[:, 1:] &= mask[:, :-1]
    inner[:, :-1] &= mask[:, 1:]
    return inner


def cmd_calibrate(args):
    cfg = _scan_config(args)
    records = [r for r in load_manifest(args.manifest) if not r.is_flawed]
    if not records:
        raise ParameterError("manifest has no flawless images to calibrate on")
    kernel = make_kernel(cfg.fwhm)
    values, dropped = [], 0
    for rec in records:
        score = score_image(load_image(rec.image), cfg, kernel)
        if cfg.method == "peakamp":
            values.append(score.peak)
        elif score.best is None:
            dropped += 1
        else:
            values.append(score.snr)
    out = {
        "method": cfg.method,
        "target_pfa": args.pfa,
        "n_images": len(records),
        "n_without_indication": dropped,
        "quantile_method": QUANTILE_METHOD,
    }
    if cfg.method == "peakamp":
        out["z_th"] = calibrate_zth(values, args.pfa)
    else:
        out["alpha"] = calibrate_alpha(values, args.pfa)
    _write_json(out, args.out)
    return 0


def _threshold(args):
    if args.threshold is not None:
        return args.threshold
    if args.calibration is None:
        raise ParameterError("give --threshold or --calibration")
    with open(args.calibration, encoding="utf-8") as fh:
        calib = json.load(fh)
    if calib.get("method", args.method) != args.method:
        raise ParameterError(f"calibration is for method {calib['method']!r}, not {args.method!r}")
    key = "z_th" if args.method == "peakamp" else "alpha"
    if key not in calib:
        raise ParameterError(f"calibration file has no {key!r}")
    return float(calib[key])


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    return repr(float(x))


def cmd_classify(args):
    cfg = _scan_config(args)
    records = load_manifest(args.manifest)
    rows, audit = classify_dataset(records, _threshold(args), cfg)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["specimen", "flaw_size", "D", "snr", "detected", "status"])
        for r in rows:
            w.writerow([r["specimen"], _fmt(r["flaw_size"]), _fmt(r["D"]), _fmt(r["snr"]),
                        _fmt(r["detected"]), r["status"]])
    finally:
        if close:
            fh.close()
    if args.audit:
        _write_json(audit, args.audit)
    return 0


def _read_results(path):
    flawed, noise, skipped = [], [], 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            if row.get("status", "ok") not in ("ok", "fallback") or not row["D"]:
                skipped += 1
                continue
            d = float(row["D"])
            if row["flaw_size"]:
                flawed.append((d, float(row["flaw_size"])))
            else:
                noise.append(d)
    return np.array(flawed).reshape(-1, 2), np.array(noise), skipped


def cmd_fit_nim(args):
    flawed, noise, skipped = _read_results(args.results)
    params = fit_nim(flawed, noise)
    out = {
        "params": params.to_dict(),
        "n_flawed": int(len(flawed)),
        "n_noise": int(len(noise)),
        "n_skipped": skipped,
    }
    _write_json(out, args.out)
    return 0


def cmd_pod(args):
    lo, hi, n = _range(args.size_grid, "--size-grid", 3)
    if not (0 < lo < hi) or n < 2 or n != int(n):
        raise ParameterError("--size-grid needs 0 < lo < hi and an integer n >= 2")
    sizes = np.linspace(lo, hi, int(n))
    values = np.atleast_1d(_pod_fn(_load_params(args.params))(sizes))
    fh, close = _open_out(args.out)
    try:
        fh.write("size,pod\n")
        for s, p in zip(sizes, values):
            fh.write(f"{float(s)!r},{float(p)!r}\n")
    finally:
        if close:
            fh.close()
    return 0


def cmd_a90(args):
    bracket = _range(args.bracket, "--bracket", 2)
    print(repr(a90(_pod_fn(_load_params(args.params)), bracket, level=args.level)))
    return 0


def cmd_simulate(args):
    from .simkit import METHODS, SimConfig, run_comparison, write_report

    with open(args.config, encoding="utf-8") as fh:
        cfg = SimConfig.from_dict(json.load(fh))
    if args.seed is not None:
        cfg = SimConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    methods = tuple(args.method) if args.method else METHODS

    def progress(i, n):
        log.info("replicate %d/%d done", i, n)

    report = run_comparison(cfg, methods=methods, progress=progress)
    write_report(report, args.out, args.curves_dir)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flawscan",
        description="Flaw detection in NDE images: matched filtering, optimal region "
        "extraction, SNR detection, NIM-based POD estimation and simulation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="find indications in one image, print them as JSON")
    p.add_argument("image")
    _add_scan_args(p, methods=("ellipse", "rectangle"))
    p.add_argument("--out", help="JSON output path (default stdout)")
    p.add_argument("--overlay", help="write a PGM with region outlines burned in")
    p.add_argument("--filtered-out", help="write the filtered image as matrix text")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("calibrate", help="calibrate the detection threshold on flawless images")
    p.add_argument("manifest")
    p.add_argument("--pfa", type=float, default=0.03)
    _add_scan_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("classify", help="score and classify every image in a manifest (CSV)")
    p.add_argument("manifest")
    _add_scan_args(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", "--alpha", type=float, dest="threshold",
                   help="alpha (SNR methods) or z_th (peakamp)")
    g.add_argument("--calibration", help="JSON written by `calibrate`")
    p.add_argument("--out")
    p.add_argument("--audit", help="write per-indication JSON")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("fit-nim", help="fit the noise-interference model to classify output")
    p.add_argument("results")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit_nim)

    p = sub.add_parser("pod", help="evaluate a POD curve on a size grid (CSV)")
    p.add_argument("params")
    p.add_argument("--size-grid", default="1:200:200", help="lo:hi:n")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pod)

    p = sub.add_parser("a90", help="print the flaw size with 90%% POD")
    p.add_argument("params")
    p.add_argument("--bracket", default="1:10000", help="lo:hi")
    p.add_argument("--level", type=float, default=0.9)
    p.set_defaults(func=cmd_a90)

    p = sub.add_parser("simulate", help="run the seeded method-comparison simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--curves-dir", help="write per-method POD curve CSVs here")
    p.add_argument("--seed", type=int)
    p.add_argument("--method", action="append", choices=("ellipse", "rectangle", "peakamp"),
                   help="restrict to these methods (repeatable)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s"
    )
    try:
        return args.func(args)
    except (FlawScanError, OSError, json.JSONDecodeError) as exc:
        print(f"flawscan {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
