"""Command line: synth, analyze, detect, eval and run."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .detect import DEFAULT_BAND as DETECT_BAND
from .detect import DEFAULT_PARTITIONS, THRESHOLD, build_partitions, detect
from .evaluate import ExperimentConfig, match, run_experiment, write_json
from .field_core import FieldFormatError, read_field, write_field, write_png
from .gabor import reconstruct
from .pipeline import AnalysisConfig, analyze
from .render import error_figure, overlay_figure
from .synth import (
    DEFAULT_BAND as SYNTH_BAND,
    TYPE_CODES,
    Minutia,
    NoiseSpec,
    SynthConfig,
    ladder_constellation,
    snap_types,
    synthesize,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

WALKING = {"x": (1.0, 0.0), "y": (0.0, 1.0)}


class UsageError(Exception):
    pass


def defaults_fingerprint() -> str:
    """Short hash of every default parameter, to tell builds with different defaults apart."""
    doc = {
        "synth": SynthConfig().__dict__,
        "ladder_band": SYNTH_BAND,
        "analysis": AnalysisConfig().to_json(),
        "detect": {"band": DETECT_BAND, "partitions": DEFAULT_PARTITIONS, "threshold": THRESHOLD},
    }
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _png_text(config: dict) -> dict:
    return {"lsphase-config": json.dumps(config, sort_keys=True)}


def _write_config(prefix: str, config: dict) -> None:
    # PHF1 has no metadata slot, so field files get a sidecar
    write_json(f"{prefix}.{config['command']}.config.json", config)


def _read_image(path) -> np.ndarray:
    field = read_field(path)
    if not (isinstance(field, np.ndarray) and field.ndim == 2 and not np.iscomplexobj(field)):
        raise FieldFormatError(f"{path}: expected a 1-channel scalar field")
    return field.astype(float)


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"{path}: not valid JSON: {exc}") from exc


def _parse_minutiae(doc) -> list[Minutia]:
    recs = doc["minutiae"] if isinstance(doc, dict) else doc
    if not isinstance(recs, list):
        raise FieldFormatError("minutiae file must hold a list or an object with a 'minutiae' list")
    out = []
    for rec in recs:
        try:
            t = rec.get("type", 0)
            code = TYPE_CODES[t] if isinstance(t, str) else int(t)
            out.append(Minutia(float(rec["x"]), float(rec["y"]), code))
        except (KeyError, TypeError, ValueError) as exc:
            raise FieldFormatError(f"bad minutia record {rec!r}: {exc}") from exc
    return out


# -- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    ladder_flags = [f for f in ("scales", "per_scale", "types") if getattr(args, f) is not None]
    if args.minutiae and ladder_flags:
        names = ", ".join("--" + f.replace("_", "-") for f in ladder_flags)
        raise UsageError(f"--minutiae cannot be combined with {names}")
    cfg = SynthConfig(args.width, args.height, args.t_min, args.t_max, args.seed)
    try:
        noise = NoiseSpec.parse(args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scales = 7 if args.scales is None else args.scales
    per_scale = 10 if args.per_scale is None else args.per_scale
    types = "alternate" if args.types is None else args.types
    if args.minutiae:
        specs = _parse_minutiae(_load_json(args.minutiae))
    else:
        specs = snap_types(ladder_constellation(cfg, scales, per_scale, SYNTH_BAND, types), cfg)
    syn = synthesize(specs, cfg, noise)
    config = {
        "command": "synth",
        "width": cfg.width, "height": cfg.height, "t_min": cfg.t_min, "t_max": cfg.t_max,
        "scales": None if args.minutiae else scales,
        "per_scale": None if args.minutiae else per_scale,
        "types": None if args.minutiae else types,
        "minutiae": args.minutiae, "noise": args.noise, "seed": args.seed,
    }
    p = args.out_prefix
    write_field(f"{p}.phf", syn.image)
    write_png(f"{p}.png", syn.image, "gray", _png_text(config))
    truth = syn.truth.to_json()
    truth["config"] = config
    write_json(f"{p}.truth.json", truth)
    _write_config(p, config)
    print(f"synth\t{p}.phf\tminutiae={len(specs)}")
    return EXIT_OK


def _analysis_config(args) -> AnalysisConfig:
    return AnalysisConfig(
        n=WALKING[args.walking_dir], gradient=getattr(args, "gradient", "compound"), gamma=getattr(args, "gamma", 0.0)
    )


def cmd_analyze(args) -> int:
    image = _read_image(args.input)
    acfg = _analysis_config(args)
    ana = analyze(image, acfg)
    config = {"command": "analyze", "in": args.input, "render": args.render, "analysis": acfg.to_json()}
    p = args.out_prefix
    pf = ana.phase
    write_field(f"{p}.frequency.phf", ana.freq.as_channels())
    write_field(f"{p}.phase.phf", np.stack([pf.phase, pf.magnitude], axis=-1))
    write_field(f"{p}.recon.phf", reconstruct(pf))
    write_field(f"{p}.gradient.phf", ana.gradient.g)
    write_field(f"{p}.tensor.phf", ana.tensor.complex)
    text = _png_text(config)
    if args.render == "hsv":
        write_png(f"{p}.phase.png", pf.unit, "hsv", text)
    else:
        write_png(f"{p}.phase.png", pf.phase, "gray", text)
    write_png(f"{p}.recon.png", reconstruct(pf), "gray", text)
    write_png(f"{p}.gradmag.png", ana.gradient.magnitude, "gray", text)
    write_png(f"{p}.tensor.png", ana.tensor.complex, "hsv", text)
    _write_config(p, config)
    print(f"analyze\t{p}\tvalid={float(pf.valid.mean()):.4f}")
    return EXIT_OK


def cmd_detect(args) -> int:
    if not 0 < args.threshold < 1:
        raise UsageError("--threshold must lie in (0, 1)")
    if args.partitions < 2:
        raise UsageError("--partitions must be at least 2")
    image = _read_image(args.input)
    acfg = _analysis_config(args)
    ana = analyze(image, acfg)
    parts = build_partitions(DETECT_BAND, args.partitions)
    det = detect(image, ana.tensor.complex, ana.freq, ana.phase, parts, args.threshold)
    config = {
        "command": "detect", "in": args.input, "partitions": args.partitions,
        "threshold": args.threshold, "band": list(DETECT_BAND), "analysis": acfg.to_json(),
    }
    h, w = image.shape
    records = [m.to_record() for m in det.minutiae]
    p = args.out_prefix
    write_json(f"{p}.detections.json", {"image": {"width": w, "height": h}, "minutiae": records, "config": config})
    write_field(f"{p}.response.phf", det.response)
    write_png(f"{p}.response.png", det.response, "hsv", _png_text(config))
    truth = _load_json(args.truth)["minutiae"] if args.truth else ()
    overlay_figure(image, truth, records, f"{p}.overlay.png")
    _write_config(p, config)
    print(f"detect\t{p}.detections.json\tdetected={len(records)}")
    return EXIT_OK


PAIR_FIELDS = ["detection", "truth", "loc_over_T", "dir_err_rad", "period_err", "period_signed", "type_ok"]


def _write_pairs(path, rep) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        wr.writerow(PAIR_FIELDS)
        for (i, j), a, b, c, d, e in zip(rep.pairs, rep.loc, rep.dir, rep.period, rep.period_signed, rep.type_ok):
            wr.writerow([i, j, f"{a:.6f}", f"{b:.6f}", f"{c:.6f}", f"{d:.6f}", int(e)])


def _summary_row(rep) -> list[str]:
    doc = rep.to_json()["stats"]

    def fmt(v):
        return "nan" if v is None else f"{v:.6f}"

    return [
        f"{rep.fr:.6f}", f"{rep.fa:.6f}", str(rep.n_truth), str(rep.n_detected),
        fmt(doc["loc"]["mu"]), fmt(doc["loc"]["sigma"]), fmt(doc["dir"]["mu"]), fmt(doc["dir"]["sigma"]),
        fmt(doc["period"]["mu"]), fmt(doc["period"]["sigma"]), fmt(doc["period_bias"]),
    ]


SUMMARY_FIELDS = [
    "fr", "fa", "n_truth", "n_detected", "loc_mu", "loc_sigma", "dir_mu", "dir_sigma",
    "period_mu", "period_sigma", "period_bias",
]


def _report_outputs(report_path: str, rep, config: dict, image=None, truth=(), detections=()) -> None:
    write_json(report_path, rep.to_json(config))
    stem = str(Path(report_path).with_suffix(""))
    _write_pairs(f"{stem}.pairs.tsv", rep)
    with open(f"{stem}.summary.tsv", "w", newline="") as fh:
        wr = csv.writer(fh, delimiter="\t", lineterminator="\n")
        wr.writerow(SUMMARY_FIELDS)
        wr.writerow(_summary_row(rep))
    error_figure(rep, f"{stem}.errors.png")
    if image is not None:
        overlay_figure(image, truth, detections, f"{stem}.overlay.png")
    print("\t".join(SUMMARY_FIELDS))
    print("\t".join(_summary_row(rep)))


def cmd_eval(args) -> int:
    det_doc = _load_json(args.detected)
    truth_doc = _load_json(args.truth)
    try:
        rep = match(det_doc, truth_doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise FieldFormatError(f"schema mismatch: {exc}") from exc
    config = {"command": "eval", "detected": args.detected, "truth": args.truth, "image": args.image}
    image = _read_image(args.image) if args.image else None
    _report_outputs(
        args.report, rep, config, image,
        truth_doc["minutiae"] if isinstance(truth_doc, dict) else truth_doc,
        det_doc["minutiae"] if isinstance(det_doc, dict) else det_doc,
    )
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        NoiseSpec.parse(args.noise)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = ExperimentConfig(
        width=args.width, height=args.height, noise=args.noise, seed=args.seed,
        partitions=args.partitions, threshold=args.threshold,
    )
    cfg = replace(cfg, analysis=AnalysisConfig(n=WALKING[args.walking_dir]))
    res = run_experiment(cfg, args.out_dir)
    out = Path(args.out_dir)
    recs = [m.to_record() for m in res.detection.minutiae]
    _report_outputs(
        str(out / "report.json"), res.report, res.config.to_json(),
        res.synthesis.image, res.synthesis.truth.minutiae, recs,
    )
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lsphase", description="Minutia synthesis, phase analysis and detection.")
    ap.add_argument("--version", action="version", version=f"lsphase {__version__} defaults {defaults_fingerprint()}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize an image with minutia ground truth")
    s.add_argument("--width", type=int, default=1024)
    s.add_argument("--height", type=int, default=1024)
    s.add_argument("--t-min", type=float, default=4.0)
    s.add_argument("--t-max", type=float, default=128.0)
    s.add_argument("--scales", type=int)
    s.add_argument("--per-scale", type=int)
    s.add_argument("--types", choices=["alternate", "bifurcation", "ridge_end"])
    s.add_argument("--minutiae", help="JSON list of {x, y, type}; replaces the ring generator")
    s.add_argument("--noise", default="none", help="spr:<snr>, gauss:<sigma> or none")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", help="frequency field, local phase, gradient and squared gradient")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out-prefix", required=True)
    a.add_argument("--gradient", choices=["direct", "compound"], default="compound")
    a.add_argument("--gamma", type=float, default=0.0)
    a.add_argument("--walking-dir", choices=sorted(WALKING), default="x")
    a.add_argument("--render", choices=["gray", "hsv"], default="gray")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("detect", help="detect minutiae")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--out-prefix", required=True)
    d.add_argument("--partitions", type=int, default=DEFAULT_PARTITIONS)
    d.add_argument("--threshold", type=float, default=THRESHOLD)
    d.add_argument("--walking-dir", choices=sorted(WALKING), default="x")
    d.add_argument("--truth", help="ground-truth JSON to draw on the overlay")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score detections against ground truth")
    e.add_argument("--detected", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--image", help="image PHF1 for the overlay figure")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="synthesize, analyze, detect and score in one go")
    r.add_argument("--width", type=int, default=1024)
    r.add_argument("--height", type=int, default=1024)
    r.add_argument("--noise", default="spr:0.61")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--partitions", type=int, default=DEFAULT_PARTITIONS)
    r.add_argument("--threshold", type=float, default=THRESHOLD)
    r.add_argument("--walking-dir", choices=sorted(WALKING), default="x")
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lsphase {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FieldFormatError, ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"lsphase {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
