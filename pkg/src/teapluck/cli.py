"""Command-line entry point: ``teapluck fit|segment|evaluate|simulate``.

Exit status is 0 on success, 2 for unparsable input, 3 when the fitter finds
no admissible parameters and 4 for I/O failures.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from . import __version__
from .evaluation import (DEFAULT_MIN_AREA, GroundTruthError, evaluate, format_eval_report,
                         parse_truth)
from .fitting import FitConfig, NotFoundError, fit_dataset, format_fit_report
from .imaging import (AnnotationError, ImageFormatError, extract_samples, load_image,
                      parse_annotations, read_mask, write_mask)
from .plucker import (CAMPAIGN_HEADER, DEFAULT_SEED, ScenarioError, format_campaign_row,
                      format_trace, parse_scenario, run_campaign)
from .segmentation import binarize, format_params, parse_params

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NOT_FOUND = 3
EXIT_IO = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None


def _write(path, data):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, str):
            path.write_text(data)
        else:
            path.write_bytes(data)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


def _fit_config(args):
    values = {}
    if args.config:
        for lineno, raw in enumerate(_read_text(args.config).splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (p.strip() for p in line.partition("="))
            if not sep:
                raise CliError(f"{args.config}:{lineno}: expected 'key = value'", EXIT_PARSE)
            values[key] = value
    if args.mode:
        values["mode"] = args.mode
    known = {f.name for f in dataclasses.fields(FitConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise CliError(f"unknown fit settings: {', '.join(unknown)}", EXIT_PARSE)
    try:
        return FitConfig(**{k: (v if k == "mode" else float(v)) for k, v in values.items()})
    except ValueError as exc:
        raise CliError(f"invalid fit settings: {exc}", EXIT_PARSE) from None


def cmd_fit(args):
    config = _fit_config(args)
    try:
        boxes = parse_annotations(_read_text(args.annotations))
    except AnnotationError as exc:
        raise CliError(f"{args.annotations}: {exc}", EXIT_PARSE) from None
    if not boxes:
        raise CliError(f"{args.annotations}: no sample boxes", EXIT_PARSE)
    image_ids = list(dict.fromkeys(b.image_id for b in boxes))
    per_image = []
    for image_id in image_ids:
        path = Path(args.images) / f"{image_id}.ppm"
        try:
            image = load_image(path)
        except ImageFormatError as exc:
            raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
        try:
            per_image.append(extract_samples({image_id: image},
                                             [b for b in boxes if b.image_id == image_id]))
        except AnnotationError as exc:
            raise CliError(str(exc), EXIT_PARSE) from None
    for image_id, samples in zip(image_ids, per_image):
        if samples.n_leaf == 0 or samples.n_background == 0:
            raise CliError(f"image {image_id!r} needs both leaf and background boxes",
                           EXIT_PARSE)
    try:
        results, average = fit_dataset(per_image, config, n_jobs=args.threads)
    except NotFoundError as exc:
        raise CliError(f"NotFound: {exc}", EXIT_NOT_FOUND) from None
    out = Path(args.out)
    _write(out / "fit_report.txt",
           format_fit_report(image_ids, results, average, config, args.seed))
    _write(out / "params.txt", format_params(average))
    failed = [i for i, r in zip(image_ids, results) if r is None]
    print(f"fitted {len(image_ids) - len(failed)}/{len(image_ids)} images -> {out}")
    if failed:
        print(f"NotFound for: {' '.join(failed)}", file=sys.stderr)


def cmd_segment(args):
    try:
        params = parse_params(_read_text(args.params))
    except ValueError as exc:
        raise CliError(f"{args.params}: {exc}", EXIT_PARSE) from None
    try:
        image = load_image(args.image)
    except ImageFormatError as exc:
        raise CliError(f"{args.image}: {exc}", EXIT_PARSE) from None
    except OSError as exc:
        raise CliError(f"cannot read {args.image}: {exc.strerror or exc}", EXIT_IO) from None
    out = args.out or f"{Path(args.image).stem}.pgm"
    _write(out, write_mask(binarize(params, image)))
    print(f"wrote {out}")


def cmd_evaluate(args):
    try:
        truths = parse_truth(_read_text(args.truth))
    except GroundTruthError as exc:
        raise CliError(f"{args.truth}: {exc}", EXIT_PARSE) from None
    labels, reports = [], []
    for mask_path in args.masks:
        label = Path(mask_path).stem
        if label not in truths:
            raise CliError(f"no ground truth for mask {label!r}", EXIT_PARSE)
        try:
            mask = read_mask(_read_bytes(mask_path))
        except (ImageFormatError, ValueError) as exc:
            raise CliError(f"{mask_path}: {exc}", EXIT_PARSE) from None
        truth = truths[label]
        for x0, y0, w, h in truth.leaf_boxes:
            if x0 < 0 or y0 < 0 or x0 + w > mask.width or y0 + h > mask.height:
                raise CliError(f"truth box {(x0, y0, w, h)} of {label!r} exceeds the "
                               f"{mask.width}x{mask.height} mask", EXIT_PARSE)
        labels.append(label)
        reports.append(evaluate(mask, truth, args.min_area))
    text = format_eval_report(labels, reports, args.seed, args.min_area)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    try:
        scenario = parse_scenario(_read_text(args.scenario))
    except ScenarioError as exc:
        raise CliError(f"{args.scenario}: {exc}", EXIT_PARSE) from None
    seed = scenario.campaign.seed if args.seed is None else args.seed
    try:
        stems = scenario.stems()
    except ValueError as exc:
        raise CliError(f"{args.scenario}: {exc}", EXIT_PARSE) from None
    report = run_campaign(stems, scenario.sim, scenario.fault, seed,
                          n_jobs=args.threads, record=args.trace)
    c = scenario.campaign
    lines = [
        "# teapluck simulation report",
        f"# seed: {seed}",
        f"# scenario: {Path(args.scenario).name}",
        f"# trials: {c.trials}  diameters: {c.diameter_min:.3f}-{c.diameter_max:.3f} mm  "
        f"tick budget: {scenario.sim.tick_budget}",
        CAMPAIGN_HEADER,
        format_campaign_row("campaign", report),
        "",
        f"{'trial':>5} {'diameter':>8} {'outcome':<10} {'ticks':>6} {'peak_N':>7}  faults",
    ]
    for i, (stem, outcome) in enumerate(zip(stems, report.outcomes)):
        lines.append(f"{i:5d} {stem.diameter:8.4f} {outcome.kind:<10} "
                     f"{outcome.ticks_elapsed:6d} {outcome.peak_clamp_force:7.4f}  "
                     f"{_describe_faults(outcome.faults)}")
    out = Path(args.out)
    _write(out / "campaign_report.txt", "\n".join(lines) + "\n")
    if args.trace:
        for i, outcome in enumerate(report.outcomes):
            _write(out / "traces" / f"trial_{i:04d}.txt", format_trace(outcome.trajectory))
    print(format_campaign_row("campaign", report))


def _describe_faults(faults):
    parts = []
    if faults.bias_force:
        parts.append(f"bias={faults.bias_force:g}N")
    if faults.noise_sigma:
        parts.append(f"noise={faults.noise_sigma:g}V")
    if faults.stop_delay_ticks:
        parts.append(f"delay={faults.stop_delay_ticks}")
    if faults.derate:
        parts.append(f"derate={faults.derate:g}")
    if faults.pull_stalled:
        parts.append("stall")
    if not faults.captured:
        parts.append("missed")
    return ",".join(parts) or "-"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="teapluck",
        description="Tender tea leaf segmentation and plucking finger simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help, out_default=None, seed_default=DEFAULT_SEED,
               seed_help=f"seed for stochastic components (default {DEFAULT_SEED})"):
        p.add_argument("--out", default=out_default, help=out_help)
        p.add_argument("--seed", type=int, default=seed_default, help=seed_help)
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads; never changes results")

    p = sub.add_parser("fit", help="fit segmentation parameters from annotated images")
    p.add_argument("annotations", help="box file: <image_id> <leaf|background> <x0> <y0> <w> <h>")
    p.add_argument("--images", required=True, help="directory holding <image_id>.ppm files")
    p.add_argument("--config", help="key = value overrides for the search grid")
    p.add_argument("--mode", choices=("first", "best"))
    common(p, "output directory", "fit_out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("segment", help="binarise an image with fitted parameters")
    p.add_argument("params", help="file holding 'x y z T'")
    p.add_argument("image", help="binary PPM (P6) image")
    common(p, "output PGM path (default <image stem>.pgm)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score masks against ground-truth leaf boxes")
    p.add_argument("masks", nargs="+", help="PGM masks; the file stem is the image id")
    p.add_argument("--truth", required=True, help="box file: <image_id> <x0> <y0> <w> <h>")
    p.add_argument("--min-area", type=int, default=DEFAULT_MIN_AREA,
                   help=f"smallest region kept, in pixels (default {DEFAULT_MIN_AREA})")
    common(p, "report path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run a plucking campaign from a scenario file")
    p.add_argument("scenario", help="'section.key = value' scenario file")
    p.add_argument("--trace", action="store_true", help="also write per-tick traces")
    common(p, "output directory", "sim_out", seed_default=None,
           seed_help=f"overrides campaign.seed from the scenario (default {DEFAULT_SEED})")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and args.min_area < 1:
        parser.error("--min-area must be >= 1")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except CliError as exc:
        print(f"teapluck {args.command}: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
