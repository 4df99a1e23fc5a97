"""Command-line front end: synth, dataset, train, eval, plot and run."""
import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

from core.ann import init_network, train
from core.config import RunConfig, load_run_config
from core.dataset import build_test_set, build_training_set
from core.experiment import emit_scatter, evaluate, load_report, run_pipeline
from core.optics import pixel_positions, synthesize_profile
from interfaces import FEATURE_COUNT, DatasetKind, DetectorModel, FringeError, StorageError, UsageError
from platforms import storage
from platforms.detector import ShotNoiseDetector, add_shot_noise, substream
from platforms.plotting import emit_profile_plot

logger = logging.getLogger(__name__)

EXIT_OK = 0


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError (exit 1) instead of exiting with 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True
    )


def _config(args, **overrides) -> RunConfig:
    values = {key: value for key, value in overrides.items() if value is not None}
    return load_run_config(getattr(args, "config", None), seed=getattr(args, "seed", None), overrides=values)


def cmd_synth(args) -> int:
    config = _config(args)
    profile = synthesize_profile(args.thickness_nm, config.setup)
    x = pixel_positions(config.setup)
    rows = [[str(k), f"{x[k]:.12e}", f"{profile.samples[k]:.12e}"] for k in range(len(profile))]
    if args.out:
        path = Path(args.out)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(["pixel", "x_m", "intensity"])
                writer.writerows(rows)
        except OSError as e:
            raise StorageError(f"cannot write ({e.strerror})", path) from e
        print(f"Profile for T={args.thickness_nm:g} nm written to {path}")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["pixel", "x_m", "intensity"])
        writer.writerows(rows)
    if args.svg:
        noisy = None
        if args.bit_depth:
            detector = DetectorModel.from_bit_depth(args.bit_depth)
            noisy = add_shot_noise(profile, detector, substream(config.noise_seed, 0), config.clamp)
        emit_profile_plot(profile, noisy, args.svg)
        print(f"Profile plot written to {args.svg}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    config = _config(
        args,
        **{
            "noise.realizations": args.realizations,
            "noise.clamp": True if args.clamp else None,
            "dataset.downsample": args.downsample,
        },
    )
    if args.kind == DatasetKind.TRAIN.value:
        noise = None
        if args.bit_depth:
            noise = ShotNoiseDetector(DetectorModel.from_bit_depth(args.bit_depth), config.clamp)
        ds = build_training_set(
            config.setup,
            config.train_grid,
            config.downsample_mode,
            noise=noise,
            seed=config.noise_seed if noise else None,
            realizations=config.realizations if noise else 1,
        )
    else:
        bit_depth = args.bit_depth or config.bit_depths[0]
        ds = build_test_set(
            config.setup,
            config.test_grid,
            DetectorModel.from_bit_depth(bit_depth),
            config.noise_seed,
            realizations=config.realizations,
            mode=config.downsample_mode,
            clamp=config.clamp,
        )
    out = Path(args.out or f"{args.kind}.csv")
    storage.save_dataset(ds, out)
    print(f"{len(ds)} {args.kind} records ({ds.provenance.label()}) written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config(args)
    ds = storage.load_dataset(args.data, kind=DatasetKind.TRAIN)
    net = init_network((FEATURE_COUNT, 64, 64, config.train_grid.count), seed=config.init_seed)
    net, history = train(net, ds, config.train, grid=config.train_grid)
    out = Path(args.out)
    storage.save_model(net, out)
    print(f"Trained {len(history)} epochs, final MSE {history[-1]:.6g}; model written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config(args)
    net = storage.load_model(args.model, expected_sizes=(FEATURE_COUNT, 64, 64, config.train_grid.count))
    ds = storage.load_dataset(args.data, kind=DatasetKind.TEST)
    report = evaluate(net, ds, config.train_grid)
    written = emit_scatter(report, Path(args.out))
    print(f"RMS argmax     : {report.rms_argmax:.4f} nm")
    print(f"RMS expectation: {report.rms_expect:.4f} nm")
    if report.rms_ongrid_argmax is not None:
        print(f"RMS on-grid    : {report.rms_ongrid_argmax:.4f} nm")
    print("Written: " + ", ".join(str(p) for p in written))
    return EXIT_OK


def cmd_plot(args) -> int:
    config = _config(args)
    report = load_report(args.report, config.train_grid)
    stem = Path(args.out) if args.out else Path(args.report).with_suffix("")
    written = emit_scatter(report, stem)
    print("Written: " + ", ".join(str(p) for p in written))
    return EXIT_OK


def cmd_run(args) -> int:
    config = _config(args, **{"output.dir": Path(args.out) if args.out else None})
    result = run_pipeline(config)
    if result.exit_code != EXIT_OK:
        print(f"Run failed: {result.error}", file=sys.stderr)
        return result.exit_code
    print(f"Run complete: {result.output_dir / 'manifest.json'}")
    for bits, summary in result.manifest["detectors"].items():
        ongrid = summary["rms_ongrid_argmax"]
        print(
            f"  {bits:>2}-bit: RMS argmax {summary['rms_argmax']:.3f} nm, expectation {summary['rms_expect']:.3f} nm, "
            f"on-grid {'n/a' if ongrid is None else f'{ongrid:.3f}'} nm"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fringe", description="Thin-film thickness from interference line profiles")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        p.add_argument("--config", help="flat key = value config file")
        if seed:
            p.add_argument("--seed", type=int, help="override every seed")

    p = sub.add_parser("synth", help="write a noiseless line profile as CSV")
    p.add_argument("--thickness-nm", type=float, required=True)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.add_argument("--svg", help="also plot the profile to this SVG")
    p.add_argument("--bit-depth", type=int, help="overlay a noisy profile from this detector in the SVG")
    common(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("dataset", help="build a training or test set")
    p.add_argument("--kind", choices=[k.value for k in DatasetKind], required=True)
    p.add_argument("--bit-depth", type=int, help="detector bit depth (test sets; noisy training when given for train)")
    p.add_argument("--realizations", type=int, help="noisy records per thickness")
    p.add_argument("--clamp", action="store_true", help="clamp noisy samples at full scale")
    p.add_argument("--downsample", choices=["stride", "block", "head"])
    p.add_argument("--out", help="CSV path (default <kind>.csv)")
    common(p)
    p.set_defaults(handler=cmd_dataset)

    p = sub.add_parser("train", help="train the network on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="model.txt")
    common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a test set")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="eval", help="output stem for .csv/.svg/.png")
    common(p, seed=False)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("plot", help="re-render the scatter plot of an evaluation CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", help="output stem (default: the report path without suffix)")
    common(p, seed=False)
    p.set_defaults(handler=cmd_plot)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    common(p)
    p.set_defaults(handler=cmd_run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    _setup_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except FringeError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
