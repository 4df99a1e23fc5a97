"""End-to-end experiment: evaluation, RMS reporting, scatter emission and the pipeline driver."""
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import psutil

from core.ann import MlpNetwork, classify, decode_argmax, forward, init_network, train
from core.config import RunConfig
from core.dataset import build_test_set, build_training_set, clean_dataset
from core.optics import synthesize_profile
from interfaces import (
    FEATURE_COUNT,
    Dataset,
    DatasetKind,
    DetectorModel,
    DimensionError,
    EmptyInputError,
    EvalRecord,
    EvalReport,
    FringeError,
    OpticalSetup,
    StorageError,
    ThicknessGrid,
    ValidationError,
)
from platforms import plotting, storage
from platforms.detector import ShotNoiseDetector, add_shot_noise, substream

logger = logging.getLogger(__name__)

REFERENCE_RMS_NM = 0.7


def rms_error(pairs: Iterable[Tuple[float, float]]) -> float:
    """sqrt(mean((true - predicted)^2))."""
    pairs = np.asarray(list(pairs), dtype=np.float64)
    if pairs.size == 0:
        raise EmptyInputError("RMS error needs at least one (true, predicted) pair")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DimensionError(f"expected (true, predicted) pairs, got shape {pairs.shape}")
    diff = pairs[:, 0] - pairs[:, 1]
    return float(math.sqrt(float(np.dot(diff, diff)) / diff.size))


def _ongrid_rms(records: List[EvalRecord], grid: ThicknessGrid) -> Optional[float]:
    pairs = [(r.catalogue_nm, r.ann_nm_argmax) for r in records if grid.contains(r.catalogue_nm)]
    return rms_error(pairs) if pairs else None


def build_report(records: List[EvalRecord], detector: Optional[DetectorModel], grid: ThicknessGrid) -> EvalReport:
    """Attach the three RMS figures to a list of decoded records."""
    if not records:
        raise EmptyInputError("evaluation produced no records")
    return EvalReport(
        records=records,
        detector=detector,
        rms_argmax=rms_error((r.catalogue_nm, r.ann_nm_argmax) for r in records),
        rms_expect=rms_error((r.catalogue_nm, r.ann_nm_expect) for r in records),
        rms_ongrid_argmax=_ongrid_rms(records, grid),
    )


def evaluate(net: MlpNetwork, test_set: Dataset, grid: ThicknessGrid) -> EvalReport:
    """Decode every test record both ways and report RMS errors against the catalogue thickness."""
    if test_set.kind is not DatasetKind.TEST:
        raise ValidationError(f"evaluate() needs a test set, got a {test_set.kind.value} set")
    if net.output_size != grid.count:
        raise DimensionError(f"network has {net.output_size} outputs but the grid has {grid.count} classes")
    if net.input_size != FEATURE_COUNT:
        raise DimensionError(f"network expects {net.input_size} inputs, datasets carry {FEATURE_COUNT}")
    records = []
    for record in test_set.records:
        argmax_nm, expect_nm = classify(net, record.features, grid)
        records.append(EvalRecord(record.thickness_nm, argmax_nm, expect_nm))
    detector = (
        DetectorModel.from_bit_depth(test_set.provenance.bit_depth) if test_set.provenance.bit_depth else None
    )
    report = build_report(records, detector, grid)
    logger.info(
        "Evaluated %d records (%s): RMS argmax %.3f nm, expectation %.3f nm",
        len(records),
        test_set.provenance.label(),
        report.rms_argmax,
        report.rms_expect,
    )
    return report


def _report_meta(report: EvalReport) -> Dict[str, Any]:
    return {
        "bit_depth": report.detector.bit_depth if report.detector else None,
        "noise_figure": report.detector.noise_figure if report.detector else None,
        "rms_argmax": report.rms_argmax,
        "rms_expect": report.rms_expect,
        "rms_ongrid_argmax": report.rms_ongrid_argmax,
    }


def save_report(report: EvalReport, path) -> Path:
    path = Path(path)
    storage.write_report_rows(report.records, path, _report_meta(report))
    return path


def load_report(path, grid: ThicknessGrid) -> EvalReport:
    """Rebuild a report from its CSV; RMS values are recomputed from the rows."""
    records, meta = storage.read_report_rows(path)
    bit_depth = meta.get("bit_depth")
    detector = DetectorModel.from_bit_depth(bit_depth) if bit_depth else None
    return build_report(records, detector, grid)


def emit_scatter(report: EvalReport, path) -> List[Path]:
    """Write <path>.csv, <path>.svg and a <path>.png preview; nothing is written for an empty report."""
    if not report.records:
        raise EmptyInputError("cannot emit a scatter plot for a report without records")
    path = Path(path)
    csv_path = save_report(report, path.with_suffix(".csv"))
    svg_path = plotting.render_scatter_svg(report, path.with_suffix(".svg"))
    png_path = plotting.render_scatter_png(report, path.with_suffix(".png"))
    return [csv_path, svg_path, png_path]


def noise_robustness(
    net: MlpNetwork,
    setup: OpticalSetup,
    grid: ThicknessGrid,
    detector: DetectorModel,
    seed: int,
    realizations: int,
    mode: str = "stride",
    clamp: bool = False,
) -> float:
    """Fraction of seeded noisy realizations of on-grid thicknesses that argmax-decode to their own class."""
    noisy = build_test_set(setup, grid, detector, seed, realizations=realizations, mode=mode, clamp=clamp)
    correct = sum(
        decode_argmax(forward(net, record.features), grid) == record.thickness_nm for record in noisy.records
    )
    accuracy = correct / len(noisy)
    logger.info(
        "Noise robustness %s: %d/%d correct (%.2f%%)", detector.describe(), correct, len(noisy), 100 * accuracy
    )
    return accuracy


def training_closure(net: MlpNetwork, setup: OpticalSetup, grid: ThicknessGrid, mode: str = "stride") -> int:
    """How many clean training profiles argmax-decode to their own class."""
    clean = clean_dataset(setup, grid, mode)
    return sum(decode_argmax(forward(net, r.features), grid) == r.thickness_nm for r in clean.records)


@dataclass
class PipelineResult:
    exit_code: int
    output_dir: Path
    manifest: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None


class _RunLedger:
    """Tracks written artifacts and the stage in progress for the manifest."""

    def __init__(self, output_dir: Path):
        self.output_dir = output_dir
        self.artifacts: List[Path] = []
        self.stage = "setup"
        self._stage_started = time.perf_counter()
        self._process = psutil.Process()

    def begin(self, stage: str) -> None:
        self.stage = stage
        self._stage_started = time.perf_counter()
        logger.info("Stage %s started", stage)

    def end(self) -> None:
        rss_mb = self._process.memory_info().rss / 2**20
        logger.info(
            "Stage %s finished in %.2fs (RSS %.1f MiB)", self.stage, time.perf_counter() - self._stage_started, rss_mb
        )

    def add(self, *paths: Path) -> None:
        self.artifacts.extend(Path(p) for p in paths)

    def listing(self, complete: bool) -> List[Dict[str, Any]]:
        entries = []
        for path in self.artifacts:
            entry = {"path": path.relative_to(self.output_dir).as_posix(), "complete": complete}
            if path.exists():
                entry["sha256"] = storage.sha256_file(path)
            entries.append(entry)
        return entries


def _prepare_output_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        check_file = path / ".write-check"
        check_file.write_text("", encoding="utf-8")
        check_file.unlink()
    except OSError as e:
        raise StorageError(f"output directory is not writable ({e.strerror})", path) from e


def _detector_summary(report: EvalReport) -> Dict[str, Any]:
    return {
        "noise_figure": report.detector.noise_figure if report.detector else None,
        "records": len(report.records),
        "rms_argmax": report.rms_argmax,
        "rms_expect": report.rms_expect,
        "rms_ongrid_argmax": report.rms_ongrid_argmax,
    }


def _rms_spread(reports: Dict[int, EvalReport]) -> Dict[str, Optional[float]]:
    """Largest pairwise RMS difference between detectors, per decoder."""
    spread: Dict[str, Optional[float]] = {}
    for name in ("rms_argmax", "rms_expect", "rms_ongrid_argmax"):
        values = [getattr(r, name) for r in reports.values() if getattr(r, name) is not None]
        pairs = list(itertools.combinations(values, 2))
        spread[name] = max((abs(a - b) for a, b in pairs), default=None)
    return spread


def run_pipeline(config: RunConfig) -> PipelineResult:
    """Generate data, train, evaluate each detector and write every artifact plus a manifest."""
    output_dir = Path(config.output_dir)
    try:
        _prepare_output_dir(output_dir)
    except StorageError as e:
        logger.error("%s", e)
        return PipelineResult(exit_code=e.exit_code, output_dir=output_dir, error=str(e))

    ledger = _RunLedger(output_dir)
    train_noise_seed = (config.noise_seed + 1) % 2**64
    manifest: Dict[str, Any] = {
        "config": config.echo(),
        "seeds": {**config.seeds(), "noise.train_seed": train_noise_seed if config.noisy_training else None},
        "reference_rms_nm": REFERENCE_RMS_NM,
        "detectors": {},
    }
    reports: Dict[int, EvalReport] = {}

    try:
        ledger.begin("dataset")
        noise = ShotNoiseDetector(config.detectors[0], config.clamp) if config.noisy_training else None
        train_set = build_training_set(
            config.setup,
            config.train_grid,
            config.downsample_mode,
            noise=noise,
            seed=train_noise_seed if noise else None,
            realizations=config.realizations if noise else 1,
        )
        train_path = output_dir / "train.csv"
        storage.save_dataset(train_set, train_path)
        ledger.add(train_path, train_path.with_name(train_path.name + ".meta.json"))
        ledger.end()

        ledger.begin("train")
        net = init_network((FEATURE_COUNT, 64, 64, config.train_grid.count), seed=config.init_seed)
        net, history = train(net, train_set, config.train, grid=config.train_grid)
        model_path = output_dir / "model.txt"
        storage.save_model(net, model_path)
        ledger.add(model_path)
        closure = training_closure(net, config.setup, config.train_grid, config.downsample_mode)
        manifest["training"] = {
            "epochs": len(history),
            "final_mse": history[-1],
            "converged": history[-1] <= config.train.target_mse,
            "label_closure": f"{closure}/{config.train_grid.count}",
        }
        ledger.end()

        for detector in config.detectors:
            tag = f"{detector.bit_depth}bit"
            ledger.begin(f"evaluate-{tag}")
            test_set = build_test_set(
                config.setup,
                config.test_grid,
                detector,
                config.noise_seed,
                realizations=config.realizations,
                mode=config.downsample_mode,
                clamp=config.clamp,
            )
            test_path = output_dir / f"test_{tag}.csv"
            storage.save_dataset(test_set, test_path)
            ledger.add(test_path, test_path.with_name(test_path.name + ".meta.json"))

            report = evaluate(net, test_set, config.train_grid)
            reports[detector.bit_depth] = report
            written = emit_scatter(report, output_dir / f"eval_{tag}")
            ledger.add(*written, written[0].with_name(written[0].name + ".meta.json"))

            summary = _detector_summary(report)
            if config.robustness_realizations:
                summary["robustness_accuracy"] = noise_robustness(
                    net,
                    config.setup,
                    config.train_grid,
                    detector,
                    config.noise_seed,
                    config.robustness_realizations,
                    config.downsample_mode,
                    config.clamp,
                )
            manifest["detectors"][str(detector.bit_depth)] = summary

            profile_path = _emit_example_profile(config, detector, output_dir / f"profile_{tag}.svg")
            ledger.add(profile_path)
            ledger.end()

        manifest["rms_spread"] = _rms_spread(reports)
        manifest.update(status="ok", failed_stage=None, error=None, artifacts=ledger.listing(complete=True))
        exit_code = 0
        error = None
    except FringeError as e:
        logger.error("Stage %s failed: %s", ledger.stage, e)
        manifest.update(status="failed", failed_stage=ledger.stage, error=str(e), artifacts=ledger.listing(False))
        exit_code = e.exit_code
        error = str(e)

    try:
        storage.write_json(output_dir / "manifest.json", manifest)
    except StorageError as e:
        logger.error("%s", e)
        return PipelineResult(exit_code=e.exit_code, output_dir=output_dir, manifest=manifest, error=str(e))
    return PipelineResult(exit_code=exit_code, output_dir=output_dir, manifest=manifest, error=error)


def _emit_example_profile(config: RunConfig, detector: DetectorModel, path: Path) -> Path:
    """Clean and noisy line profile of the middle test thickness, noised with its own test substream."""
    index = config.test_grid.count // 2
    thickness_nm = float(config.test_grid.values[index])
    clean = synthesize_profile(thickness_nm, config.setup)
    noisy = add_shot_noise(clean, detector, substream(config.noise_seed, index * config.realizations), config.clamp)
    return plotting.emit_profile_plot(clean, noisy, path)
