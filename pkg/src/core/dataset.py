"""Training and test sets: thickness grids, 1000 -> 40 reduction and labeling."""
import logging
from typing import Optional

import numpy as np

from core.optics import synthesize_profile
from interfaces import (
    FEATURE_COUNT,
    PROFILE_LENGTH,
    ConfigError,
    Dataset,
    DatasetKind,
    DatasetRecord,
    DetectorModel,
    DimensionError,
    FeatureVector,
    FilmThickness,
    LineProfile,
    OpticalSetup,
    Provenance,
    ThicknessGrid,
    ValidationError,
)
from platforms.detector import ShotNoiseDetector, substream

logger = logging.getLogger(__name__)

DOWNSAMPLE_MODES = ("stride", "block", "head")

TRAIN_GRID = ThicknessGrid(start=10.0, step=10.0, count=20)
TEST_GRID = ThicknessGrid(start=5.0, step=5.0, count=40)


def parse_grid(text: str) -> ThicknessGrid:
    """Parse 'start:step:stop' in nm, e.g. '10:10:200'."""
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid '{text}' is not of the form start:step:stop")
    try:
        start, step, stop = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"grid '{text}' has a non-numeric field") from None
    if step <= 0:
        raise ConfigError(f"grid '{text}' needs a positive step")
    count = int(round((stop - start) / step)) + 1
    if count < 1 or abs(start + (count - 1) * step - stop) > 1e-6:
        raise ConfigError(f"grid '{text}' does not end on a whole number of steps")
    return ThicknessGrid(start=start, step=step, count=count)


def downsample(profile: LineProfile, mode: str = "stride", expected_length: int = PROFILE_LENGTH) -> FeatureVector:
    """Reduce a full profile to the 40 network inputs.

    stride: every 25th pixel from pixel 0; block: mean of each 25-pixel block; head: the first 40 pixels.
    """
    samples = profile.samples
    if samples.size != expected_length:
        raise DimensionError(f"profile has {samples.size} samples, expected {expected_length}")
    if expected_length % FEATURE_COUNT or expected_length <= FEATURE_COUNT:
        raise DimensionError(f"cannot reduce {expected_length} samples to {FEATURE_COUNT} features")
    stride = expected_length // FEATURE_COUNT
    if mode == "stride":
        values = samples[::stride]
    elif mode == "block":
        values = samples.reshape(FEATURE_COUNT, stride).mean(axis=1)
    elif mode == "head":
        values = samples[:FEATURE_COUNT]
    else:
        raise ConfigError(f"unknown downsample mode '{mode}'", key="dataset.downsample")
    return FeatureVector(values.copy())


def _check_grid(setup: OpticalSetup, grid: ThicknessGrid) -> None:
    for thickness_nm in grid.values:
        FilmThickness(float(thickness_nm)).check_estimable(setup.wavelength)


def build_training_set(
    setup: OpticalSetup,
    grid: ThicknessGrid,
    mode: str = "stride",
    noise: Optional[ShotNoiseDetector] = None,
    seed: Optional[int] = None,
    realizations: int = 1,
) -> Dataset:
    """One clean record per training class; with a noise model, `realizations` noisy records per class."""
    _check_grid(setup, grid)
    records = []
    if noise is None:
        for thickness_nm in grid.values:
            profile = synthesize_profile(float(thickness_nm), setup)
            records.append(DatasetRecord(float(thickness_nm), downsample(profile, mode, setup.pixel_count)))
        provenance = Provenance.clean()
    else:
        if seed is None:
            raise ValidationError("noisy training needs a seed")
        records = _noisy_records(setup, grid, noise, seed, realizations, mode)
        provenance = Provenance(
            noisy=True, bit_depth=noise.detector.bit_depth, seed=seed, realizations=realizations, clamp=noise.clamp
        )
    logger.info("Built training set: %d records over %s nm (%s)", len(records), grid.spec(), provenance.label())
    return Dataset(records=records, kind=DatasetKind.TRAIN, provenance=provenance, downsample_mode=mode)


def build_test_set(
    setup: OpticalSetup,
    grid: ThicknessGrid,
    detector: DetectorModel,
    seed: int,
    realizations: int = 1,
    mode: str = "stride",
    clamp: bool = False,
) -> Dataset:
    """Noisy test records, `realizations` per thickness, each from its own substream."""
    _check_grid(setup, grid)
    noise = ShotNoiseDetector(detector, clamp=clamp)
    records = _noisy_records(setup, grid, noise, seed, realizations, mode)
    provenance = Provenance(
        noisy=True, bit_depth=detector.bit_depth, seed=int(seed), realizations=realizations, clamp=clamp
    )
    logger.info("Built test set: %d records over %s nm (%s)", len(records), grid.spec(), provenance.label())
    return Dataset(records=records, kind=DatasetKind.TEST, provenance=provenance, downsample_mode=mode)


def _noisy_records(
    setup: OpticalSetup, grid: ThicknessGrid, noise: ShotNoiseDetector, seed: int, realizations: int, mode: str
) -> list:
    if realizations < 1:
        raise ValidationError(f"realizations must be at least 1, got {realizations}")
    records = []
    for i, thickness_nm in enumerate(grid.values):
        clean = synthesize_profile(float(thickness_nm), setup)
        for r in range(realizations):
            noisy = noise.apply(clean, substream(seed, i * realizations + r))
            records.append(DatasetRecord(float(thickness_nm), downsample(noisy, mode, setup.pixel_count)))
    return records


def clean_dataset(setup: OpticalSetup, grid: ThicknessGrid, mode: str = "stride") -> Dataset:
    """Noiseless records for every grid thickness, labeled as a test set."""
    train = build_training_set(setup, grid, mode)
    return Dataset(records=train.records, kind=DatasetKind.TEST, provenance=Provenance.clean(), downsample_mode=mode)


def grid_overlap(train_grid: ThicknessGrid, test_grid: ThicknessGrid) -> np.ndarray:
    """Test thicknesses that are also training classes."""
    values = test_grid.values
    return values[[train_grid.contains(float(v)) for v in values]]
