"""Run configuration: defaults, FRINGE_SEED, flat key = value files and CLI overrides."""
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from core.dataset import DOWNSAMPLE_MODES, TEST_GRID, TRAIN_GRID, parse_grid
from interfaces import ConfigError, DetectorModel, FringeError, OpticalSetup, ThicknessGrid, TrainConfig

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "FRINGE_SEED"


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on; the run is a pure function of it."""

    setup: OpticalSetup = field(default_factory=OpticalSetup.reference_bench)
    train_grid: ThicknessGrid = TRAIN_GRID
    test_grid: ThicknessGrid = TEST_GRID
    bit_depths: Tuple[int, ...] = (8, 10)
    noise_seed: int = 42
    clamp: bool = False
    realizations: int = 1
    noisy_training: bool = False
    downsample_mode: str = "stride"
    init_seed: int = 7
    train: TrainConfig = field(default_factory=TrainConfig)
    robustness_realizations: int = 0
    output_dir: Path = Path("runs/latest")

    def __post_init__(self):
        if not self.bit_depths:
            raise ConfigError("at least one detector bit depth is needed", key="detector.bit_depth")
        for bits in self.bit_depths:
            DetectorModel.from_bit_depth(bits)
        if self.downsample_mode not in DOWNSAMPLE_MODES:
            raise ConfigError(f"unknown downsample mode '{self.downsample_mode}'", key="dataset.downsample")
        if self.realizations < 1:
            raise ConfigError("noise.realizations must be at least 1", key="noise.realizations")
        if self.robustness_realizations < 0:
            raise ConfigError("eval.robustness_realizations cannot be negative", key="eval.robustness_realizations")

    @property
    def detectors(self) -> Tuple[DetectorModel, ...]:
        return tuple(DetectorModel.from_bit_depth(b) for b in self.bit_depths)

    def with_seed(self, seed: int) -> "RunConfig":
        """Same config with every seed replaced by one value."""
        seed = _check_seed(seed, "--seed")
        return replace(self, noise_seed=seed, init_seed=seed, train=replace(self.train, seed=seed))

    def seeds(self) -> Dict[str, int]:
        return {"noise.seed": self.noise_seed, "model.init_seed": self.init_seed, "train.seed": self.train.seed}

    def echo(self) -> Dict[str, Any]:
        """Flat key -> value view, using the config-file keys."""
        return {
            "optics.wavelength_nm": round(self.setup.wavelength_nm, 9),
            "optics.wavefront_radius_m": self.setup.wavefront_radius,
            "optics.pixel_pitch_wavelengths": round(self.setup.pixel_pitch / self.setup.wavelength, 9),
            "optics.pixel_count": self.setup.pixel_count,
            "grid.train": self.train_grid.spec(),
            "grid.test": self.test_grid.spec(),
            "detector.bit_depth": ",".join(str(b) for b in self.bit_depths),
            "noise.seed": self.noise_seed,
            "noise.clamp": self.clamp,
            "noise.realizations": self.realizations,
            "noise.train": self.noisy_training,
            "dataset.downsample": self.downsample_mode,
            "model.init_seed": self.init_seed,
            "train.learning_rate": self.train.learning_rate,
            "train.max_epochs": self.train.max_epochs,
            "train.target_mse": self.train.target_mse,
            "train.seed": self.train.seed,
            "train.shuffle": self.train.shuffle,
            "eval.robustness_realizations": self.robustness_realizations,
            "output.dir": str(self.output_dir),
        }


def _check_seed(value: Any, key: str) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"seed '{value}' is not an integer", key=key) from None
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed {seed} is not an unsigned 64-bit integer", key=key)
    return seed


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _parse_bit_depths(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.replace("|", ",").split(",") if part.strip())


# key -> (parser, RunConfig-level setter)
_PARSERS: Dict[str, Callable[[str], Any]] = {
    "optics.wavelength_nm": float,
    "optics.wavefront_radius_m": float,
    "optics.pixel_pitch_wavelengths": float,
    "optics.pixel_count": int,
    "grid.train": parse_grid,
    "grid.test": parse_grid,
    "detector.bit_depth": _parse_bit_depths,
    "noise.seed": int,
    "noise.clamp": _parse_bool,
    "noise.realizations": int,
    "noise.train": _parse_bool,
    "dataset.downsample": str,
    "model.init_seed": int,
    "train.learning_rate": float,
    "train.max_epochs": int,
    "train.target_mse": float,
    "train.seed": int,
    "train.shuffle": _parse_bool,
    "eval.robustness_realizations": int,
    "output.dir": Path,
}
_SEED_KEYS = ("noise.seed", "model.init_seed", "train.seed")


def parse_config_text(text: str) -> Dict[str, Any]:
    """Parse `key = value` lines; '#' starts a comment."""
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError("unknown key", key=key, line=number)
        try:
            values[key] = _PARSERS[key](value)
        except ConfigError as e:
            raise ConfigError(str(e), key=key, line=number) from None
        except (ValueError, FringeError) as e:
            raise ConfigError(f"bad value '{value}': {e}", key=key, line=number) from None
        if key in _SEED_KEYS and not 0 <= values[key] < 2**64:
            raise ConfigError(f"seed {values[key]} is not an unsigned 64-bit integer", key=key, line=number)
    return values


def read_config_file(path) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path} ({e.strerror})") from e
    return parse_config_text(text)


def build_run_config(
    values: Optional[Dict[str, Any]] = None, seed: Optional[int] = None, environ: Optional[Dict[str, str]] = None
) -> RunConfig:
    """Defaults < FRINGE_SEED < config values < explicit seed override."""
    values = dict(values or {})
    environ = os.environ if environ is None else environ
    base = RunConfig()

    env_seed = environ.get(SEED_ENV_VAR)
    if env_seed not in (None, ""):
        env_value = _check_seed(env_seed, SEED_ENV_VAR)
        for key in _SEED_KEYS:
            values.setdefault(key, env_value)

    defaults = base.echo()

    def get(key: str) -> Any:
        if key in values:
            return values[key]
        return _PARSERS[key](str(defaults[key]))

    try:
        setup = OpticalSetup.from_wavelength_steps(
            get("optics.wavelength_nm"),
            get("optics.wavefront_radius_m"),
            get("optics.pixel_pitch_wavelengths"),
            get("optics.pixel_count"),
        )
        train = TrainConfig(
            learning_rate=get("train.learning_rate"),
            max_epochs=get("train.max_epochs"),
            target_mse=get("train.target_mse"),
            seed=get("train.seed"),
            shuffle=get("train.shuffle"),
        )
        config = RunConfig(
            setup=setup,
            train_grid=values.get("grid.train", base.train_grid),
            test_grid=values.get("grid.test", base.test_grid),
            bit_depths=tuple(get("detector.bit_depth")),
            noise_seed=get("noise.seed"),
            clamp=get("noise.clamp"),
            realizations=get("noise.realizations"),
            noisy_training=get("noise.train"),
            downsample_mode=get("dataset.downsample"),
            init_seed=get("model.init_seed"),
            train=train,
            robustness_realizations=get("eval.robustness_realizations"),
            output_dir=Path(values.get("output.dir", base.output_dir)),
        )
    except ConfigError:
        raise
    except FringeError as e:
        raise ConfigError(str(e)) from None

    if seed is not None:
        config = config.with_seed(seed)
    logger.debug("Run config: %s", config.echo())
    return config


def load_run_config(path=None, seed: Optional[int] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Config file (optional) plus CLI overrides already parsed into config keys."""
    values = read_config_file(path) if path is not None else {}
    values.update(overrides or {})
    return build_run_config(values, seed=seed)
