"""Shared data types, abstract interfaces and errors for fringe thickness estimation."""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

# Working range of the film thickness, in nanometers
MAX_THICKNESS_NM = 200.0
FEATURE_COUNT = 40
PROFILE_LENGTH = 1000

_GRID_TOLERANCE_NM = 1e-9


class FringeError(Exception):
    """Base error; exit_code is what the CLI returns for it."""

    exit_code = 3


class UsageError(FringeError):
    exit_code = 1


class ConfigError(UsageError):
    """Bad config file or option value."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class StorageError(FringeError):
    """I/O failure on a named path."""

    exit_code = 2

    def __init__(self, message: str, path=None):
        self.path = path
        super().__init__(f"{message}: {path}" if path is not None else message)


class ValidationError(FringeError, ValueError):
    exit_code = 3


class OpticsDomainError(ValidationError):
    """Square-root argument of a wavefront phase is not positive."""


class DimensionError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class DegenerateOutputError(ValidationError):
    pass


class FormatError(ValidationError):
    """Parse error that knows where in the file it happened."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location = f" at line {line}"
            if column is not None:
                location += f", column {column}"
        super().__init__(f"{message}{location}")


class DatasetFormatError(FormatError):
    pass


class ModelFormatError(FormatError):
    pass


class ReportFormatError(FormatError):
    pass


@dataclass(frozen=True)
class OpticalSetup:
    """Wavelength, wavefront radius and sampling of the observation line (SI units)."""

    wavelength: float = 500e-9
    wavefront_radius: float = 0.05
    pixel_pitch: float = 2e-6
    pixel_count: int = PROFILE_LENGTH

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValidationError(f"wavelength must be positive, got {self.wavelength}")
        if not self.wavefront_radius > 0:
            raise ValidationError(f"wavefront radius must be positive, got {self.wavefront_radius}")
        if not self.pixel_pitch > 0:
            raise ValidationError(f"pixel pitch must be positive, got {self.pixel_pitch}")
        if self.pixel_count < 1:
            raise ValidationError(f"pixel count must be at least 1, got {self.pixel_count}")
        span = (self.pixel_count - 1) * self.pixel_pitch
        if self.wavefront_radius <= span:
            raise OpticsDomainError(
                f"wavefront radius {self.wavefront_radius} m does not exceed the sampled span {span} m"
            )

    @classmethod
    def reference_bench(cls) -> "OpticalSetup":
        """500 nm light, 5 cm wavefront, 4-wavelength pixel step over 1000 pixels."""
        return cls.from_wavelength_steps(500.0, 0.05, 4.0, PROFILE_LENGTH)

    @classmethod
    def from_wavelength_steps(
        cls, wavelength_nm: float, wavefront_radius_m: float, pitch_in_wavelengths: float, pixel_count: int
    ) -> "OpticalSetup":
        wavelength = wavelength_nm * 1e-9
        return cls(
            wavelength=wavelength,
            wavefront_radius=wavefront_radius_m,
            pixel_pitch=pitch_in_wavelengths * wavelength,
            pixel_count=pixel_count,
        )

    @property
    def wavelength_nm(self) -> float:
        return self.wavelength * 1e9


@dataclass(frozen=True)
class FilmThickness:
    value: float  # nm

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValidationError(f"film thickness must be finite and non-negative, got {self.value} nm")

    @property
    def meters(self) -> float:
        return self.value * 1e-9

    def check_estimable(self, wavelength: float) -> None:
        """Estimation needs 4*pi*T/lambda below 2*pi."""
        if self.meters >= wavelength / 2:
            raise ValidationError(
                f"thickness {self.value} nm is not below half the wavelength ({wavelength * 1e9 / 2} nm)"
            )


@dataclass
class LineProfile:
    """Intensity samples along the observation line, tagged with the true thickness."""

    thickness: FilmThickness
    samples: np.ndarray
    noisy: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DimensionError(f"profile samples must be one-dimensional, got shape {self.samples.shape}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValidationError("profile samples must be finite")
        if self.samples.size and self.samples.min() < 0:
            raise ValidationError("profile samples must be non-negative")
        # Shot noise may push samples above full scale
        if not self.noisy and self.samples.size and self.samples.max() > 1.0:
            raise ValidationError("clean profile samples must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class DetectorModel:
    """Grey-level detector: full scale G_max = 2^bits - 1, noise figure 1/sqrt(G_max)."""

    bit_depth: int
    g_max: int = field(init=False)
    noise_figure: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.bit_depth, (int, np.integer)) or self.bit_depth < 1:
            raise ValidationError(f"bit depth must be a positive integer, got {self.bit_depth!r}")
        g_max = 2 ** int(self.bit_depth) - 1
        object.__setattr__(self, "g_max", g_max)
        object.__setattr__(self, "noise_figure", 1.0 / math.sqrt(g_max))

    @classmethod
    def from_bit_depth(cls, bit_depth: int) -> "DetectorModel":
        return cls(bit_depth=int(bit_depth))

    def describe(self) -> str:
        return f"{self.bit_depth}-bit (G_max={self.g_max}, sigma={self.noise_figure:.5f})"


@dataclass
class RngState:
    """Seeded 64-bit generator (numpy PCG64). Same seed, same stream."""

    seed: int
    key: Tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        entropy = [int(self.seed), *[int(k) for k in self.key]]
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def uniform(self) -> float:
        return float(self.generator.random())


@dataclass(frozen=True)
class ThicknessGrid:
    """Evenly spaced thicknesses in nm: start, start+step, ..."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.start > 0:
            raise ValidationError(f"grid start must be positive, got {self.start} nm")
        if not self.step > 0:
            raise ValidationError(f"grid step must be positive, got {self.step} nm")
        if self.count < 1:
            raise ValidationError(f"grid needs at least one value, got count={self.count}")
        if self.stop > MAX_THICKNESS_NM + _GRID_TOLERANCE_NM:
            raise ValidationError(f"grid ends at {self.stop} nm, beyond the {MAX_THICKNESS_NM} nm working range")

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.step

    @property
    def values(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count, dtype=np.float64)

    def index_of(self, thickness_nm: float) -> Optional[int]:
        """Class index of an on-grid thickness, None when off the grid."""
        position = (thickness_nm - self.start) / self.step
        index = int(round(position))
        if 0 <= index < self.count and abs(self.start + index * self.step - thickness_nm) <= 1e-6:
            return index
        return None

    def contains(self, thickness_nm: float) -> bool:
        return self.index_of(thickness_nm) is not None

    def spec(self) -> str:
        return f"{self.start:g}:{self.step:g}:{self.stop:g}"


@dataclass
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (FEATURE_COUNT,):
            raise DimensionError(f"feature vector needs {FEATURE_COUNT} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)) or self.values.min() < 0:
            raise ValidationError("feature values must be finite and non-negative")

    def __len__(self) -> int:
        return FEATURE_COUNT


class DatasetKind(Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class Provenance:
    """clean, or noisy with the detector depth and seed that made it."""

    noisy: bool = False
    bit_depth: Optional[int] = None
    seed: Optional[int] = None
    realizations: int = 1
    clamp: bool = False

    @classmethod
    def clean(cls) -> "Provenance":
        return cls()

    def label(self) -> str:
        if not self.noisy:
            return "clean"
        return f"noisy({self.bit_depth}-bit, seed={self.seed})"


@dataclass
class DatasetRecord:
    thickness_nm: float
    features: FeatureVector


@dataclass
class Dataset:
    records: List[DatasetRecord]
    kind: DatasetKind
    provenance: Provenance = field(default_factory=Provenance.clean)
    downsample_mode: str = "stride"

    def __len__(self) -> int:
        return len(self.records)

    def thicknesses(self) -> np.ndarray:
        return np.array([r.thickness_nm for r in self.records], dtype=np.float64)

    def feature_matrix(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, FEATURE_COUNT))
        return np.stack([r.features.values for r in self.records])


@dataclass(frozen=True)
class ClassCode:
    """One-hot target for a training class."""

    class_index: int
    thickness_nm: float
    one_hot: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def for_index(cls, class_index: int, grid: ThicknessGrid) -> "ClassCode":
        if not 0 <= class_index < grid.count:
            raise DimensionError(f"class index {class_index} outside 0..{grid.count - 1}")
        one_hot = np.zeros(grid.count)
        one_hot[class_index] = 1.0
        one_hot.setflags(write=False)
        return cls(class_index, float(grid.values[class_index]), one_hot)

    @classmethod
    def for_thickness(cls, thickness_nm: float, grid: ThicknessGrid) -> "ClassCode":
        index = grid.index_of(thickness_nm)
        if index is None:
            raise ValidationError(f"{thickness_nm} nm is not a training-grid thickness ({grid.spec()})")
        return cls.for_index(index, grid)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2.0
    max_epochs: int = 50_000
    target_mse: float = 5e-5
    seed: int = 11
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning rate must be positive, got {self.learning_rate}")
        if not self.target_mse > 0:
            raise ValidationError(f"target MSE must be positive, got {self.target_mse}")
        if self.max_epochs < 1:
            raise ValidationError(f"max epochs must be at least 1, got {self.max_epochs}")


@dataclass(frozen=True)
class EvalRecord:
    catalogue_nm: float
    ann_nm_argmax: float
    ann_nm_expect: float


@dataclass
class EvalReport:
    records: List[EvalRecord]
    detector: Optional[DetectorModel]
    rms_argmax: float
    rms_expect: float
    rms_ongrid_argmax: Optional[float]  # None when no test thickness is on the training grid


class NoiseModelInterface(ABC):
    """Interface for detector noise applied to clean line profiles."""

    @abstractmethod
    def apply(self, profile: LineProfile, rng: RngState) -> LineProfile:
        """Return a noisy copy of the profile."""
        pass

    @abstractmethod
    def describe(self) -> dict:
        """Parameters recorded in run manifests."""
        pass
