"""Grey-level detector model with Poisson shot noise."""
import logging
import math

import numpy as np

from interfaces import DetectorModel, LineProfile, NoiseModelInterface, RngState, ValidationError

logger = logging.getLogger(__name__)

# Below this mean the sequential-search inversion is used, above it transformed rejection
INVERSION_LIMIT = 30.0


def substream(seed: int, index: int) -> RngState:
    """Independent stream for one profile, keyed by (seed, index) so generation order does not matter."""
    return RngState(seed=int(seed), key=(int(index),))


def _poisson_inversion(mean: float, rng: RngState) -> int:
    u = rng.uniform()
    count = 0
    p = math.exp(-mean)
    cumulative = p
    while u > cumulative:
        count += 1
        p *= mean / count
        cumulative += p
        # Round-off can leave the cumulative sum a hair below 1
        if p == 0.0 and count > mean:
            break
    return count


def _poisson_ptrs(mean: float, rng: RngState) -> int:
    """Hormann's transformed rejection with squeeze (PTRS), exact for mean >= 10."""
    slam = math.sqrt(mean)
    loglam = math.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)

    while True:
        u = rng.uniform() - 0.5
        v = rng.uniform()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + mean + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)) <= (
            -mean + k * loglam - math.lgamma(k + 1)
        ):
            return int(k)


def poisson_sample(mean: float, rng: RngState) -> int:
    """One Poisson count with the given mean."""
    mean = float(mean)
    if not math.isfinite(mean) or mean < 0:
        raise ValidationError(f"Poisson mean must be finite and non-negative, got {mean}")
    if mean == 0.0:
        return 0
    if mean < INVERSION_LIMIT:
        return _poisson_inversion(mean, rng)
    return _poisson_ptrs(mean, rng)


def add_shot_noise(profile: LineProfile, detector: DetectorModel, rng: RngState, clamp: bool = False) -> LineProfile:
    """poisson(I * G_max) / G_max per pixel; results sit on the 1/G_max lattice."""
    g_max = detector.g_max
    counts = np.empty(profile.samples.size, dtype=np.float64)
    for index, intensity in enumerate(profile.samples):
        counts[index] = poisson_sample(intensity * g_max, rng)
    if clamp:
        np.minimum(counts, g_max, out=counts)
    return LineProfile(thickness=profile.thickness, samples=counts / g_max, noisy=True)


def snr(detector: DetectorModel) -> float:
    """The noise figure 1/sqrt(G_max)."""
    return detector.noise_figure


class ShotNoiseDetector(NoiseModelInterface):
    """Shot-noise-only detector applied to clean line profiles."""

    def __init__(self, detector: DetectorModel, clamp: bool = False):
        self.detector = detector
        self.clamp = clamp

    def apply(self, profile: LineProfile, rng: RngState) -> LineProfile:
        """Return a noisy copy of the profile."""
        return add_shot_noise(profile, self.detector, rng, clamp=self.clamp)

    def describe(self) -> dict:
        """Detector parameters for manifests."""
        return {
            "bit_depth": self.detector.bit_depth,
            "g_max": self.detector.g_max,
            "noise_figure": self.detector.noise_figure,
            "clamp": self.clamp,
        }
