"""Interference phases and line-profile synthesis for a film under a diverging wavefront.

The object beam is a spherical wave of radius R0 meeting a plane reference wave.
A film of thickness T adds a path difference of 2T. The operative phase is

    dphi(x, y, T) = dphi_const(x, y) - dphi_var(T)
    dphi_const    = 2*pi*(R0 - sqrt(R0^2 - r^2)) / lambda
    dphi_var      = 4*pi*T / lambda

dphi_const carries the ring structure and is kept in the synthesized intensity;
it needs no per-experiment recalibration, which is all "constant" means here.
"""
import logging
from typing import Iterable, Union

import numpy as np

from interfaces import FilmThickness, LineProfile, OpticalSetup, OpticsDomainError, ValidationError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _as_thickness(thickness: Union[FilmThickness, float]) -> FilmThickness:
    if isinstance(thickness, FilmThickness):
        return thickness
    return FilmThickness(float(thickness))


def _sagitta(r2: ArrayLike, radius: float) -> ArrayLike:
    """R - sqrt(R^2 - r^2) in the form r^2 / (R + sqrt(R^2 - r^2)), free of cancellation."""
    r2 = np.asarray(r2, dtype=np.float64)
    argument = radius * radius - r2
    if np.any(argument <= 0):
        raise OpticsDomainError(
            f"x^2 + y^2 = {float(np.max(r2)):.6e} m^2 is not inside the wavefront radius {radius} m"
        )
    return r2 / (radius + np.sqrt(argument))


def _scalar_or_array(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def pixel_positions(setup: OpticalSetup) -> np.ndarray:
    """x_k = k * pitch for k = 0..N-1 along the line y = 0 through the ring center."""
    return np.arange(setup.pixel_count, dtype=np.float64) * setup.pixel_pitch


def sagittal_phase(x: ArrayLike, y: ArrayLike, setup: OpticalSetup) -> ArrayLike:
    """Thickness-independent phase 2*pi*(R0 - sqrt(R0^2 - r^2))/lambda."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    phase = 2.0 * np.pi * _sagitta(x * x + y * y, setup.wavefront_radius) / setup.wavelength
    return _scalar_or_array(phase)


def thickness_phase(thickness: Union[FilmThickness, float], wavelength: float) -> float:
    """4*pi*T/lambda, T in nm and wavelength in m."""
    if not wavelength > 0:
        raise ValidationError(f"wavelength must be positive, got {wavelength}")
    return 4.0 * np.pi * _as_thickness(thickness).meters / wavelength


def exact_phase(x: ArrayLike, y: ArrayLike, thickness: Union[FilmThickness, float], setup: OpticalSetup) -> ArrayLike:
    """Phase with the wavefront radius shortened to R0 - 2T, before any approximation.

    At the ring center this is 0 for every T, while the approximated phase is -4*pi*T/lambda;
    see center_referenced_exact_phase for a comparable form.
    """
    radius = setup.wavefront_radius - 2.0 * _as_thickness(thickness).meters
    if radius <= 0:
        raise OpticsDomainError(f"film thickness leaves a non-positive wavefront radius {radius} m")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    phase = 2.0 * np.pi * _sagitta(x * x + y * y, radius) / setup.wavelength
    return _scalar_or_array(phase)


def center_referenced_exact_phase(
    x: ArrayLike, y: ArrayLike, thickness: Union[FilmThickness, float], setup: OpticalSetup
) -> ArrayLike:
    """exact_phase minus 4*pi*T/lambda: same piston term as sagittal_phase - thickness_phase."""
    phase = np.asarray(exact_phase(x, y, thickness, setup)) - thickness_phase(thickness, setup.wavelength)
    return _scalar_or_array(phase)


def fringe_intensity(delta_phi: ArrayLike) -> ArrayLike:
    """(1 + cos dphi) / 2, the normalized two-beam intensity."""
    intensity = 0.5 * (1.0 + np.cos(np.asarray(delta_phi, dtype=np.float64)))
    # cos can overshoot by an ulp
    intensity = np.clip(intensity, 0.0, 1.0)
    return _scalar_or_array(intensity)


def synthesize_profile(thickness: Union[FilmThickness, float], setup: OpticalSetup) -> LineProfile:
    """Noiseless intensity along the line y = 0 through the ring center."""
    film = _as_thickness(thickness)
    x = pixel_positions(setup)
    phase = np.asarray(sagittal_phase(x, 0.0, setup)) - thickness_phase(film, setup.wavelength)
    samples = np.atleast_1d(fringe_intensity(phase))
    logger.debug("Synthesized %d-pixel profile for T=%.3f nm", samples.size, film.value)
    return LineProfile(thickness=film, samples=samples)


def approximation_error(setup: OpticalSetup, thicknesses_nm: Iterable[float]) -> float:
    """Largest intensity gap between the exact and the approximated phase over all pixels and thicknesses."""
    x = pixel_positions(setup)
    approximate_base = np.asarray(sagittal_phase(x, 0.0, setup))
    worst = 0.0
    for thickness_nm in thicknesses_nm:
        exact = np.asarray(fringe_intensity(center_referenced_exact_phase(x, 0.0, thickness_nm, setup)))
        approximate = np.asarray(fringe_intensity(approximate_base - thickness_phase(thickness_nm, setup.wavelength)))
        worst = max(worst, float(np.max(np.abs(exact - approximate))))
    return worst
