"""Thin-lens defocus model: depth map -> per-pixel Gaussian sigma.

A scene point at depth z, with the lens focused at z_f, images to a circle
of confusion of diameter

    c(z) = A * f * |z - z_f| / (z * (z_f * 1000 - f))        [mm]

with aperture A and focal length f in millimeters and depths in meters.
The blur map is sigma = k_c * c * pixels_per_mm clipped to [0, sigma_max],
in HR-pixel units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import DepthMap


@dataclass(frozen=True)
class LensParams:
    """Thin-lens and sensor parameters driving the defocus model."""

    focal_length: float = 50.0       # mm
    aperture_diameter: float = 25.0  # mm
    focus_distance: float = 2.0      # meters
    pixels_per_mm: float = 100.0     # sensor sampling density
    coc_to_sigma: float = 0.25       # sigma as a fraction of COC diameter
    sigma_max: float = 5.0           # cap, HR pixels

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("focal_length must be positive")
        if self.aperture_diameter <= 0:
            raise ValueError("aperture_diameter must be positive")
        if self.focus_distance <= self.focal_length / 1000.0:
            raise ValueError("focus_distance must exceed the focal length")
        if self.pixels_per_mm <= 0:
            raise ValueError("pixels_per_mm must be positive")
        if self.coc_to_sigma <= 0:
            raise ValueError("coc_to_sigma must be positive")
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be positive")

    def replace(self, **kw) -> "LensParams":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class BlurMap:
    """H x W per-pixel Gaussian sigma in HR pixels, within [0, sigma_max]."""

    data: np.ndarray
    sigma_max: float = 5.0

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ValueError(f"BlurMap needs (H, W) data, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("BlurMap values must be finite")
        if d.min() < 0.0 or d.max() > self.sigma_max + 1e-6:
            raise ValueError(
                f"BlurMap values must lie in [0, {self.sigma_max}], "
                f"got [{d.min()}, {d.max()}]"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def coc_diameter(depth_m, lens: LensParams):
    """COC diameter in mm for depth(s) in meters; zero at the focus plane."""
    z = np.asarray(depth_m, dtype=np.float64)
    zf = lens.focus_distance
    denom_mm = zf * 1000.0 - lens.focal_length
    return (
        lens.aperture_diameter
        * lens.focal_length
        * np.abs(z - zf)
        / (z * denom_mm)
    )


def coc_sigma_map(depth: DepthMap, lens: LensParams) -> BlurMap:
    """Convert a depth map to a blur map via the thin-lens COC model.

    Per pixel: sigma = coc_to_sigma * c(z) * pixels_per_mm, clipped to
    [0, sigma_max].  Depth validity (positive, finite) is enforced by
    DepthMap on ingestion.
    """
    sigma = lens.coc_to_sigma * coc_diameter(depth.data, lens) * lens.pixels_per_mm
    np.clip(sigma, 0.0, lens.sigma_max, out=sigma)
    return BlurMap(sigma.astype(np.float32), sigma_max=lens.sigma_max)


def invariant_sigma_map(height: int, width: int, sigma: float, sigma_max: float = 5.0) -> BlurMap:
    """Constant blur map for space-invariant degradation."""
    if not 0.0 <= sigma <= sigma_max:
        raise ValueError(f"sigma {sigma} outside [0, {sigma_max}]")
    data = np.full((height, width), sigma, dtype=np.float32)
    return BlurMap(data, sigma_max=sigma_max)


def sample_focus_distance(depth: DepthMap, rng: np.random.Generator) -> float:
    """Draw a focus distance from the [5th, 95th] depth percentile band.

    Keeps every synthesized image containing both in-focus and defocused
    regions regardless of the scene's depth distribution.
    """
    lo, hi = np.percentile(depth.data, [5.0, 95.0])
    return float(rng.uniform(lo, hi))
