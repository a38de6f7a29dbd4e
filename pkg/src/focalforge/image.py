"""Raster containers and bit-exact file I/O.

Images travel as float arrays in [0, 1]; depth and blur fields travel as
32-bit float maps.  PNG (8/16-bit) is used for images and label maps, PFM
for float maps.  Everything here is pure: load -> array, array -> file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np


class ImageIOError(Exception):
    """Raised for missing, corrupt, or unsupported image files."""


@dataclass(frozen=True)
class ImagePlane:
    """H x W x C raster with float samples in [0, 1], C in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"ImagePlane needs (H, W, 1|3) data, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("ImagePlane samples must be finite")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("ImagePlane samples must lie in [0, 1]")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImagePlane":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        return cls(np.ascontiguousarray(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """H x W integer class ids; ids are < classes or == ignore_value."""

    data: np.ndarray
    classes: int
    ignore_value: int = 255

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ValueError(f"LabelMap needs (H, W) data, got {d.shape}")
        if not np.issubdtype(d.dtype, np.integer):
            raise ValueError("LabelMap data must be integer")
        bad = (d >= self.classes) & (d != self.ignore_value)
        bad |= d < 0
        if bad.any():
            raise ValueError(
                f"LabelMap has ids outside [0, {self.classes}) that are not "
                f"the ignore value {self.ignore_value}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DepthMap:
    """H x W metric depth in meters; strictly positive and finite."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ValueError(f"DepthMap needs (H, W) data, got {d.shape}")
        if not np.isfinite(d).all() or (d <= 0.0).any():
            bad = int(np.argmax(~np.isfinite(d) | (d <= 0.0)))
            i, j = divmod(bad, d.shape[1])
            raise ValueError(
                f"DepthMap has a non-positive or non-finite value at pixel "
                f"({i}, {j}); fill invalid measurements before ingestion"
            )

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def load_image(path) -> ImagePlane:
    """Load an 8- or 16-bit PNG as an ImagePlane scaled to [0, 1].

    Gray files come back with one channel, color files with three (RGB
    order).  Samples are divided by the bit depth's maximum, so 255 -> 1.0
    at 8 bit and 65535 -> 1.0 at 16 bit.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"no such image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"could not decode image: {path}")
    if raw.dtype == np.uint8:
        maxval = 255.0
    elif raw.dtype == np.uint16:
        maxval = 65535.0
    else:
        raise ImageIOError(f"unsupported sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return ImagePlane.from_array(raw.astype(np.float64) / maxval)


def save_image(img: ImagePlane, path, bit_depth: int = 8) -> None:
    """Write an ImagePlane as an 8- or 16-bit PNG.

    Samples are quantized with round-to-nearest, so a save/load round trip
    is within half a quantization step of the original.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxval = (1 << bit_depth) - 1
    q = np.rint(img.data * maxval)
    q = q.astype(np.uint8 if bit_depth == 8 else np.uint16)
    if q.shape[2] == 1:
        q = q[:, :, 0]
    else:
        q = cv2.cvtColor(q, cv2.COLOR_RGB2BGR)
    ok = cv2.imwrite(str(path), q)
    if not ok:
        raise ImageIOError(f"could not write image: {path}")


def load_label_map(path, classes: int, ignore_value: int = 255) -> LabelMap:
    """Load class ids from an 8-bit gray PNG."""
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"no such label file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"could not decode label map: {path}")
    if raw.ndim != 2 or raw.dtype != np.uint8:
        raise ImageIOError(f"label maps must be single-channel 8-bit PNG: {path}")
    return LabelMap(raw.astype(np.int64), classes=classes, ignore_value=ignore_value)


def save_label_map(label: LabelMap, path) -> None:
    ok = cv2.imwrite(str(path), label.data.astype(np.uint8))
    if not ok:
        raise ImageIOError(f"could not write label map: {path}")


# --- PFM (portable float map), the container for depth and sigma fields ---

_PFM_DIMS = re.compile(rb"^(\d+)\s+(\d+)\s*$")


def save_float_map(data: np.ndarray, path) -> None:
    """Write a 2-D float array as a single-channel PFM (little-endian).

    PFM stores rows bottom-to-top; the payload is float32, so the round
    trip is bit-exact for float32 inputs.
    """
    a = np.asarray(data, dtype=np.float32)
    if a.ndim != 2:
        raise ValueError(f"float maps must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("refusing to write non-finite values to a float map")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(a[::-1].astype("<f4").tobytes())


def load_float_map(path) -> np.ndarray:
    """Read a single-channel PFM into a float32 (H, W) array.

    Rejects malformed headers and NaN payloads.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"no such float map: {path}")
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise ImageIOError(f"not a single-channel PFM (bad magic {magic!r}): {path}")
        m = _PFM_DIMS.match(f.readline().strip())
        if not m:
            raise ImageIOError(f"malformed PFM dimension line in {path}")
        w, h = int(m.group(1)), int(m.group(2))
        try:
            scale = float(f.readline().strip())
        except ValueError as e:
            raise ImageIOError(f"malformed PFM scale line in {path}") from e
        if scale == 0.0:
            raise ImageIOError(f"PFM scale must be nonzero in {path}")
        endian = "<" if scale < 0 else ">"
        payload = f.read(4 * w * h)
    if len(payload) != 4 * w * h:
        raise ImageIOError(f"truncated PFM payload in {path}")
    a = np.frombuffer(payload, dtype=endian + "f4").reshape(h, w)[::-1]
    if np.isnan(a).any():
        raise ImageIOError(f"NaN values in float map {path}")
    return np.ascontiguousarray(a.astype(np.float32))


def load_depth_map(path) -> DepthMap:
    return DepthMap(load_float_map(path))


# --- color conversion ---

def rgb_to_ycbcr_y(img: ImagePlane) -> ImagePlane:
    """Extract the BT.601 studio-swing luma plane from an RGB image.

    Y = 16/255 + (65.481 R + 128.553 G + 24.966 B)/255, the convention of
    the standard SR evaluation scripts; white maps to 235/255 and black to
    16/255.
    """
    if img.channels != 3:
        raise ValueError("rgb_to_ycbcr_y needs a 3-channel image")
    r, g, b = img.data[:, :, 0], img.data[:, :, 1], img.data[:, :, 2]
    y = (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0
    return ImagePlane(np.ascontiguousarray(y[:, :, None]))
