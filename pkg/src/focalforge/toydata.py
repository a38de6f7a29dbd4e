"""Synthetic two-plane scenes for desk-scale training and ablation runs.

Each scene is two fronto-parallel depth planes split by a random line.
The lens focuses exactly on the near plane, so the ground-truth blur map
takes exactly two values: 0 on the near plane and a scene-specific sigma
on the far one, and the semantic boundary between near and far classes
coincides with the blur edge.  Four classes arise from crossing the
depth split with a second, texture-only split; every class carries its
own color anchor and grating so both segmentation and sharpness cues
are learnable from the LR input alone.

Rendering runs the real degradation chain (space-variant blur, then
decimation, then optional noise), so the LR images carry the same blur
statistics the estimation network faces on file-based datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cmoslite import TrainingSet
from .image import DepthMap, ImagePlane, LabelMap
from .optics import BlurMap, LensParams, coc_sigma_map
from .svblur import DegradeOpts, degrade

# Fixed class anchors; per-scene jitter stays small so class identity is
# recoverable from color across the whole dataset.
_PALETTE = np.array(
    [
        [0.70, 0.30, 0.30],
        [0.30, 0.65, 0.35],
        [0.30, 0.40, 0.70],
        [0.65, 0.60, 0.30],
    ]
)
_ANGLES = np.array([0.0, 0.25, 0.5, 0.75]) * np.pi


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of the synthetic corpus; one seed drives everything."""

    count: int = 200
    lr_size: int = 96
    scale_factor: int = 2
    kernel_size: int = 15
    mode: str = "lut"
    sigma_max: float = 2.5
    noise_sigma: float = 0.0
    pixels_per_mm: float = 14.0
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.lr_size < 16:
            raise ValueError("lr_size must be >= 16 (network minimum)")
        if self.scale_factor < 1:
            raise ValueError("scale_factor must be >= 1")
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be positive")
        if self.kernel_size < 6 * self.sigma_max:
            raise ValueError(
                f"kernel_size {self.kernel_size} truncates sigma_max "
                f"{self.sigma_max} (needs >= {int(np.ceil(6 * self.sigma_max))})"
            )

    @property
    def hr_size(self) -> int:
        return self.lr_size * self.scale_factor

    @property
    def num_classes(self) -> int:
        return 4


def _scene_rng(spec: SceneSpec, index: int) -> np.random.Generator:
    """Per-scene generator keyed by (seed, index); count-independent."""
    return np.random.default_rng([spec.seed, 23, int(index)])


def _line_mask(size: int, angle: float, offset: float) -> np.ndarray:
    """Half-plane mask of the line through center + offset along the normal."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    proj = np.cos(angle) * (xx - c) + np.sin(angle) * (yy - c)
    return proj > offset * size


def _split_lines(size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Depth split plus texture split; every quadrant keeps >= 5% of pixels."""
    n = size * size
    for _ in range(100):
        depth_angle = rng.uniform(0.0, 2.0 * np.pi)
        far = _line_mask(size, depth_angle, rng.uniform(-0.15, 0.15))
        if min(far.sum(), n - far.sum()) >= 0.2 * n:
            break
    for _ in range(100):
        sub = _line_mask(size, rng.uniform(0.0, 2.0 * np.pi), rng.uniform(-0.15, 0.15))
        counts = [
            (far & sub).sum(),
            (far & ~sub).sum(),
            (~far & sub).sum(),
            (~far & ~sub).sum(),
        ]
        if min(counts) >= 0.05 * n:
            return far, sub
    # a perpendicular through the center always cuts both half-planes
    return far, _line_mask(size, depth_angle + np.pi / 2.0, 0.0)


def two_plane_scene(
    spec: SceneSpec, index: int
) -> tuple[ImagePlane, DepthMap, LabelMap, LensParams]:
    """Render the HR scene for one index: textured RGB, depth, labels, lens.

    Class id is 2*far + sub, so ids {0,1} share the focused near plane and
    {2,3} the blurred far one.  Gratings use HR frequencies in a band the
    s=2 decimation still represents, so sharpness stays observable at LR.
    """
    if not 0 <= index < spec.count:
        raise ValueError(f"index {index} outside [0, {spec.count})")
    rng = _scene_rng(spec, index)
    size = spec.hr_size
    far, sub = _split_lines(size, rng)
    label = (2 * far + sub).astype(np.int64)

    z_near = rng.uniform(1.2, 1.8)
    z_far = rng.uniform(2.6, 6.0)
    depth = np.where(far, z_far, z_near)
    lens = LensParams(
        focus_distance=z_near,
        pixels_per_mm=spec.pixels_per_mm,
        sigma_max=spec.sigma_max,
    )

    yy, xx = np.mgrid[0:size, 0:size]
    rgb = np.zeros((size, size, 3))
    for c in range(4):
        color = np.clip(_PALETTE[c] + rng.uniform(-0.05, 0.05, size=3), 0.0, 1.0)
        theta = _ANGLES[c] + rng.uniform(-0.2, 0.2)
        freq = rng.uniform(0.09, 0.18)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = 0.18 * np.sin(
            2.0 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase
        )
        theta2 = theta + np.pi / 2.0
        freq2 = rng.uniform(0.09, 0.18)
        wave += 0.07 * np.sin(
            2.0 * np.pi * freq2 * (np.cos(theta2) * xx + np.sin(theta2) * yy)
        )
        mask = label == c
        rgb[mask] = color[None, :] + wave[mask, None]
    rgb = np.clip(rgb, 0.0, 1.0)
    return ImagePlane(rgb), DepthMap(depth), LabelMap(label, classes=4), lens


def render_scene(
    spec: SceneSpec, index: int
) -> tuple[ImagePlane, BlurMap, LabelMap]:
    """LR observation plus HR supervision targets for one scene."""
    rgb, depth, label, lens = two_plane_scene(spec, index)
    blur = coc_sigma_map(depth, lens)
    opts = DegradeOpts(
        scale_factor=spec.scale_factor,
        kernel_size=spec.kernel_size,
        noise_sigma=spec.noise_sigma,
        mode=spec.mode,
    )
    # reuse the scene generator stream so the noise seed is reproducible
    noise_seed = int(_scene_rng(spec, index).integers(0, 2**31))
    lr = degrade(rgb, blur, opts, seed=noise_seed)
    return lr, blur, label


def synthesize_toy(spec: SceneSpec) -> TrainingSet:
    """Render the whole corpus into an in-memory training set."""
    lrs, blurs, labels, ids = [], [], [], []
    for i in range(spec.count):
        lr, blur, label = render_scene(spec, i)
        lrs.append(lr.data.astype(np.float32))
        blurs.append(blur.data.astype(np.float32))
        labels.append(label.data.astype(np.int64))
        ids.append(f"toy-{spec.seed}-{i:04d}")
    return TrainingSet(
        lr=lrs,
        blur_hr=blurs,
        labels_hr=labels,
        ids=ids,
        scale=spec.scale_factor,
        sigma_max=spec.sigma_max,
        num_classes=spec.num_classes,
    ).check()


def hold_out(
    data: TrainingSet, val_count: int, seed: int = 0
) -> tuple[TrainingSet, TrainingSet]:
    """Seeded split into disjoint train and validation sets."""
    n = len(data)
    if not 0 < val_count < n:
        raise ValueError(f"val_count must lie in (0, {n}), got {val_count}")
    order = np.random.default_rng([seed, 31]).permutation(n)
    val_idx = set(order[:val_count].tolist())

    def take(keep_val: bool) -> TrainingSet:
        idx = [i for i in range(n) if (i in val_idx) == keep_val]
        return TrainingSet(
            lr=[data.lr[i] for i in idx],
            blur_hr=[data.blur_hr[i] for i in idx],
            labels_hr=[data.labels_hr[i] for i in idx],
            ids=[data.ids[i] for i in idx],
            scale=data.scale,
            sigma_max=data.sigma_max,
            num_classes=data.num_classes,
        )

    return take(False), take(True)


def mean_blur_baseline(train: TrainingSet, val: TrainingSet) -> tuple[float, float]:
    """Held-out MAE of predicting the train-set mean sigma everywhere.

    The floor any useful estimator must beat; returns (mae, mean_sigma).
    """
    mean_sigma = float(np.mean([b.mean() for b in train.blur_hr]))
    mae = float(np.mean([np.abs(b - mean_sigma).mean() for b in val.blur_hr]))
    return mae, mean_sigma
