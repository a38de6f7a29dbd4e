"""Dataset synthesis: splits, variant/invariant mixing, groups, manifests.

A manifest is built once from source (rgb, depth, label) path triples and
a DatasetSpec; synthesis then renders each entry independently.  Every
random draw is keyed by (dataset seed, entry id), so any worker count and
any rendering order produce identical pixels.

Split accounting: per split, floor(n * invariant_fraction) entries render
with a constant (space-invariant) blur map, the rest from their depth via
the thin-lens model.  The test split additionally defines `groups`
rotations of the invariant subset over one seeded permutation, pairwise
disjoint, so each group sees a different subset blurred invariantly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .image import DepthMap, ImagePlane, LabelMap, load_depth_map, load_image, load_label_map
from .optics import BlurMap, LensParams, coc_sigma_map, invariant_sigma_map, sample_focus_distance
from .svblur import DegradeOpts, degrade

_SPLIT_ORDER = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetSpec:
    """Construction parameters for one synthesized dataset."""

    name: str
    sigma_max: float = 5.0
    kernel_size: int = 21
    scale_factor: int = 4
    invariant_fraction: float = 0.2
    groups: int = 5
    image_size: tuple[int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.invariant_fraction < 1.0:
            raise ValueError("invariant_fraction must lie in (0, 1)")
        if self.groups < 1:
            raise ValueError("groups must be >= 1")
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be positive")

    def degrade_opts(self, mode: str = "exact", noise_sigma: float = 0.0) -> DegradeOpts:
        return DegradeOpts(
            scale_factor=self.scale_factor,
            kernel_size=self.kernel_size,
            noise_sigma=noise_sigma,
            mode=mode,
        )


@dataclass(frozen=True)
class ManifestEntry:
    """One source image and how to degrade it.

    Test entries belong to every group; `invariant_group` names the single
    group (if any) in which the entry renders space-invariantly.  Train and
    val entries use the `variant` flag directly.  `invariant_sigma` is
    pre-drawn for every entry so the flag can flip per group without
    consulting any shared state.
    """

    id: str
    rgb_path: str
    depth_path: str
    label_path: str
    lr_path: str
    blurmap_path: str
    split: str
    variant: bool
    group_memberships: tuple[int, ...] = ()
    invariant_group: int | None = None
    invariant_sigma: float = 0.0
    lens: LensParams = field(default_factory=LensParams)

    def invariant_in(self, group: int | None) -> bool:
        """Whether this entry renders space-invariantly for `group`."""
        if self.split == "test" and group is not None:
            return self.invariant_group == group
        return not self.variant


def entry_rng(seed: int, entry_id: str) -> np.random.Generator:
    """Generator keyed by (dataset seed, entry id); stable across platforms."""
    digest = hashlib.sha256(entry_id.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng([seed, key])


def build_manifest(
    spec: DatasetSpec,
    inputs: list[tuple[str, str, str]],
    split_sizes: dict[str, int],
    lens: LensParams | None = None,
) -> list[ManifestEntry]:
    """Assign inputs to splits and pre-draw every entry's blur identity.

    `inputs` is consumed in order: the first split_sizes['train'] triples
    become the train split, and so on through val and test.  The lens (or a
    default one) is stored per entry with sigma_max forced to the spec's.
    """
    for name in split_sizes:
        if name not in _SPLIT_ORDER:
            raise ValueError(f"unknown split {name!r}")
    needed = sum(split_sizes.values())
    if len(inputs) < needed:
        raise ValueError(f"need {needed} input triples, got {len(inputs)}")
    base_lens = (lens or LensParams(sigma_max=spec.sigma_max)).replace(
        sigma_max=spec.sigma_max
    )

    entries: list[ManifestEntry] = []
    cursor = 0
    for split_idx, split in enumerate(_SPLIT_ORDER):
        n = split_sizes.get(split, 0)
        if n == 0:
            continue
        triples = inputs[cursor : cursor + n]
        cursor += n
        k_inv = math.floor(n * spec.invariant_fraction)
        rng = np.random.default_rng([spec.seed, split_idx])
        perm = rng.permutation(n)

        invariant_group = np.full(n, -1, dtype=int)
        if split == "test":
            if spec.groups * k_inv > n:
                raise ValueError(
                    f"{spec.groups} disjoint invariant groups of {k_inv} "
                    f"entries do not fit in a test split of {n}"
                )
            for g in range(1, spec.groups + 1):
                invariant_group[perm[(g - 1) * k_inv : g * k_inv]] = g
            groups = tuple(range(1, spec.groups + 1))
        else:
            invariant_group[perm[:k_inv]] = 0
            groups = ()

        for i, (rgb, depth, label) in enumerate(triples):
            eid = f"{split}_{i:05d}_{Path(rgb).stem}"
            sigma = float(entry_rng(spec.seed, eid).uniform(0.0, spec.sigma_max))
            if split == "test":
                inv_g = int(invariant_group[i]) if invariant_group[i] > 0 else None
                variant = inv_g is None
            else:
                inv_g = None
                variant = bool(invariant_group[i] < 0)
            entries.append(
                ManifestEntry(
                    id=eid,
                    rgb_path=str(rgb),
                    depth_path=str(depth),
                    label_path=str(label),
                    lr_path=f"{split}/{eid}_lr.png",
                    blurmap_path=f"{split}/{eid}_blur.pfm",
                    split=split,
                    variant=variant,
                    group_memberships=groups,
                    invariant_group=inv_g,
                    invariant_sigma=sigma,
                    lens=base_lens,
                )
            )
    return entries


def entry_output_paths(entry: ManifestEntry, group: int | None = None) -> tuple[str, str]:
    """Relative output paths, with test renders split per group directory."""
    if entry.split == "test" and group is not None:
        prefix = f"{entry.split}/group{group}/"
        return (
            entry.lr_path.replace(f"{entry.split}/", prefix, 1),
            entry.blurmap_path.replace(f"{entry.split}/", prefix, 1),
        )
    return entry.lr_path, entry.blurmap_path


def _resolve(path: str, root: Path | None) -> Path:
    p = Path(path)
    if root is not None and not p.is_absolute():
        return root / p
    return p


def synthesize_entry(
    entry: ManifestEntry,
    spec: DatasetSpec,
    group: int | None = None,
    opts: DegradeOpts | None = None,
    root: Path | None = None,
) -> tuple[ImagePlane, BlurMap]:
    """Render one entry: blur map from depth or constant sigma, then degrade.

    The entry's keyed generator first draws the focus distance (variant
    renders only), then the noise seed, so outputs are reproducible from
    (spec.seed, entry.id, group) alone.
    """
    if opts is None:
        opts = spec.degrade_opts()
    rgb = load_image(_resolve(entry.rgb_path, root))
    if spec.image_size is not None and (rgb.height, rgb.width) != tuple(spec.image_size):
        raise ValueError(
            f"entry {entry.id}: image is {rgb.height}x{rgb.width}, "
            f"spec expects {spec.image_size[0]}x{spec.image_size[1]}"
        )
    rng = entry_rng(spec.seed, entry.id)
    if entry.invariant_in(group):
        blurmap = invariant_sigma_map(
            rgb.height, rgb.width, entry.invariant_sigma, spec.sigma_max
        )
    else:
        depth = load_depth_map(_resolve(entry.depth_path, root))
        zf = sample_focus_distance(depth, rng)
        lens = entry.lens.replace(focus_distance=zf, sigma_max=spec.sigma_max)
        blurmap = coc_sigma_map(depth, lens)
    noise_seed = int(rng.integers(0, 2**31))
    lr = degrade(rgb, blurmap, opts, seed=noise_seed)
    return lr, blurmap


def augment(
    rgb: ImagePlane,
    blurmap: BlurMap,
    label: LabelMap,
    seed: int,
    ratio: float | None = None,
    flip: bool | None = None,
) -> tuple[ImagePlane, BlurMap, LabelMap]:
    """Random rescale from {1, 1.2, 1.5} plus horizontal flip at p=0.5.

    Blur values are divided by the chosen ratio (a wider image renders the
    same defocus with proportionally smaller sigma).  The label resizes
    with nearest neighbor, everything else bilinearly.  `ratio` and `flip`
    override the seeded draws when given, e.g. to force a flip in tests.
    """
    import cv2

    rng = np.random.default_rng(seed)
    drawn_ratio = float(rng.choice([1.0, 1.2, 1.5]))
    drawn_flip = bool(rng.uniform() < 0.5)
    r = drawn_ratio if ratio is None else float(ratio)
    do_flip = drawn_flip if flip is None else bool(flip)

    if r != 1.0:
        new_w = int(round(rgb.width * r))
        new_h = int(round(rgb.height * r))
        img = cv2.resize(rgb.data, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
        img = np.clip(img, 0.0, 1.0)
        if img.ndim == 2:
            img = img[:, :, None]
        bm = cv2.resize(blurmap.data, (new_w, new_h), interpolation=cv2.INTER_LINEAR)
        lab = cv2.resize(
            label.data.astype(np.int32), (new_w, new_h), interpolation=cv2.INTER_NEAREST
        )
    else:
        img = rgb.data.copy()
        bm = blurmap.data.copy()
        lab = label.data.copy()
    bm = (bm / r).astype(np.float32)

    if do_flip:
        img = img[:, ::-1]
        bm = bm[:, ::-1]
        lab = lab[:, ::-1]

    return (
        ImagePlane(np.ascontiguousarray(img)),
        BlurMap(np.ascontiguousarray(bm), sigma_max=blurmap.sigma_max),
        LabelMap(
            np.ascontiguousarray(lab).astype(label.data.dtype),
            classes=label.classes,
            ignore_value=label.ignore_value,
        ),
    )


def save_manifest(entries: list[ManifestEntry], path) -> None:
    """Write one JSON object per line."""
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            d = asdict(e)
            d["group_memberships"] = list(e.group_memberships)
            f.write(json.dumps(d) + "\n")


def load_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            d["group_memberships"] = tuple(d["group_memberships"])
            d["lens"] = LensParams(**d["lens"])
            entries.append(ManifestEntry(**d))
    return entries
