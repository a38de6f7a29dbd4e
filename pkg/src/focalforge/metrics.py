"""PSNR, SSIM, and mIoU as used for quantitative reporting.

SSIM follows the reference windowed formulation (11x11 Gaussian window
with sigma 1.5, K1 = 0.01, K2 = 0.03, valid-region convolution).  Blur
maps are compared after normalizing by the dataset's sigma cap so the
data range is [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .image import ImagePlane, LabelMap
from .optics import BlurMap

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class MetricReport:
    psnr: float | None = None
    ssim: float | None = None
    miou: float | None = None
    per_class_iou: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "miou": self.miou,
            "per_class_iou": list(self.per_class_iou),
        }


def _plane(x) -> np.ndarray:
    if isinstance(x, (ImagePlane, BlurMap)):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def psnr(a, b, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE), capped at 100 dB for identical inputs."""
    a, b = _plane(a), _plane(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(data_range * data_range / mse))


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = size // 2
    d2 = np.arange(-r, r + 1, dtype=np.float64) ** 2
    w = np.exp(-(d2[:, None] + d2[None, :]) / (2.0 * sigma * sigma))
    return w / w.sum()


def ssim(a, b, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM index over valid window positions.

    Inputs must be single-channel and at least 11x11; convert RGB to a
    luma plane first.
    """
    a, b = _plane(a), _plane(b)
    a = a[:, :, 0] if a.ndim == 3 and a.shape[2] == 1 else a
    b = b[:, :, 0] if b.ndim == 3 and b.shape[2] == 1 else b
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("ssim expects single-channel inputs")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    win = _ssim_window()
    if a.shape[0] < win.shape[0] or a.shape[1] < win.shape[1]:
        raise ValueError(f"image {a.shape} smaller than the {win.shape} window")

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu1 = convolve2d(a, win, mode="valid")
    mu2 = convolve2d(b, win, mode="valid")
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s1 = convolve2d(a * a, win, mode="valid") - mu1_sq
    s2 = convolve2d(b * b, win, mode="valid") - mu2_sq
    s12 = convolve2d(a * b, win, mode="valid") - mu12
    ssim_map = ((2.0 * mu12 + c1) * (2.0 * s12 + c2)) / (
        (mu1_sq + mu2_sq + c1) * (s1 + s2 + c2)
    )
    return float(ssim_map.mean())


def _labels(x) -> tuple[np.ndarray, int | None]:
    if isinstance(x, LabelMap):
        return x.data, x.ignore_value
    return np.asarray(x), None


def miou(pred, gt, classes: int, ignore_value: int = 255) -> tuple[float, list]:
    """Mean IoU over classes present in prediction or ground truth.

    Ground-truth pixels equal to the ignore value are excluded from every
    tally.  Per-class IoU is TP / (TP + FP + FN); a class absent from
    both maps contributes nothing to the mean.
    """
    p, _ = _labels(pred)
    g, g_ign = _labels(gt)
    if g_ign is not None:
        ignore_value = g_ign
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    valid = g != ignore_value
    pf = p[valid].astype(np.int64)
    gf = g[valid].astype(np.int64)
    conf = np.bincount(gf * classes + pf, minlength=classes * classes)
    conf = conf.reshape(classes, classes)
    tp = np.diag(conf).astype(np.float64)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    denom = tp + fp + fn
    present = denom > 0
    iou = np.zeros(classes)
    iou[present] = tp[present] / denom[present]
    per_class = [float(iou[c]) if present[c] else float("nan") for c in range(classes)]
    mean = float(iou[present].mean()) if present.any() else float("nan")
    return mean, per_class


def eval_blurmap(pred: BlurMap, gt: BlurMap, sigma_max: float) -> MetricReport:
    """PSNR/SSIM of blur maps normalized to [0, 1] by the sigma cap."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise ValueError("blur map shapes differ")
    pn = pred.data.astype(np.float64) / sigma_max
    gn = gt.data.astype(np.float64) / sigma_max
    return MetricReport(psnr=psnr(pn, gn, 1.0), ssim=ssim(pn, gn, 1.0))


def y_psnr_ssim(a: ImagePlane, b: ImagePlane) -> MetricReport:
    """Y-channel PSNR/SSIM between two RGB images (the SR convention)."""
    from .image import rgb_to_ycbcr_y

    ya = rgb_to_ycbcr_y(a).data[:, :, 0]
    yb = rgb_to_ycbcr_y(b).data[:, :, 0]
    return MetricReport(psnr=psnr(ya, yb, 1.0), ssim=ssim(ya, yb, 1.0))
