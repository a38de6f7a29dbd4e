"""
Quality metrics walkthrough
===========================

PSNR and SSIM for continuous maps, mean IoU for label maps, and the
combined blur-map report used when scoring defocus estimates.
"""

import numpy as np

from focalforge.metrics import eval_blurmap, miou, psnr, ssim
from focalforge.optics import BlurMap

rng = np.random.default_rng(0)
clean = rng.random((64, 64))

# PSNR falls by ~6 dB per doubling of the error amplitude.
print("noise    PSNR      SSIM")
for amp in (0.004, 0.008, 0.016, 0.032):
    noisy = np.clip(clean + rng.normal(0.0, amp, clean.shape), 0.0, 1.0)
    print(f"{amp:.3f}  {psnr(clean, noisy):7.2f}  {ssim(clean, noisy):7.4f}")

# A uniform 1/255 offset lands exactly on the 8-bit reference point.
offset = clean * 0.9 + 1.0 / 255.0
print(f"uniform 1/255 shift: {psnr(clean * 0.9, offset):.2f} dB "
      f"(8-bit anchor {20 * np.log10(255):.2f})")
print(f"identical inputs: SSIM {ssim(clean, clean):.1f}")

# Mean IoU averages per-class intersection over union; a predictor that
# answers background everywhere gets 0.5 for background, 0 for the rest.
gt = np.zeros((8, 8), dtype=np.int64)
gt[:, 4:] = 1
pred = np.zeros_like(gt)
mean, per = miou(pred, gt, classes=2)
print(f"all-background vs half-split labels: per-class {per}, mean {mean}")

# Ignored pixels (e.g. unlabeled border) drop out of the tally entirely.
gt_ign = gt.copy()
gt_ign[0, :] = 255
mean_ign, _ = miou(pred, gt_ign, classes=2)
print(f"with one ignored row: mean {mean_ign:.4f}")

# Blur maps are scored against their full sigma range, so a 0.1-sigma
# error means the same thing for a 5-sigma lens and a 15-sigma one.
gt_blur = BlurMap(rng.uniform(0.0, 5.0, (32, 32)), sigma_max=5.0)
pred_blur = BlurMap(np.clip(gt_blur.data + 0.1, 0.0, 5.0), sigma_max=5.0)
rep = eval_blurmap(pred_blur, gt_blur, sigma_max=5.0)
print(f"blur map +0.1 sigma everywhere: PSNR {rep.psnr:.2f} dB, SSIM {rep.ssim:.4f}")
