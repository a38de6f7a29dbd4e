"""Space-variant Gaussian degradation engine.

Implements the gather form of the degradation y = (x conv k) down_s + n
with a per-output-pixel kernel: out(p) = sum_q K_sigma(p)(q) * x(p + q)
under replicate padding.  Exact mode builds one kernel per distinct sigma
(streaming the Gaussian weights when a map has too many distinct values
to table); lut mode interpolates between the two nearest kernels of a
precomputed bank over a uniform sigma grid on [0, sigma_max].

Images are processed channel-planar internally: per kernel offset the
weight gather and the multiply-accumulate then run over contiguous 2-d
planes, which is several times faster than broadcasting against an
interleaved (H, W, C) layout.  Exact mode accumulates at float64 so it
can serve as a reference; lut mode runs at float32, which stays far
inside its quantization error, and copies sigma == 0 pixels straight
from the input so the zero-map identity is bitwise in both modes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .image import ImagePlane
from .optics import BlurMap

# Above this many distinct sigmas, exact mode streams per-offset weights
# instead of materializing a kernel bank (memory stays bounded).
_EXACT_TABLE_CAP = 4096

_DELTA_SIGMA = 1e-6


@dataclass(frozen=True)
class Kernel:
    """Odd-sized k x k blur kernel; nonnegative, unit sum, 8-fold symmetric."""

    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be square with odd size, got {w.shape}")
        if (w < 0).any():
            raise ValueError("kernel weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"kernel weights must sum to 1, got {w.sum()!r}")

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DegradeOpts:
    """Knobs of the degradation chain (blur -> decimate -> noise)."""

    scale_factor: int = 4
    kernel_size: int = 21
    noise_sigma: float = 0.0
    lut_bins: int = 256
    mode: str = "exact"
    decimation_offset: int = 0
    boundary: str = "replicate"

    def __post_init__(self):
        if self.scale_factor < 1:
            raise ValueError("scale_factor must be >= 1")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError("kernel_size must be odd and positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.lut_bins < 2:
            raise ValueError("lut_bins must be >= 2")
        if self.mode not in ("exact", "lut"):
            raise ValueError(f"mode must be 'exact' or 'lut', got {self.mode!r}")
        if not 0 <= self.decimation_offset < self.scale_factor:
            raise ValueError("decimation_offset must lie in [0, scale_factor)")
        if self.boundary != "replicate":
            raise ValueError("only replicate boundary padding is supported")


def _kernel_bank(sigmas: np.ndarray, size: int) -> np.ndarray:
    """Normalized truncated Gaussians for a batch of sigmas, (n, size, size).

    sigma below the delta threshold yields the identity kernel.  Weights
    are exp(-(dx^2 + dy^2) / (2 sigma^2)) over the centered grid; the
    symmetric grid construction makes the 8-fold symmetry exact in floats.
    """
    r = size // 2
    d2 = np.arange(-r, r + 1, dtype=np.float64) ** 2
    g2 = d2[:, None] + d2[None, :]
    s = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    safe = np.maximum(s, _DELTA_SIGMA / 8.0)
    w = np.exp(-g2[None, :, :] / (2.0 * safe * safe)[:, None, None])
    delta = s < _DELTA_SIGMA
    if delta.any():
        w[delta] = 0.0
        w[delta, r, r] = 1.0
    w /= w.sum(axis=(1, 2), keepdims=True)
    return w


def gaussian_kernel(sigma: float, size: int) -> Kernel:
    """Single normalized isotropic Gaussian kernel (delta when sigma ~ 0)."""
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return Kernel(_kernel_bank(np.array([sigma]), size)[0])


def _gather_rows(padded, idx, cols, size, row0, row1, out):
    """Accumulate the per-pixel kernel dot product for rows [row0, row1).

    padded is the replicate-padded planar (C, H+2r, W+2r) image, idx the
    per-pixel row into the kernel bank, cols the bank transposed to
    (size*size, n_kernels).  The offset loop order is fixed, so tiled
    execution is bitwise equal to a single pass.
    """
    ti = idx[row0:row1]
    width = out.shape[2]
    acc = np.zeros((out.shape[0], row1 - row0, width), out.dtype)
    w = np.empty(ti.shape, out.dtype)
    tmp = np.empty(w.shape, out.dtype)
    q = 0
    for dy in range(size):
        for dx in range(size):
            np.take(cols[q], ti, out=w)
            for c in range(out.shape[0]):
                view = padded[c, row0 + dy : row1 + dy, dx : dx + width]
                np.multiply(view, w, out=tmp)
                np.add(acc[c], tmp, out=acc[c])
            q += 1
    out[:, row0:row1] = acc


def _gather_rows_lerp(padded, i0, frac, cols, dcols, size, row0, row1, out):
    """Like _gather_rows, but blends each pixel's two bracketing kernels.

    cols holds the bank at the grid points, dcols the forward differences;
    the per-pixel weight is cols[i0] + frac * dcols[i0].
    """
    ti = i0[row0:row1]
    tf = frac[row0:row1]
    width = out.shape[2]
    acc = np.zeros((out.shape[0], row1 - row0, width), out.dtype)
    w = np.empty(ti.shape, out.dtype)
    dw = np.empty(ti.shape, out.dtype)
    tmp = np.empty(w.shape, out.dtype)
    q = 0
    for dy in range(size):
        for dx in range(size):
            np.take(cols[q], ti, out=w)
            np.take(dcols[q], ti, out=dw)
            dw *= tf
            w += dw
            for c in range(out.shape[0]):
                view = padded[c, row0 + dy : row1 + dy, dx : dx + width]
                np.multiply(view, w, out=tmp)
                np.add(acc[c], tmp, out=acc[c])
            q += 1
    out[:, row0:row1] = acc


def _stream_rows(padded, sig, size, row0, row1, out):
    """Exact-mode accumulation without a kernel bank.

    Per offset the unnormalized Gaussian weight is evaluated for every
    pixel's own sigma; the running weight total normalizes at the end,
    which matches the per-kernel normalization to roundoff.
    """
    r = size // 2
    d2 = np.arange(-r, r + 1, dtype=np.float64) ** 2
    s = np.maximum(sig[row0:row1].astype(np.float64), _DELTA_SIGMA / 8.0)
    inv2s2 = -1.0 / (2.0 * s * s)
    width = out.shape[2]
    acc = np.zeros((out.shape[0], row1 - row0, width), out.dtype)
    tot = np.zeros(s.shape, dtype=np.float64)
    w = np.empty_like(tot)
    tmp = np.empty_like(w)
    for dy in range(size):
        for dx in range(size):
            np.multiply(inv2s2, d2[dy] + d2[dx], out=w)
            np.exp(w, out=w)
            for c in range(out.shape[0]):
                view = padded[c, row0 + dy : row1 + dy, dx : dx + width]
                np.multiply(view, w, out=tmp)
                np.add(acc[c], tmp, out=acc[c])
            np.add(tot, w, out=tot)
    out[:, row0:row1] = acc / tot[None, :, :]


def variant_blur(img: ImagePlane, blur: BlurMap, opts: DegradeOpts, threads: int = 1) -> ImagePlane:
    """Blur an image with the per-pixel kernel named by its blur map."""
    if (img.height, img.width) != (blur.height, blur.width):
        raise ValueError(
            f"image {img.height}x{img.width} and blur map "
            f"{blur.height}x{blur.width} sizes differ"
        )
    size = opts.kernel_size
    r = size // 2
    h, w = img.height, img.width
    sig = blur.data

    stream = False
    if opts.mode == "lut":
        dtype = np.float32
        grid = np.linspace(0.0, blur.sigma_max, opts.lut_bins)
        step = grid[1] - grid[0]
        if step > 0.0:
            pos = np.clip(sig.astype(np.float64) / step, 0.0, opts.lut_bins - 1)
        else:
            pos = np.zeros((h, w), dtype=np.float64)
        i0 = np.minimum(np.floor(pos).astype(np.intp), opts.lut_bins - 2)
        frac = (pos - i0).astype(dtype)
        bank = _kernel_bank(grid, size)
        cols = np.ascontiguousarray(bank.reshape(bank.shape[0], -1).T.astype(dtype))
        dcols = np.ascontiguousarray(
            np.diff(bank.reshape(bank.shape[0], -1), axis=0).T.astype(dtype)
        )
    else:
        dtype = img.data.dtype
        uniq, inv = np.unique(sig, return_inverse=True)
        if uniq.size <= _EXACT_TABLE_CAP:
            idx = inv.reshape(h, w).astype(np.intp)
            bank = _kernel_bank(uniq, size)
            cols = np.ascontiguousarray(bank.reshape(bank.shape[0], -1).T.astype(dtype))
        else:
            stream = True

    planar = np.ascontiguousarray(img.data.transpose(2, 0, 1).astype(dtype, copy=False))
    padded = np.pad(planar, ((0, 0), (r, r), (r, r)), mode="edge")
    out = np.empty_like(planar)

    if stream:
        run = lambda a, b: _stream_rows(padded, sig, size, a, b, out)
    elif opts.mode == "lut":
        run = lambda a, b: _gather_rows_lerp(padded, i0, frac, cols, dcols, size, a, b, out)
    else:
        run = lambda a, b: _gather_rows(padded, idx, cols, size, a, b, out)

    n_tiles = max(1, min(int(threads), h))
    if n_tiles == 1:
        run(0, h)
    else:
        bounds = np.linspace(0, h, n_tiles + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_tiles) as pool:
            futs = [pool.submit(run, bounds[i], bounds[i + 1]) for i in range(n_tiles)]
            for f in futs:
                f.result()

    res = np.ascontiguousarray(out.transpose(1, 2, 0)).astype(img.data.dtype, copy=False)
    np.clip(res, 0.0, 1.0, out=res)
    if opts.mode == "lut" and sig.min() == 0.0:
        # float32 arithmetic would otherwise perturb the identity pixels
        np.copyto(res, img.data, where=(sig == 0.0)[:, :, None])
    return ImagePlane(res)


def decimate(img: ImagePlane, s: int, offset: int = 0) -> ImagePlane:
    """Keep every s-th pixel starting at (offset, offset)."""
    if s < 1:
        raise ValueError("scale factor must be >= 1")
    if offset >= s or offset < 0:
        raise ValueError(f"offset {offset} must lie in [0, {s})")
    nh = (img.height - offset) // s
    nw = (img.width - offset) // s
    data = img.data[offset : offset + nh * s : s, offset : offset + nw * s : s]
    return ImagePlane(np.ascontiguousarray(data))


def degrade(
    img: ImagePlane,
    blur: BlurMap,
    opts: DegradeOpts,
    seed: int = 0,
    threads: int = 1,
) -> ImagePlane:
    """Full degradation: variant blur, decimation, optional Gaussian noise.

    Noise is drawn from a generator seeded with `seed`, then the result is
    clamped back to [0, 1].  With noise_sigma == 0 the output is exactly
    decimate(variant_blur(img)).
    """
    lr = decimate(variant_blur(img, blur, opts, threads=threads), opts.scale_factor, opts.decimation_offset)
    if opts.noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        noisy = lr.data + rng.normal(0.0, opts.noise_sigma, size=lr.data.shape)
        return ImagePlane(np.clip(noisy, 0.0, 1.0))
    return lr
