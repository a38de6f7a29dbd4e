"""Grouping interactive attention: a two-input, two-output fusion block.

Two feature maps exchange information through three paths:

* spatial stream: each input is convolved, split into windows, and the
  per-pixel feature groups of the two inputs form a Gram matrix per
  window; a 1x1 conv of that interaction map gives a cross-input
  attention map M_a, blended with a self-attention map M_o as
  F_w * (M_o + alpha * M_a), then windows are restored and smoothed.
* channel stream: global average pooled vectors from both inputs are
  grouped, their Gram matrix is flattened and mapped to a cross-input
  channel attention A_a, blended as F * (A_o + beta * A_a).
* flow alignment: the second input is bilinearly upsampled to the first
  input's grid and warped by a predicted 2-channel flow before the
  streams run.

alpha, beta, and the flow conv initialize to zero, so a fresh block is
exactly decoupled: each output depends only on its own input, and flow
warping reduces to plain bilinear upsampling bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ParamSet,
    Tensor,
    add,
    affine,
    bilinear_upsample,
    concat,
    conv2d,
    crop2d,
    fan_in_uniform,
    global_avg_pool,
    grid_sample_flow,
    matmul,
    mul,
    pad2d_replicate,
    reshape,
    sigmoid,
    transpose,
)


@dataclass(frozen=True)
class GiaConfig:
    """Block hyperparameters; channels must split evenly into groups."""

    channels: int
    window: int = 8
    channel_groups: int = 8
    use_flow_align: bool = True
    attn_squash: str = "none"

    def __post_init__(self):
        if self.channels < 1 or self.window < 1 or self.channel_groups < 1:
            raise ValueError("channels, window, channel_groups must be positive")
        if self.channels % self.channel_groups != 0:
            raise ValueError(
                f"channels {self.channels} not divisible by channel_groups {self.channel_groups}"
            )
        if self.attn_squash not in ("none", "sigmoid"):
            raise ValueError(f"attn_squash must be 'none' or 'sigmoid', got {self.attn_squash!r}")


def _conv_rep(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 conv with replicate padding, so constant maps stay constant."""
    p = w.data.shape[2] // 2
    if p:
        x = pad2d_replicate(x, p, p, p, p)
    return conv2d(x, w, b)


def feature_group_interaction(g1: Tensor, g2: Tensor) -> Tensor:
    """Gram matrix G1 @ G2^T of two (..., N, D) grouped feature sets."""
    if g1.data.shape != g2.data.shape:
        raise ValueError(f"group shapes differ: {g1.data.shape} vs {g2.data.shape}")
    if g1.data.ndim < 2:
        raise ValueError("grouped features need at least (N, D) dims")
    axes = list(range(g2.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return matmul(g1, transpose(g2, axes))


def window_partition(x: Tensor, window: int) -> tuple[Tensor, tuple]:
    """(N,C,H,W) -> (N*nh*nw, C, window, window) tiles, row-major order.

    Dims must already be multiples of the window; pad_to_window handles
    that.  Returns the tile tensor and the geometry needed to restore.
    """
    n, c, h, w = x.data.shape
    if h % window or w % window:
        raise ValueError(f"dims {h}x{w} not multiples of window {window}")
    nh, nw = h // window, w // window
    t = reshape(x, (n, c, nh, window, nw, window))
    t = transpose(t, (0, 2, 4, 1, 3, 5))
    return reshape(t, (n * nh * nw, c, window, window)), (n, c, nh, nw)


def window_restore(tiles: Tensor, window: int, geom: tuple) -> Tensor:
    """Exact inverse of window_partition."""
    n, c, nh, nw = geom
    t = reshape(tiles, (n, nh, nw, c, window, window))
    t = transpose(t, (0, 3, 1, 4, 2, 5))
    return reshape(t, (n, c, nh * window, nw * window))


def pad_to_window(x: Tensor, window: int) -> tuple[Tensor, tuple[int, int]]:
    """Replicate-pad bottom/right so both spatial dims divide the window."""
    h, w = x.data.shape[-2:]
    pb = (-h) % window
    pr = (-w) % window
    if pb or pr:
        x = pad2d_replicate(x, 0, pb, 0, pr)
    return x, (pb, pr)


class Gia:
    """One attention block; parameters live in a shared ParamSet under a prefix.

    The two inputs have untied weights (suffixes 1 and 2); alpha, beta,
    and the flow conv are shared.  Construction order fixes the RNG draw
    order, so a given seed always produces the same initialization.
    """

    def __init__(self, ps: ParamSet, prefix: str, cfg: GiaConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.prefix = prefix
        c = cfg.channels
        n_spatial = cfg.window * cfg.window
        nc = cfg.channel_groups

        def conv_p(name, cout, cin, k, zero=False):
            wname, bname = f"{prefix}.{name}.w", f"{prefix}.{name}.b"
            if zero:
                wdat = np.zeros((cout, cin, k, k), dtype)
            else:
                wdat = fan_in_uniform(rng, (cout, cin, k, k), cin * k * k, dtype)
            return ps.add(wname, wdat), ps.add(bname, np.zeros(cout, dtype))

        def aff_p(name, din, dout):
            w = ps.add(f"{prefix}.{name}.w", fan_in_uniform(rng, (din, dout), din, dtype))
            b = ps.add(f"{prefix}.{name}.b", np.zeros(dout, dtype))
            return w, b

        self.pre = [conv_p(f"s_pre{j}", c, c, 3) for j in (1, 2)]
        self.group = [conv_p(f"s_group{j}", c, c, 1) for j in (1, 2)]
        self.m_o = [conv_p(f"s_mo{j}", 1, c, 1) for j in (1, 2)]
        self.m_a = [conv_p(f"s_ma{j}", 1, n_spatial, 1) for j in (1, 2)]
        self.smooth = [conv_p(f"s_smooth{j}", c, c, 3) for j in (1, 2)]
        self.mlp_o = [aff_p(f"c_mlp_o{j}", c, c) for j in (1, 2)]
        self.mlp_a = [aff_p(f"c_mlp_a{j}", nc * nc, c) for j in (1, 2)]
        self.alpha = ps.add(f"{prefix}.alpha", np.zeros((), dtype))
        self.beta = ps.add(f"{prefix}.beta", np.zeros((), dtype))
        if cfg.use_flow_align:
            # zero init keeps a fresh block in the decoupled regime and
            # makes warping equal plain bilinear upsampling bitwise
            self.flow = conv_p("flow", 2, 2 * c, 3, zero=True)

    def _squash(self, gate: Tensor) -> Tensor:
        return sigmoid(gate) if self.cfg.attn_squash == "sigmoid" else gate

    def flow_align(self, f_hi: Tensor, f_lo: Tensor) -> Tensor:
        """Upsample f_lo to f_hi's grid and warp it by a predicted flow."""
        if not self.cfg.use_flow_align:
            raise ValueError("flow alignment disabled in this block's config")
        hh, hw = f_hi.data.shape[-2:]
        lh, lw = f_lo.data.shape[-2:]
        if lh > hh or lw > hw:
            raise ValueError(f"second input {lh}x{lw} larger than first {hh}x{hw}")
        up = bilinear_upsample(f_lo, hh, hw)
        flow = _conv_rep(concat([f_hi, up], axis=1), self.flow[0], self.flow[1])
        return grid_sample_flow(up, flow)

    def spatial_interaction(self, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        """Window-wise Gram attention; inputs must share one grid."""
        if f1.data.shape != f2.data.shape:
            raise ValueError(f"spatial stream needs equal shapes: {f1.data.shape} vs {f2.data.shape}")
        ws = self.cfg.window
        h, w = f1.data.shape[-2:]
        outs = []
        tiles = []
        geoms = []
        pads = []
        for j, f in enumerate((f1, f2)):
            p = _conv_rep(f, self.pre[j][0], self.pre[j][1])
            p, pad = pad_to_window(p, ws)
            t, geom = window_partition(p, ws)
            tiles.append(t)
            geoms.append(geom)
            pads.append(pad)
        groups = []
        for j, t in enumerate(tiles):
            g = conv2d(t, self.group[j][0], self.group[j][1])
            b, c = g.data.shape[0], g.data.shape[1]
            # pixel groups: N = window^2 rows of length D = C
            groups.append(transpose(reshape(g, (b, c, ws * ws)), (0, 2, 1)))
        fuse = feature_group_interaction(groups[0], groups[1])  # (B, N, N)
        b = fuse.data.shape[0]
        views = [fuse, transpose(fuse, (0, 2, 1))]
        for j in range(2):
            # row r of the (transposed) Gram is pixel r's N interaction channels
            amap = transpose(reshape(views[j], (b, ws, ws, ws * ws)), (0, 3, 1, 2))
            m_a = conv2d(amap, self.m_a[j][0], self.m_a[j][1])
            m_o = conv2d(tiles[j], self.m_o[j][0], self.m_o[j][1])
            gate = self._squash(add(m_o, mul(self.alpha, m_a)))
            gated = mul(tiles[j], gate)
            restored = window_restore(gated, ws, geoms[j])
            pb, pr = pads[j]
            if pb or pr:
                restored = crop2d(restored, 0, pb, 0, pr)
            outs.append(_conv_rep(restored, self.smooth[j][0], self.smooth[j][1]))
        return outs[0], outs[1]

    def channel_interaction(self, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        """Grouped Gram attention over pooled channel descriptors."""
        c = f1.data.shape[1]
        if f2.data.shape[1] != c:
            raise ValueError(f"channel counts differ: {c} vs {f2.data.shape[1]}")
        if c != self.cfg.channels:
            raise ValueError(f"block built for {self.cfg.channels} channels, got {c}")
        nc = self.cfg.channel_groups
        n = f1.data.shape[0]
        a_o = []
        grouped = []
        for j, f in enumerate((f1, f2)):
            vec = affine(global_avg_pool(f), self.mlp_o[j][0], self.mlp_o[j][1])
            a_o.append(vec)
            grouped.append(reshape(vec, (n, nc, c // nc)))
        fuse = feature_group_interaction(grouped[0], grouped[1])
        # input 1 reads the Gram rows, input 2 the transposed rows, the
        # same per-input view convention as the spatial stream
        flats = [
            reshape(fuse, (n, nc * nc)),
            reshape(transpose(fuse, (0, 2, 1)), (n, nc * nc)),
        ]
        outs = []
        for j, f in enumerate((f1, f2)):
            a_a = affine(flats[j], self.mlp_a[j][0], self.mlp_a[j][1])
            vec = self._squash(add(a_o[j], mul(self.beta, a_a)))
            outs.append(mul(f, reshape(vec, (n, c, 1, 1))))
        return outs[0], outs[1]

    def forward(self, f1: Tensor, f2: Tensor) -> tuple[Tensor, Tensor]:
        """Align, run both streams, and sum them per input."""
        if f1.data.shape[1] != self.cfg.channels or f2.data.shape[1] != self.cfg.channels:
            raise ValueError(
                f"block built for {self.cfg.channels} channels, got "
                f"{f1.data.shape[1]} and {f2.data.shape[1]}"
            )
        if self.cfg.use_flow_align:
            f2 = self.flow_align(f1, f2)
        elif f1.data.shape != f2.data.shape:
            raise ValueError("without flow alignment both inputs must share a shape")
        s1, s2 = self.spatial_interaction(f1, f2)
        c1, c2 = self.channel_interaction(f1, f2)
        return add(s1, c1), add(s2, c2)
