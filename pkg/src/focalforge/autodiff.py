"""Minimal reverse-mode automatic differentiation on numpy arrays.

Deliberately scope-limited: exactly the operator set the estimation
network needs, so finite-difference checks can cover every op.  A Tensor
wraps an ndarray plus a gradient slot and a backward closure; ops build
an acyclic graph, and backward() walks it once in reverse topological
order, accumulating gradients additively across fan-out.

Training runs float32; gradcheck rebuilds the same graphs at float64,
where central differences resolve ~1e-10 relative error.  All ops are
single-threaded deterministic: same inputs, same bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Tensor:
    """Graph node: values, lazily created gradient, backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g):
        """Add a gradient contribution (used by op backward closures)."""
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed=None):
        """Reverse-mode sweep from this node.

        Without a seed the node must be scalar (a loss); the seed is then
        1.  Gradients accumulate into every reachable requires_grad node.

        The sweep consumes the graph: each interior node's gradient,
        closure and parent links are dropped once its contribution has
        been pushed, so activation memory is freed eagerly instead of
        waiting on the cycle collector.  Leaf gradients survive.
        """
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate(np.asarray(seed, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None:
                if node.grad is not None:
                    node._backward()
                node.grad = None
                node._backward = None
                node._parents = ()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'none'})"


class Parameter(Tensor):
    """Trainable leaf tensor with a unique name within its ParamSet."""

    __slots__ = ("name",)

    def __init__(self, data, name):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name


class ParamSet:
    """Ordered, uniquely named parameter collection for one model."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, data) -> Parameter:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(data, name)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for k, p in self._params.items():
            if p.data.shape != state[k].shape:
                raise ValueError(f"shape mismatch for {k}: {p.data.shape} vs {state[k].shape}")
            p.data = state[k].astype(p.data.dtype, copy=True)

    def astype(self, dtype):
        """Cast all parameter values in place (e.g. float64 for gradcheck)."""
        for p in self._params.values():
            p.data = p.data.astype(dtype)
        return self


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    a = np.asarray(data)
    if dtype is not None:
        a = a.astype(dtype)
    return Tensor(a, requires_grad=requires_grad)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the conv/affine weight init."""
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


_grad_enabled = True


class no_grad:
    """Context manager suppressing graph construction, for inference."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _node(data, parents, backward) -> Tensor:
    req = _grad_enabled and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=parents if req else (),
                  backward=backward if req else None)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data
    out = _node(out_data, (a, b), None)

    def bw():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad, b.data.shape))

    out._backward = bw if out.requires_grad else None
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data
    out = _node(out_data, (a, b), None)

    def bw():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    out._backward = bw if out.requires_grad else None
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = _node(np.where(mask, x.data, 0), (x,), None)

    def bw():
        x.accumulate(out.grad * mask)

    out._backward = bw if out.requires_grad else None
    return out


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    s = np.empty_like(d)
    pos = d >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    s[~pos] = e / (1.0 + e)
    out = _node(s, (x,), None)

    def bw():
        x.accumulate(out.grad * s * (1.0 - s))

    out._backward = bw if out.requires_grad else None
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = _node(np.reshape(x.data, shape), (x,), None)

    def bw():
        x.accumulate(out.grad.reshape(x.data.shape))

    out._backward = bw if out.requires_grad else None
    return out


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = _node(np.ascontiguousarray(x.data.transpose(axes)), (x,), None)

    def bw():
        x.accumulate(out.grad.transpose(inv))

    out._backward = bw if out.requires_grad else None
    return out


def concat(tensors, axis: int) -> Tensor:
    datas = [t.data for t in tensors]
    out = _node(np.concatenate(datas, axis=axis), tuple(tensors), None)
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def bw():
        pieces = np.split(out.grad, splits, axis=axis)
        for t, g in zip(tensors, pieces):
            if t.requires_grad:
                t.accumulate(g)

    out._backward = bw if out.requires_grad else None
    return out


def crop2d(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Trim the trailing two axes; backward zero-pads back."""
    h, w = x.data.shape[-2:]
    out = _node(
        np.ascontiguousarray(x.data[..., top : h - bottom, left : w - right]),
        (x,),
        None,
    )

    def bw():
        g = np.zeros_like(x.data)
        g[..., top : h - bottom, left : w - right] = out.grad
        x.accumulate(g)

    out._backward = bw if out.requires_grad else None
    return out


def pad2d_replicate(x: Tensor, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Edge-replicate padding on the trailing two axes.

    Backward folds the padded borders onto the edge rows/columns (each
    padded cell reads exactly one source cell).
    """
    widths = [(0, 0)] * (x.data.ndim - 2) + [(top, bottom), (left, right)]
    out = _node(np.pad(x.data, widths, mode="edge"), (x,), None)
    h, w = x.data.shape[-2:]

    def bw():
        g = out.grad
        gr = np.ascontiguousarray(g[..., top : top + h, :])
        if top:
            gr[..., 0, :] += g[..., :top, :].sum(axis=-2)
        if bottom:
            gr[..., h - 1, :] += g[..., top + h :, :].sum(axis=-2)
        gx = np.ascontiguousarray(gr[..., :, left : left + w])
        if left:
            gx[..., :, 0] += gr[..., :, :left].sum(axis=-1)
        if right:
            gx[..., :, w - 1] += gr[..., :, left + w :].sum(axis=-1)
        x.accumulate(gx)

    out._backward = bw if out.requires_grad else None
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading dims broadcast."""
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul inner dims differ: {a.data.shape} x {b.data.shape}")
    out = _node(np.matmul(a.data, b.data), (a, b), None)

    def bw():
        if a.requires_grad:
            ga = np.matmul(out.grad, b.data.swapaxes(-1, -2))
            a.accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), out.grad)
            b.accumulate(_unbroadcast(gb, b.data.shape))

    out._backward = bw if out.requires_grad else None
    return out


def affine(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b): the dense layer over trailing feature dims."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of (N,C,H,W) with (K,C,k,k), zero padding.

    im2col + one BLAS matmul forward; backward scatters column gradients
    back through the k*k kernel offsets.
    """
    n, c, h, w_in = x.data.shape
    k_out, c_w, kh, kw = w.data.shape
    if c != c_w:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {c_w}")
    if kh != kw:
        raise ValueError("conv2d kernels must be square")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c * kh * kw
    )
    wm = w.data.reshape(k_out, c * kh * kw)
    out_mat = cols @ wm.T
    if b is not None:
        out_mat += b.data
    out_data = out_mat.reshape(n, ho, wo, k_out).transpose(0, 3, 1, 2)
    parents = (x, w) if b is None else (x, w, b)
    out = _node(np.ascontiguousarray(out_data), parents, None)
    if not out.requires_grad:
        return out

    def bw():
        go = np.ascontiguousarray(out.grad.transpose(0, 2, 3, 1)).reshape(-1, k_out)
        if b is not None and b.requires_grad:
            b.accumulate(go.sum(axis=0))
        if w.requires_grad:
            w.accumulate((go.T @ cols).reshape(w.data.shape))
        if x.requires_grad:
            # (n, c, kh, kw, ho, wo) contiguous so each offset slab below
            # adds at memcpy speed instead of gather-striding
            gcols = np.ascontiguousarray(
                (go @ wm).reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
            )
            gxp = np.zeros((n, c, hp, wp), dtype=x.data.dtype)
            for di in range(kh):
                for dj in range(kw):
                    gxp[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride] += gcols[
                        :, :, di, dj
                    ]
            x.accumulate(gxp[:, :, pad : pad + h, pad : pad + w_in] if pad else gxp)

    out._backward = bw
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N,C) spatial mean."""
    n, c, h, w = x.data.shape
    out = _node(x.data.mean(axis=(2, 3)), (x,), None)

    def bw():
        g = np.broadcast_to(out.grad[:, :, None, None] / (h * w), x.data.shape)
        x.accumulate(g)

    out._backward = bw if out.requires_grad else None
    return out


def _bilinear_coords(in_size: int, out_size: int, dtype) -> np.ndarray:
    """Half-pixel source coordinates for resizing in_size -> out_size."""
    scale = in_size / out_size
    return ((np.arange(out_size, dtype=dtype) + dtype(0.5)) * dtype(scale)) - dtype(0.5)


def _corners(coords: np.ndarray, size: int, dt) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped floor/ceil indices and fractional weight along one axis."""
    cs = np.clip(coords, 0, size - 1)
    i0 = np.minimum(np.floor(cs).astype(np.intp), size - 1)
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, (cs - i0).astype(dt)


def _resize_matrix(coords1d: np.ndarray, size: int, dt) -> np.ndarray:
    """Dense (out, in) interpolation matrix for one separable axis."""
    i0, i1, fr = _corners(coords1d, size, dt)
    m = np.zeros((coords1d.size, size), dtype=dt)
    rows = np.arange(coords1d.size)
    np.add.at(m, (rows, i0), 1 - fr)
    np.add.at(m, (rows, i1), fr)
    return m


def _bilinear_sample(
    x: Tensor,
    ys_raw: np.ndarray,
    xs_raw: np.ndarray,
    flow: Tensor | None,
    sep: tuple[np.ndarray, np.ndarray] | None = None,
) -> Tensor:
    """Shared bilinear gather; ys/xs are (N,Ho,Wo) source coordinates.

    Border clamping happens here, and the clamp masks zero the flow
    gradient where a coordinate left the valid range.  When the grid is
    separable (plain resize), callers pass the 1-D axis coordinates in
    `sep` and the input gradient becomes two small matmuls instead of a
    four-corner scatter.
    """
    n, c, h, w = x.data.shape
    dt = x.data.dtype
    y_in = (ys_raw >= 0) & (ys_raw <= h - 1)
    x_in = (xs_raw >= 0) & (xs_raw <= w - 1)
    y0, y1, wy = _corners(ys_raw, h, dt)
    x0, x1, wx = _corners(xs_raw, w, dt)

    xt = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1))  # (N,H,W,C)
    nn = np.arange(n)[:, None, None]
    v00 = xt[nn, y0, x0]
    v01 = xt[nn, y0, x1]
    v10 = xt[nn, y1, x0]
    v11 = xt[nn, y1, x1]
    w00 = ((1 - wy) * (1 - wx))[..., None]
    w01 = ((1 - wy) * wx)[..., None]
    w10 = (wy * (1 - wx))[..., None]
    w11 = (wy * wx)[..., None]
    out_nhwc = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    out_data = np.ascontiguousarray(out_nhwc.transpose(0, 3, 1, 2))
    parents = (x,) if flow is None else (x, flow)
    out = _node(out_data, parents, None)
    if not out.requires_grad:
        return out
    need_flow = flow is not None and flow.requires_grad
    if need_flow:
        # keep only the two derivative fields, not all four corner gathers
        dy_arr = (1 - wx)[..., None] * (v10 - v00) + wx[..., None] * (v11 - v01)
        dx_arr = (1 - wy)[..., None] * (v01 - v00) + wy[..., None] * (v11 - v10)
    del v00, v01, v10, v11, out_nhwc
    if x.requires_grad and sep is not None and flow is None:
        r_y = _resize_matrix(sep[0], h, dt)
        r_x = _resize_matrix(sep[1], w, dt)
    else:
        r_y = None

    def bw():
        g = np.ascontiguousarray(out.grad.transpose(0, 2, 3, 1))  # (N,Ho,Wo,C)
        if x.requires_grad:
            if r_y is not None:
                gxt = np.einsum("ih,nijc,jw->nhwc", r_y, g, r_x, optimize=True)
            else:
                gxt = np.zeros((n, h, w, g.shape[-1]), dtype=g.dtype)
                np.add.at(gxt, (nn, y0, x0), w00 * g)
                np.add.at(gxt, (nn, y0, x1), w01 * g)
                np.add.at(gxt, (nn, y1, x0), w10 * g)
                np.add.at(gxt, (nn, y1, x1), w11 * g)
            x.accumulate(gxt.transpose(0, 3, 1, 2))
        if need_flow:
            gy = (g * dy_arr).sum(axis=-1) * y_in
            gx = (g * dx_arr).sum(axis=-1) * x_in
            flow.accumulate(np.stack([gx, gy], axis=1))

    out._backward = bw
    return out


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Half-pixel bilinear resize of (N,C,H,W) to (N,C,out_h,out_w)."""
    n = x.data.shape[0]
    dt = x.data.dtype.type
    ys1 = _bilinear_coords(x.data.shape[2], out_h, dt)
    xs1 = _bilinear_coords(x.data.shape[3], out_w, dt)
    ys = np.broadcast_to(ys1[None, :, None], (n, out_h, out_w))
    xs = np.broadcast_to(xs1[None, None, :], (n, out_h, out_w))
    return _bilinear_sample(x, ys, xs, None, sep=(ys1, xs1))


def grid_sample_flow(x: Tensor, flow: Tensor) -> Tensor:
    """Warp x by per-pixel (dx, dy) offsets in input-pixel units.

    The output grid is the flow's grid: each output pixel samples the
    bilinearly mapped source position plus its flow offset, with border
    clamping.  Zero flow at equal sizes is the identity; zero flow at a
    larger size reproduces bilinear_upsample bitwise (same coordinate
    helper, and adding 0.0 leaves every coordinate's bits unchanged).
    """
    n, two, out_h, out_w = flow.data.shape
    if two != 2:
        raise ValueError(f"flow must have 2 channels (dx, dy), got {two}")
    dt = x.data.dtype.type
    ys = _bilinear_coords(x.data.shape[2], out_h, dt)
    xs = _bilinear_coords(x.data.shape[3], out_w, dt)
    ys = np.broadcast_to(ys[None, :, None], (n, out_h, out_w)) + flow.data[:, 1]
    xs = np.broadcast_to(xs[None, None, :], (n, out_h, out_w)) + flow.data[:, 0]
    return _bilinear_sample(x, ys, xs, flow)


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error over all elements; target is data, not a node."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.data.dtype)
    diff = pred.data - t
    out = _node(np.array(np.abs(diff).mean(), dtype=pred.data.dtype), (pred,), None)

    def bw():
        g = np.sign(diff) / diff.size
        pred.accumulate(out.grad * g)

    out._backward = bw if out.requires_grad else None
    return out


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray, ignore_value: int = 255) -> Tensor:
    """Mean CE of (N,C,H,W) logits against (N,H,W) integer labels.

    Pixels whose label equals ignore_value contribute nothing; the mean
    divides by the count of valid pixels (zero valid pixels -> loss 0).
    """
    lab = np.asarray(labels)
    n, c, h, w = logits.data.shape
    if lab.shape != (n, h, w):
        raise ValueError(f"labels {lab.shape} do not match logits {logits.data.shape}")
    valid = lab != ignore_value
    count = int(valid.sum())
    safe_lab = np.where(valid, lab, 0).astype(np.intp)
    m = logits.data.max(axis=1, keepdims=True)
    ex = np.exp(logits.data - m)
    sum_ex = ex.sum(axis=1, keepdims=True)
    log_probs = logits.data - m - np.log(sum_ex)
    nn = np.arange(n)[:, None, None]
    hh = np.arange(h)[None, :, None]
    ww = np.arange(w)[None, None, :]
    picked = log_probs[nn, safe_lab, hh, ww]
    if count == 0:
        loss = np.array(0.0, dtype=logits.data.dtype)
    else:
        loss = np.array(-(picked * valid).sum() / count, dtype=logits.data.dtype)
    out = _node(loss, (logits,), None)

    def bw():
        if count == 0:
            return
        softmax = ex / sum_ex
        grad = softmax.copy()
        onehot_idx = (nn, safe_lab, hh, ww)
        grad[onehot_idx] -= 1.0
        grad *= (valid / count)[:, None, :, :]
        logits.accumulate(out.grad * grad)

    out._backward = bw if out.requires_grad else None
    return out


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name, plus step."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: list[Parameter],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.99,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter values."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, g in zip(params, grads):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter {p.name} {p.data.shape}")
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data, dtype=np.float64)
            v = np.zeros_like(p.data, dtype=np.float64)
        else:
            v = state.v[p.name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[p.name] = m
        state.v[p.name] = v
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data = p.data - (lr * update).astype(p.data.dtype)
    return state


def cosine_warmup_lr(epoch: int, total: int = 700, warmup: int = 10, base: float = 1e-4) -> float:
    """Linear ramp 0 -> base over warmup, then cosine decay to ~0."""
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside [0, {total})")
    if epoch < warmup:
        return base * epoch / warmup
    span = max(1, total - warmup)
    return base * 0.5 * (1.0 + np.cos(np.pi * (epoch - warmup) / span))


def gradcheck(
    fn,
    inputs: list[Tensor],
    sample: int | None = None,
    seed: int = 0,
    h: float = 1e-6,
    tol: float = 1e-4,
) -> float:
    """Max central-difference error of fn's gradient over the inputs.

    fn must rebuild its graph from the inputs on every call and return a
    scalar Tensor.  Inputs should be float64.  With `sample` set, only
    that many seeded-random elements per tensor are probed, which keeps
    whole-model checks fast while still touching every tensor.

    The error measure |analytic - numeric| / max(1, |analytic| + |numeric|)
    is absolute near zero and relative for large gradients.

    A probe that shifts a whole feature-map channel almost always lands
    some relu or absolute-value argument inside the +-h window, which
    corrupts the central difference by the crossing element's share.
    When the central check misses `tol`, the probe therefore falls back
    to the subgradient bracket: the two one-sided slopes must enclose
    the analytic value.  A genuinely wrong gradient still fails, because
    the bracket is only ever as wide as the kink jump itself.
    """
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)  # reshape(-1) below must alias
        t.grad = None
    out = fn(*inputs)
    out.backward()
    f0 = float(out.data)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        if t.grad is None:
            raise ValueError("an input marked requires_grad received no gradient")
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        n = flat.size
        if sample is None or n <= sample:
            idxs = range(n)
        else:
            idxs = rng.choice(n, size=sample, replace=False)
        for i in idxs:
            old = flat[i]
            with no_grad():  # probes need values only, not another graph
                flat[i] = old + h
                fp = float(fn(*inputs).data)
                flat[i] = old - h
                fm = float(fn(*inputs).data)
            flat[i] = old
            numeric = (fp - fm) / (2.0 * h)
            analytic = float(gflat[i])
            scale = max(1.0, abs(analytic) + abs(numeric))
            err = abs(analytic - numeric) / scale
            if err > tol:
                lo = min((fp - f0) / h, (f0 - fm) / h)
                hi = max((fp - f0) / h, (f0 - fm) / h)
                err = max(lo - analytic, analytic - hi, 0.0) / scale
            if err > worst:
                worst = err
    return worst


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict, opt_state: AdamState | None = None):
    """npz of named arrays plus a JSON sidecar (same stem, .json).

    Optimizer moments are stored under reserved 'adam.m.' / 'adam.v.'
    prefixes; meta must be JSON-serializable.
    """
    path = Path(path)
    arrays = dict(params)
    side = dict(meta)
    if opt_state is not None:
        for k, v in opt_state.m.items():
            arrays[f"adam.m.{k}"] = v
        for k, v in opt_state.v.items():
            arrays[f"adam.v.{k}"] = v
        side["adam_t"] = opt_state.t
    np.savez(path, **arrays)
    real = path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")
    real.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, AdamState | None]:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(path.suffix + ".npz")
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(path.with_suffix(".json").read_text())
    params = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    opt = None
    if "adam_t" in meta:
        opt = AdamState(
            m={k[len("adam.m."):]: v for k, v in arrays.items() if k.startswith("adam.m.")},
            v={k[len("adam.v."):]: v for k, v in arrays.items() if k.startswith("adam.v.")},
            t=int(meta["adam_t"]),
        )
    return params, meta, opt
