"""Attention block tests: wiring symmetry, decoupling, step-wise oracles.

Oracles below are plain numpy/scipy reimplementations that read the
block's weights but never call its graph ops.  Blocks are built at
float64 so oracle comparisons can be pinned at 1e-10.
"""

import numpy as np
import pytest
from scipy.signal import correlate2d

from focalforge.autodiff import ParamSet, add, gradcheck, l1_loss, tensor
from focalforge.gia import (
    Gia,
    GiaConfig,
    feature_group_interaction,
    pad_to_window,
    window_partition,
    window_restore,
)

C = 8  # divisible by the default 8 channel groups


def make_gia(seed=0, dtype=np.float64, **cfg_kw):
    ps = ParamSet()
    cfg = GiaConfig(channels=cfg_kw.pop("channels", C), **cfg_kw)
    g = Gia(ps, "g", cfg, np.random.default_rng(seed), dtype=dtype)
    return g, ps


def feat(rng, *shape, dtype=np.float64, grad=False):
    return tensor(rng.normal(size=shape).astype(dtype), requires_grad=grad)


# Oracle helpers -----------------------------------------------------------


def conv_ref(x, w, b, pad=0):
    n, c, h, wid = x.shape
    k = w.shape[2]
    # the block replicate-pads its 3x3 convs, so the oracle does too
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge") if pad else x
    out = np.zeros((n, w.shape[0], xp.shape[2] - k + 1, xp.shape[3] - k + 1))
    for i in range(n):
        for f in range(w.shape[0]):
            for ch in range(c):
                out[i, f] += correlate2d(xp[i, ch], w[f, ch], mode="valid")
            out[i, f] += b[f]
    return out


def warp_ref(img, flow):
    """Loop warp of one (H,W) plane by (2,H,W) pixel offsets."""
    h, w = img.shape
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            sy = min(max(i + flow[1, i, j], 0.0), h - 1.0)
            sx = min(max(j + flow[0, i, j], 0.0), w - 1.0)
            y0, x0 = min(int(sy), h - 1), min(int(sx), w - 1)
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = (
                (1 - fy) * (1 - fx) * img[y0, x0]
                + (1 - fy) * fx * img[y0, x1]
                + fy * (1 - fx) * img[y1, x0]
                + fy * fx * img[y1, x1]
            )
    return out


# Gram interaction ---------------------------------------------------------


def test_gram_identity_factor():
    g2 = tensor(np.random.default_rng(0).normal(size=(5, 5)))
    out = feature_group_interaction(tensor(np.eye(5)), g2)
    assert np.allclose(out.data, g2.data.T, atol=1e-15)


def test_gram_self_symmetry():
    g = tensor(np.random.default_rng(1).normal(size=(3, 6, 4)))
    out = feature_group_interaction(g, g).data
    assert np.allclose(out, out.swapaxes(-1, -2), atol=1e-13)


def test_gram_matches_triple_loop():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    want = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            for k in range(3):
                want[i, j] += a[i, k] * b[j, k]
    got = feature_group_interaction(tensor(a), tensor(b)).data
    assert np.allclose(got, want, atol=1e-13)


def test_gram_shape_mismatch():
    with pytest.raises(ValueError):
        feature_group_interaction(tensor(np.zeros((4, 3))), tensor(np.zeros((4, 2))))


# Window partition ---------------------------------------------------------


def test_window_roundtrip_bitwise():
    x = tensor(np.random.default_rng(3).normal(size=(2, 3, 16, 24)).astype(np.float32))
    tiles, geom = window_partition(x, 8)
    assert tiles.data.shape == (2 * 2 * 3, 3, 8, 8)
    back = window_restore(tiles, 8, geom)
    assert np.array_equal(back.data, x.data)


def test_window_tiles_are_blocks():
    x = tensor(np.arange(2 * 1 * 16 * 16, dtype=np.float64).reshape(2, 1, 16, 16))
    tiles, _ = window_partition(x, 8)
    # row-major tile order within each batch item
    assert np.array_equal(tiles.data[0, 0], x.data[0, 0, :8, :8])
    assert np.array_equal(tiles.data[1, 0], x.data[0, 0, :8, 8:])
    assert np.array_equal(tiles.data[2, 0], x.data[0, 0, 8:, :8])
    assert np.array_equal(tiles.data[4, 0], x.data[1, 0, :8, :8])


def test_window_rejects_nonmultiple():
    with pytest.raises(ValueError):
        window_partition(tensor(np.zeros((1, 1, 12, 16))), 8)


def test_pad_to_window_replicates():
    x = tensor(np.random.default_rng(4).normal(size=(1, 2, 5, 6)))
    padded, (pb, pr) = pad_to_window(x, 8)
    assert (pb, pr) == (3, 2)
    assert padded.data.shape[-2:] == (8, 8)
    assert np.array_equal(padded.data[..., 4, :6], padded.data[..., 7, :6])
    assert np.array_equal(padded.data[..., 5], padded.data[..., 7])
    same, pads = pad_to_window(x, 1)
    assert pads == (0, 0) and same is x


# Config validation --------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        GiaConfig(channels=10, channel_groups=8)
    with pytest.raises(ValueError):
        GiaConfig(channels=8, attn_squash="tanh")
    with pytest.raises(ValueError):
        GiaConfig(channels=0)


# Spatial stream -----------------------------------------------------------


def test_spatial_alpha_zero_ignores_other_input():
    g, _ = make_gia(seed=5)
    rng = np.random.default_rng(6)
    f1 = feat(rng, 2, C, 16, 16)
    out_a, _ = g.spatial_interaction(f1, feat(rng, 2, C, 16, 16))
    out_b, _ = g.spatial_interaction(f1, feat(rng, 2, C, 16, 16))
    assert np.array_equal(out_a.data, out_b.data)


def test_spatial_alpha_zero_gradient_block_is_zero():
    g, _ = make_gia(seed=7)
    rng = np.random.default_rng(8)
    f1 = feat(rng, 1, C, 8, 8, grad=True)
    f2 = feat(rng, 1, C, 8, 8, grad=True)
    out1, _ = g.spatial_interaction(f1, f2)
    out1.backward(seed=rng.normal(size=out1.data.shape))
    assert f2.grad is not None and not np.any(f2.grad)
    assert np.any(f1.grad)


def test_spatial_single_window_stepwise_oracle():
    g, ps = make_gia(seed=9)
    ps["g.alpha"].data = np.array(0.7)
    rng = np.random.default_rng(10)
    f = [rng.normal(size=(1, C, 8, 8)) for _ in range(2)]
    got1, got2 = g.spatial_interaction(tensor(f[0]), tensor(f[1]))

    # step-wise: conv -> window (identity here) -> group -> Gram -> view
    # -> 1x1 -> gate -> smooth, in plain numpy
    pre = [conv_ref(f[j], ps[f"g.s_pre{j+1}.w"].data, ps[f"g.s_pre{j+1}.b"].data, pad=1)
           for j in range(2)]
    grouped = []
    for j in range(2):
        gfeat = conv_ref(pre[j], ps[f"g.s_group{j+1}.w"].data, ps[f"g.s_group{j+1}.b"].data)
        grouped.append(gfeat[0].reshape(C, 64).T)  # N=64 pixels, D=C
    fuse = grouped[0] @ grouped[1].T
    for j, want_out in enumerate((got1, got2)):
        view = fuse if j == 0 else fuse.T
        amap = view.reshape(1, 8, 8, 64).transpose(0, 3, 1, 2)
        m_a = conv_ref(amap, ps[f"g.s_ma{j+1}.w"].data, ps[f"g.s_ma{j+1}.b"].data)
        m_o = conv_ref(pre[j], ps[f"g.s_mo{j+1}.w"].data, ps[f"g.s_mo{j+1}.b"].data)
        gated = pre[j] * (m_o + 0.7 * m_a)
        want = conv_ref(gated, ps[f"g.s_smooth{j+1}.w"].data, ps[f"g.s_smooth{j+1}.b"].data, pad=1)
        assert np.allclose(want_out.data, want, atol=1e-10)


def test_spatial_swap_symmetry_with_swapped_weights():
    g_a, ps_a = make_gia(seed=11, use_flow_align=False)
    ps_a["g.alpha"].data = np.array(0.4)
    ps_a["g.beta"].data = np.array(-0.3)
    g_b, ps_b = make_gia(seed=99, use_flow_align=False)
    swapped = {}
    for k, v in ps_a.state_dict().items():
        other = k.replace("1.", "#.").replace("2.", "1.").replace("#.", "2.")
        swapped[other] = v
    ps_b.load_state_dict(swapped)
    rng = np.random.default_rng(12)
    f1, f2 = feat(rng, 2, C, 16, 16), feat(rng, 2, C, 16, 16)
    a1, a2 = g_a.forward(f1, f2)
    b1, b2 = g_b.forward(f2, f1)
    assert np.allclose(b1.data, a2.data, atol=1e-12)
    assert np.allclose(b2.data, a1.data, atol=1e-12)


# Channel stream -----------------------------------------------------------


def test_channel_beta_zero_ignores_other_input():
    g, _ = make_gia(seed=13)
    rng = np.random.default_rng(14)
    f1 = feat(rng, 2, C, 8, 8, grad=True)
    f2 = feat(rng, 2, C, 8, 8, grad=True)
    out1, out2 = g.channel_interaction(f1, f2)
    out1.backward(seed=np.ones(out1.data.shape))
    assert f2.grad is None or not np.any(f2.grad)
    alt, _ = g.channel_interaction(f1, feat(rng, 2, C, 8, 8))
    assert np.array_equal(out1.data, alt.data)


def test_gap_of_constant_feature():
    from focalforge.autodiff import global_avg_pool

    x = tensor(np.full((2, 5, 6, 6), 3.25))
    assert np.array_equal(global_avg_pool(x).data, np.full((2, 5), 3.25))


def test_channel_stepwise_oracle():
    g, ps = make_gia(seed=15)
    ps["g.beta"].data = np.array(0.9)
    rng = np.random.default_rng(16)
    f = [rng.normal(size=(2, C, 4, 4)) for _ in range(2)]
    got = g.channel_interaction(tensor(f[0]), tensor(f[1]))

    vec = [f[j].mean(axis=(2, 3)) @ ps[f"g.c_mlp_o{j+1}.w"].data + ps[f"g.c_mlp_o{j+1}.b"].data
           for j in range(2)]
    nc = 8
    g1 = vec[0].reshape(2, nc, C // nc)
    g2 = vec[1].reshape(2, nc, C // nc)
    fuse = np.einsum("bnd,bmd->bnm", g1, g2)
    for j in range(2):
        view = fuse if j == 0 else fuse.swapaxes(1, 2)
        a_a = view.reshape(2, nc * nc) @ ps[f"g.c_mlp_a{j+1}.w"].data + ps[f"g.c_mlp_a{j+1}.b"].data
        want = f[j] * (vec[j] + 0.9 * a_a)[:, :, None, None]
        assert np.allclose(got[j].data, want, atol=1e-10)


def test_channel_rejects_wrong_width():
    g, _ = make_gia(seed=17)
    with pytest.raises(ValueError):
        g.channel_interaction(tensor(np.zeros((1, 4, 8, 8))), tensor(np.zeros((1, 4, 8, 8))))


# Flow alignment -----------------------------------------------------------


def test_zero_flow_weights_reduce_to_bilinear_upsample():
    from focalforge.autodiff import bilinear_upsample

    g, _ = make_gia(seed=18)  # flow conv zero-initialized
    rng = np.random.default_rng(19)
    f_hi = feat(rng, 2, C, 16, 16, dtype=np.float32)
    f_lo = feat(rng, 2, C, 8, 8, dtype=np.float32)
    aligned = g.flow_align(f_hi, f_lo)
    assert np.array_equal(aligned.data, bilinear_upsample(f_lo, 16, 16).data)


def test_equal_resolution_zero_flow_is_identity():
    g, _ = make_gia(seed=20)
    rng = np.random.default_rng(21)
    f_hi = feat(rng, 1, C, 8, 8, dtype=np.float32)
    f_lo = feat(rng, 1, C, 8, 8, dtype=np.float32)
    assert np.array_equal(g.flow_align(f_hi, f_lo).data, f_lo.data)


def test_flow_align_matches_composed_oracle():
    g, ps = make_gia(seed=22)
    rng = np.random.default_rng(23)
    wf = rng.normal(size=ps["g.flow.w"].data.shape) * 0.1
    bf = rng.normal(size=2) * 0.1
    ps["g.flow.w"].data = wf
    ps["g.flow.b"].data = bf
    f_hi = feat(rng, 1, C, 8, 8)
    f_lo = feat(rng, 1, C, 8, 8)  # equal size: upsample is identity
    got = g.flow_align(f_hi, f_lo).data
    flow = conv_ref(np.concatenate([f_hi.data, f_lo.data], axis=1), wf, bf, pad=1)[0]
    want = np.stack([warp_ref(f_lo.data[0, ch], flow) for ch in range(C)])
    assert np.allclose(got[0], want, atol=1e-10)


def test_flow_align_rejects_larger_second_input():
    g, _ = make_gia(seed=24)
    with pytest.raises(ValueError):
        g.flow_align(tensor(np.zeros((1, C, 8, 8))), tensor(np.zeros((1, C, 16, 16))))
    g2, _ = make_gia(seed=25, use_flow_align=False)
    with pytest.raises(ValueError):
        g2.flow_align(tensor(np.zeros((1, C, 8, 8))), tensor(np.zeros((1, C, 8, 8))))


# Full block ---------------------------------------------------------------


def test_forward_output_shapes_follow_first_input():
    g, _ = make_gia(seed=26)
    rng = np.random.default_rng(27)
    out1, out2 = g.forward(feat(rng, 2, C, 16, 16), feat(rng, 2, C, 4, 4))
    assert out1.data.shape == (2, C, 16, 16)
    assert out2.data.shape == (2, C, 16, 16)


def test_fresh_block_is_fully_decoupled():
    g, _ = make_gia(seed=28)
    rng = np.random.default_rng(29)
    f1 = feat(rng, 1, C, 16, 16, grad=True)
    f2 = feat(rng, 1, C, 8, 8, grad=True)
    out1, out2 = g.forward(f1, f2)
    out1.backward(seed=rng.normal(size=out1.data.shape))
    assert f2.grad is None or not np.any(f2.grad)
    f1.grad, f2.grad = None, None
    out1b, out2b = g.forward(f1, f2)
    out2b.backward(seed=rng.normal(size=out2b.data.shape))
    assert f1.grad is None or not np.any(f1.grad)
    # and the values: replacing the other input changes nothing
    alt1, _ = g.forward(f1, feat(rng, 1, C, 8, 8))
    assert np.array_equal(alt1.data, out1.data)


def test_forward_deterministic_under_seed():
    rng = np.random.default_rng(30)
    f1d = rng.normal(size=(1, C, 16, 16))
    f2d = rng.normal(size=(1, C, 8, 8))
    outs = []
    for _ in range(2):
        g, _ = make_gia(seed=31)
        o1, o2 = g.forward(tensor(f1d.copy()), tensor(f2d.copy()))
        outs.append((o1.data.copy(), o2.data.copy()))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])


def test_full_block_gradcheck_every_parameter():
    g, ps = make_gia(seed=32)
    rng = np.random.default_rng(33)
    # move off the zero-coupled point so cross terms are exercised
    ps["g.alpha"].data = np.array(0.3)
    ps["g.beta"].data = np.array(-0.2)
    ps["g.flow.w"].data = rng.normal(size=ps["g.flow.w"].data.shape) * 0.05
    f1d = rng.normal(size=(1, C, 16, 16))
    f2d = rng.normal(size=(1, C, 8, 8))
    t1 = np.full((1, C, 16, 16), 0.7)

    def loss_fn(*params):
        o1, o2 = g.forward(tensor(f1d), tensor(f2d))
        return add(l1_loss(o1, t1), l1_loss(o2, -t1))

    err = gradcheck(loss_fn, ps.parameters(), sample=2, seed=0)
    assert err < 1e-4


def test_sigmoid_squash_variant_gradchecks():
    g, ps = make_gia(seed=34, attn_squash="sigmoid", use_flow_align=False)
    ps["g.alpha"].data = np.array(0.5)
    ps["g.beta"].data = np.array(0.5)
    rng = np.random.default_rng(35)
    f1d = rng.normal(size=(1, C, 8, 8))
    f2d = rng.normal(size=(1, C, 8, 8))

    def loss_fn(*params):
        o1, o2 = g.forward(tensor(f1d), tensor(f2d))
        return add(l1_loss(o1, np.ones_like(f1d)), l1_loss(o2, np.ones_like(f1d)))

    assert gradcheck(loss_fn, ps.parameters(), sample=2, seed=1) < 1e-4


def test_forward_without_flow_requires_equal_shapes():
    g, _ = make_gia(seed=36, use_flow_align=False)
    with pytest.raises(ValueError):
        g.forward(tensor(np.zeros((1, C, 16, 16))), tensor(np.zeros((1, C, 8, 8))))
    with pytest.raises(ValueError):
        g.forward(tensor(np.zeros((1, 4, 8, 8))), tensor(np.zeros((1, 4, 8, 8))))
