"""Desk-scale cross-modal blur and semantics estimator.

A four-level strided-conv encoder feeds two task branches (blur map and
segmentation) that exchange information through grouping-interactive
attention at three places: cross-scale fusion while walking the pyramid
coarse to fine, same-scale refinement after the task heads, and a final
task-to-task pass before prediction.  Auxiliary heads at LR resolution
supervise mid-network features; final maps are predicted at LR
resolution and bilinearly upsampled by the dataset's scale factor to HR,
where the losses live.

Everything runs on the in-package autodiff engine in float32; the same
graphs rebuild at float64 for finite-difference checks.  `use_gia=False`
swaps every attention block for plain addition/bilinear upsampling (the
ablation wiring); auxiliary and single-task ablations are loss masks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .autodiff import (
    AdamState,
    ParamSet,
    Tensor,
    adam_step,
    add,
    bilinear_upsample,
    concat,
    conv2d,
    cosine_warmup_lr,
    crop2d,
    fan_in_uniform,
    l1_loss,
    load_checkpoint,
    no_grad,
    pad2d_replicate,
    relu,
    save_checkpoint,
    softmax_cross_entropy,
    tensor,
)
from .gia import Gia, GiaConfig
from .image import LabelMap
from .metrics import eval_blurmap, miou
from .optics import BlurMap

_LEVEL_STRIDES = (16, 8, 4, 1)  # coarse to fine, relative to LR


@dataclass(frozen=True)
class CmosConfig:
    """Architecture knobs; widths are fine-to-coarse channel counts."""

    num_classes: int = 4
    widths: tuple = (32, 48, 64, 128)
    window: int = 8
    channel_groups: int = 8
    scale_factor: int = 4
    sigma_max: float = 5.0
    fusion_width: int = 32
    use_gia: bool = True
    ignore_value: int = 255

    def __post_init__(self):
        if len(self.widths) != 4:
            raise ValueError("exactly four pyramid widths required")
        for w in self.widths:
            if w % self.channel_groups:
                raise ValueError(
                    f"width {w} not divisible by channel_groups {self.channel_groups}"
                )
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if self.scale_factor < 1:
            raise ValueError("scale_factor must be >= 1")


@dataclass
class CmosOutputs:
    """Forward products: final HR maps plus LR-resolution aux maps."""

    blur_map: Tensor  # (N, 1, sH, sW)
    seg_logits: Tensor  # (N, C, sH, sW)
    aux_blur: Tensor  # (N, 1, H, W)
    aux_seg: Tensor  # (N, C, H, W)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults are the full-scale recipe.

    crop (LR pixels) and epochs are the desk-scale overrides: small
    crops keep one optimizer step affordable on a laptop CPU.
    """

    epochs: int = 700
    batch: int = 8
    lr: float = 1e-4
    warmup: int = 10
    beta1: float = 0.9
    beta2: float = 0.99
    flip_prob: float = 0.5
    scale_ratios: tuple = (1.0, 1.2, 1.5)
    seed: int = 0
    crop: int | None = None
    val_batch: int = 4
    val_limit: int | None = None
    include_aux: bool = True
    single_task: str | None = None

    def __post_init__(self):
        if not 0 <= self.warmup < self.epochs:
            raise ValueError("need 0 <= warmup < epochs")
        if self.single_task not in (None, "blur", "seg"):
            raise ValueError("single_task must be None, 'blur', or 'seg'")
        if self.batch < 1:
            raise ValueError("batch must be positive")


@dataclass
class TrainingSet:
    """In-memory paired samples: LR input plus HR supervision targets."""

    lr: list  # (H, W, 3) float32 in [0, 1]
    blur_hr: list  # (sH, sW) float32 sigma maps
    labels_hr: list  # (sH, sW) integer class maps
    ids: list
    scale: int
    sigma_max: float
    num_classes: int

    def __len__(self):
        return len(self.lr)

    def check(self):
        if not self.lr:
            raise ValueError("empty training set")
        for im, bl, lab in zip(self.lr, self.blur_hr, self.labels_hr):
            sh = (im.shape[0] * self.scale, im.shape[1] * self.scale)
            if bl.shape != sh or lab.shape != sh:
                raise ValueError(f"HR targets {bl.shape}/{lab.shape} do not match LR*s {sh}")
        return self


class CmosLite:
    """The estimation network; all parameters live in self.ps."""

    def __init__(self, cfg: CmosConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.ps = ParamSet()
        self._rng = np.random.default_rng(seed)
        w_coarse = tuple(reversed(cfg.widths))  # index by level, 0 = coarsest
        self.level_widths = w_coarse
        wf = cfg.widths[0]  # finest width

        self._build_encoder()
        for task in ("b", "s"):
            for i in range(1, 4):
                self._conv(f"proj.{task}{i}", w_coarse[i], w_coarse[i - 1], 1)
        for task in ("b", "s"):
            for i in range(4):
                for r in (1, 2):
                    self._resblock_params(f"head.{task}{i}.r{r}", w_coarse[i])
        self.gias: dict[str, Gia] = {}
        if cfg.use_gia:
            for i in range(1, 4):
                self._gia(f"gia.b{i}", w_coarse[i])
                self._gia(f"gia.s{i}", w_coarse[i])
            for i in range(4):
                self._gia(f"gia.m{i}", w_coarse[i])
            for i in range(4):
                self._gia(f"gia.l{i}", w_coarse[i])
        self._conv("aux.blur.c1", wf, wf, 3)
        self._conv("aux.blur.c2", 1, wf, 1)
        self._conv("aux.seg.c1", wf, wf, 3)
        self._conv("aux.seg.c2", cfg.num_classes, wf, 1)
        total = sum(self.level_widths)
        self._conv("fuse.b.c1", cfg.fusion_width, total, 3)
        self._conv("fuse.b.c2", 1, cfg.fusion_width, 1)
        self._conv("fuse.s.c1", cfg.fusion_width, total, 3)
        self._conv("fuse.s.c2", cfg.num_classes, cfg.fusion_width, 1)

    # parameter construction ----------------------------------------------

    def _conv(self, name, cout, cin, k):
        self.ps.add(f"{name}.w", fan_in_uniform(self._rng, (cout, cin, k, k), cin * k * k, self.dtype))
        self.ps.add(f"{name}.b", np.zeros(cout, self.dtype))

    def _resblock_params(self, name, width):
        self._conv(f"{name}.c1", width, width, 3)
        self._conv(f"{name}.c2", width, width, 3)

    def _gia(self, name, channels):
        cfg = GiaConfig(
            channels=channels,
            window=self.cfg.window,
            channel_groups=self.cfg.channel_groups,
            use_flow_align=True,
        )
        self.gias[name] = Gia(self.ps, name, cfg, self._rng, dtype=self.dtype)

    def _build_encoder(self):
        wc = self.level_widths  # (coarsest, ..., finest)
        fine = wc[3]
        self._conv("enc.stem", fine, 3, 3)
        self._resblock_params("enc.res3", fine)
        self._conv("enc.down2a", wc[2], fine, 3)
        self._conv("enc.down2b", wc[2], wc[2], 3)
        self._resblock_params("enc.res2", wc[2])
        self._conv("enc.down1", wc[1], wc[2], 3)
        self._resblock_params("enc.res1", wc[1])
        self._conv("enc.down0", wc[0], wc[1], 3)
        self._resblock_params("enc.res0", wc[0])

    # forward building blocks ---------------------------------------------

    def _c(self, x, name, stride=1, act=False):
        # replicate instead of zero padding so constant feature maps stay
        # exactly constant through every conv (borders included)
        k = self.ps[f"{name}.w"].data.shape[2]
        if k > 1:
            p = k // 2
            x = pad2d_replicate(x, p, p, p, p)
        out = conv2d(x, self.ps[f"{name}.w"], self.ps[f"{name}.b"], stride=stride)
        return relu(out) if act else out

    def _res(self, x, name):
        return relu(add(x, self._c(relu(self._c(x, f"{name}.c1")), f"{name}.c2")))

    def encoder_forward(self, lr: Tensor) -> list[Tensor]:
        """LR image (N,3,H,W) -> [F0..F3] coarse to fine; dims must be /16."""
        h, w = lr.data.shape[-2:]
        if h < 16 or w < 16:
            raise ValueError(f"input {h}x{w} smaller than 16x16")
        if h % 16 or w % 16:
            raise ValueError("pad input to a multiple of 16 before the encoder")
        f3 = self._res(self._c(lr, "enc.stem", act=True), "enc.res3")
        x = self._c(f3, "enc.down2a", stride=2, act=True)
        f2 = self._res(self._c(x, "enc.down2b", stride=2, act=True), "enc.res2")
        f1 = self._res(self._c(f2, "enc.down1", stride=2, act=True), "enc.res1")
        f0 = self._res(self._c(f1, "enc.down0", stride=2, act=True), "enc.res0")
        return [f0, f1, f2, f3]

    def _merge(self, name, fine_feat, coarse_refined, i, task):
        proj = self._c(coarse_refined, f"proj.{task}{i}")
        if self.cfg.use_gia:
            o1, o2 = self.gias[name].forward(fine_feat, proj)
            return add(o1, o2)
        h, w = fine_feat.data.shape[-2:]
        return add(fine_feat, bilinear_upsample(proj, h, w))

    def _refine(self, name, f_blur, f_seg):
        if self.cfg.use_gia:
            return self.gias[name].forward(f_blur, f_seg)
        return f_blur, f_seg

    def stage2_forward(self, levels: list[Tensor]):
        """Walk the pyramid coarse to fine, producing per-level task features.

        Returns (blur_feats, seg_feats, aux_blur, aux_seg); the refined
        features only feed the next level's merge.
        """
        blur_feats, seg_feats = [], []
        ref_b = ref_s = None
        for i, f in enumerate(levels):
            if i == 0:
                fb, fs = f, f
            else:
                fb = self._merge(f"gia.b{i}", f, ref_b, i, "b")
                fs = self._merge(f"gia.s{i}", f, ref_s, i, "s")
            f_blur = self._res(self._res(fb, f"head.b{i}.r1"), f"head.b{i}.r2")
            f_seg = self._res(self._res(fs, f"head.s{i}.r1"), f"head.s{i}.r2")
            blur_feats.append(f_blur)
            seg_feats.append(f_seg)
            ref_b, ref_s = self._refine(f"gia.m{i}", f_blur, f_seg)
        aux_blur = self._c(relu(self._c(ref_b, "aux.blur.c1")), "aux.blur.c2")
        aux_seg = self._c(relu(self._c(ref_s, "aux.seg.c1")), "aux.seg.c2")
        return blur_feats, seg_feats, aux_blur, aux_seg

    def stage3_forward(self, blur_feats, seg_feats):
        """Final task interaction, multi-scale fusion, LR-space prediction."""
        h, w = blur_feats[-1].data.shape[-2:]
        final_b, final_s = [], []
        for i, (fb, fs) in enumerate(zip(blur_feats, seg_feats)):
            if self.cfg.use_gia:
                ob, os_ = self.gias[f"gia.l{i}"].forward(fb, fs)
            else:
                ob, os_ = fb, fs
            final_b.append(ob if ob.data.shape[-2:] == (h, w) else bilinear_upsample(ob, h, w))
            final_s.append(os_ if os_.data.shape[-2:] == (h, w) else bilinear_upsample(os_, h, w))
        blur_lr = self._c(relu(self._c(concat(final_b, axis=1), "fuse.b.c1")), "fuse.b.c2")
        seg_lr = self._c(relu(self._c(concat(final_s, axis=1), "fuse.s.c1")), "fuse.s.c2")
        return blur_lr, seg_lr

    def forward(self, lr_batch: np.ndarray) -> CmosOutputs:
        """(N, H, W, 3) or (N, 3, H, W) float batch -> all output maps.

        Non-multiple-of-16 inputs are replicate-padded internally and the
        predictions cropped back before the final HR upsample.
        """
        x = np.asarray(lr_batch, dtype=self.dtype)
        if x.ndim != 4:
            raise ValueError("expected a batched input")
        if x.shape[-1] == 3 and x.shape[1] != 3:
            x = x.transpose(0, 3, 1, 2)
        n, _, h, w = x.shape
        if h < 16 or w < 16:
            raise ValueError(f"input {h}x{w} smaller than the 16x16 minimum")
        ph, pw = (-h) % 16, (-w) % 16
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
        levels = self.encoder_forward(tensor(np.ascontiguousarray(x)))
        blur_feats, seg_feats, aux_blur, aux_seg = self.stage2_forward(levels)
        blur_lr, seg_lr = self.stage3_forward(blur_feats, seg_feats)
        if ph or pw:
            blur_lr = crop2d(blur_lr, 0, ph, 0, pw)
            seg_lr = crop2d(seg_lr, 0, ph, 0, pw)
            aux_blur = crop2d(aux_blur, 0, ph, 0, pw)
            aux_seg = crop2d(aux_seg, 0, ph, 0, pw)
        s = self.cfg.scale_factor
        blur_hr = bilinear_upsample(blur_lr, h * s, w * s) if s > 1 else blur_lr
        seg_hr = bilinear_upsample(seg_lr, h * s, w * s) if s > 1 else seg_lr
        return CmosOutputs(blur_hr, seg_hr, aux_blur, aux_seg)


def _nearest_resize_labels(labels: np.ndarray, oh: int, ow: int) -> np.ndarray:
    h, w = labels.shape
    yi = np.minimum((((np.arange(oh) + 0.5) * h / oh)).astype(np.intp), h - 1)
    xi = np.minimum((((np.arange(ow) + 0.5) * w / ow)).astype(np.intp), w - 1)
    return labels[yi[:, None], xi[None, :]]


def aux_targets(blur_hr: np.ndarray, labels_hr: np.ndarray, oh: int, ow: int):
    """Downscale HR ground truth to the aux maps' LR grid.

    Blur resizes bilinearly (sigma is a continuous field); labels use
    nearest neighbour so no invalid class mixtures appear.
    """
    ab = np.stack(
        [cv2.resize(b.astype(np.float32), (ow, oh), interpolation=cv2.INTER_LINEAR) for b in blur_hr]
    )
    al = np.stack([_nearest_resize_labels(l, oh, ow) for l in labels_hr])
    return ab, al


def total_loss(
    out: CmosOutputs,
    blur_hr: np.ndarray,
    labels_hr: np.ndarray,
    include_aux: bool = True,
    single_task: str | None = None,
    ignore_value: int = 255,
):
    """Sum of aux-blur, aux-seg, final-blur, final-seg losses.

    Returns (scalar Tensor, parts dict).  Ablation flags zero terms out
    of the sum; the parts dict always reports all four for logging.
    """
    n, _, sh, sw = out.blur_map.data.shape
    if blur_hr.shape != (n, sh, sw) or labels_hr.shape != (n, sh, sw):
        raise ValueError(
            f"targets {blur_hr.shape}/{labels_hr.shape} do not match output {(n, sh, sw)}"
        )
    oh, ow = out.aux_blur.data.shape[-2:]
    ab, al = aux_targets(blur_hr, labels_hr, oh, ow)
    l1 = l1_loss(out.aux_blur, ab[:, None].astype(out.aux_blur.data.dtype))
    l2 = softmax_cross_entropy(out.aux_seg, al, ignore_value=ignore_value)
    l3 = l1_loss(out.blur_map, blur_hr[:, None].astype(out.blur_map.data.dtype))
    l4 = softmax_cross_entropy(out.seg_logits, labels_hr, ignore_value=ignore_value)
    parts = {"aux_blur": float(l1.data), "aux_seg": float(l2.data),
             "blur": float(l3.data), "seg": float(l4.data)}
    terms = []
    if single_task in (None, "blur"):
        terms += ([l1] if include_aux else []) + [l3]
    if single_task in (None, "seg"):
        terms += ([l2] if include_aux else []) + [l4]
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return total, parts


def estimate(model: CmosLite, lr_image: np.ndarray) -> tuple[BlurMap, LabelMap]:
    """Single-image inference: clamp blur to [0, sigma_max], argmax labels."""
    img = np.asarray(lr_image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    with no_grad():
        out = model.forward(img[None])
    blur = np.clip(out.blur_map.data[0, 0].astype(np.float64), 0.0, model.cfg.sigma_max)
    labels = out.seg_logits.data[0].argmax(axis=0).astype(np.int32)
    return (
        BlurMap(blur, sigma_max=model.cfg.sigma_max),
        LabelMap(labels, classes=model.cfg.num_classes, ignore_value=model.cfg.ignore_value),
    )


# Training ----------------------------------------------------------------


def _augment_pair(lr, blur, labels, scale, ratios, flip_prob, rng):
    """Train-time augmentation of one LR/HR pair.

    Rescales by a drawn ratio (sigma divided by the same ratio), then
    flips.  The HR target size is LR size times scale exactly, so the
    pair stays aligned after rounding.
    """
    ratio = float(rng.choice(np.asarray(ratios, dtype=np.float64)))
    flip = bool(rng.random() < flip_prob)
    if ratio != 1.0:
        lh = max(16, int(round(lr.shape[0] * ratio)))
        lw = max(16, int(round(lr.shape[1] * ratio)))
        lr = np.clip(cv2.resize(lr, (lw, lh), interpolation=cv2.INTER_LINEAR), 0.0, 1.0)
        blur = (
            cv2.resize(blur, (lw * scale, lh * scale), interpolation=cv2.INTER_LINEAR) / ratio
        ).astype(np.float32)
        labels = _nearest_resize_labels(labels, lh * scale, lw * scale)
    if flip:
        lr = lr[:, ::-1].copy()
        blur = blur[:, ::-1].copy()
        labels = labels[:, ::-1].copy()
    return lr, blur, labels


def _crop_pair(lr, blur, labels, crop, scale, rng):
    h, w = lr.shape[:2]
    if crop is None or (h <= crop and w <= crop):
        return lr, blur, labels
    c = min(crop, h, w)
    y = int(rng.integers(0, h - c + 1))
    x = int(rng.integers(0, w - c + 1))
    sy, sx, sc = y * scale, x * scale, c * scale
    return (
        lr[y : y + c, x : x + c],
        blur[sy : sy + sc, sx : sx + sc],
        labels[sy : sy + sc, sx : sx + sc],
    )


def _validate(model, val_set, batch, limit=None):
    """Blur-map PSNR and mIoU over a validation set, batched, no graph."""
    total = len(val_set) if limit is None else min(limit, len(val_set))
    psnrs, preds, gts = [], [], []
    for start in range(0, total, batch):
        ims = val_set.lr[start : min(start + batch, total)]
        with no_grad():
            out = model.forward(np.stack([im.transpose(2, 0, 1) for im in ims]))
        for j in range(len(ims)):
            i = start + j
            pred = np.clip(out.blur_map.data[j, 0].astype(np.float64), 0, val_set.sigma_max)
            gt = BlurMap(val_set.blur_hr[i].astype(np.float64), sigma_max=val_set.sigma_max)
            psnrs.append(eval_blurmap(BlurMap(pred, sigma_max=val_set.sigma_max), gt,
                                      sigma_max=val_set.sigma_max).psnr)
            preds.append(out.seg_logits.data[j].argmax(axis=0).astype(np.int64).reshape(-1))
            gts.append(np.asarray(val_set.labels_hr[i]).astype(np.int64).reshape(-1))
    mean_iou, _ = miou(
        np.concatenate(preds), np.concatenate(gts),
        classes=model.cfg.num_classes, ignore_value=model.cfg.ignore_value,
    )
    return float(np.mean(psnrs)), float(mean_iou)


def train(
    model: CmosLite,
    train_set: TrainingSet,
    val_set: TrainingSet | None,
    tcfg: TrainConfig,
    out_dir=None,
    log_fn=None,
):
    """Adam + warmup/cosine training with augmentation and validation.

    Returns a dict with the per-epoch trace, best validation scores, and
    (when out_dir is set) checkpoint paths for the best-PSNR and
    best-mIoU epochs.  Raises on NaN loss with a step diagnostic.
    """
    train_set.check()
    if train_set.scale != model.cfg.scale_factor:
        raise ValueError(
            f"dataset scale {train_set.scale} != model scale {model.cfg.scale_factor}"
        )
    params = model.ps.parameters()
    state = AdamState()
    trace = []
    best = {"psnr": -np.inf, "miou": -np.inf, "psnr_path": None, "miou_path": None}
    n = len(train_set)
    t_start = time.perf_counter()
    for epoch in range(tcfg.epochs):
        lr_now = cosine_warmup_lr(epoch, tcfg.epochs, tcfg.warmup, tcfg.lr)
        order = np.random.default_rng([tcfg.seed, 7, epoch]).permutation(n)
        epoch_loss, parts_sum, steps = 0.0, None, 0
        for start in range(0, n, tcfg.batch):
            idxs = order[start : start + tcfg.batch]
            pairs, rngs = [], []
            for i in idxs:
                rng = np.random.default_rng([tcfg.seed, 11, epoch, int(i)])
                pairs.append(
                    _augment_pair(
                        train_set.lr[i], train_set.blur_hr[i], train_set.labels_hr[i],
                        train_set.scale, tcfg.scale_ratios, tcfg.flip_prob, rng,
                    )
                )
                rngs.append(rng)
            # rescale augmentation mixes sizes; crop to the batch minimum
            target = min(min(im.shape[0], im.shape[1]) for im, _, _ in pairs)
            if tcfg.crop is not None:
                target = min(target, tcfg.crop)
            ims, blurs, labs = [], [], []
            for (im, bl, lab), rng in zip(pairs, rngs):
                im, bl, lab = _crop_pair(im, bl, lab, target, train_set.scale, rng)
                ims.append(im.transpose(2, 0, 1))
                blurs.append(bl)
                labs.append(lab)
            out = model.forward(np.stack(ims))
            loss, parts = total_loss(
                out, np.stack(blurs), np.stack(labs),
                include_aux=tcfg.include_aux, single_task=tcfg.single_task,
                ignore_value=model.cfg.ignore_value,
            )
            lval = float(loss.data)
            if not np.isfinite(lval):
                raise RuntimeError(
                    f"non-finite loss {lval} at epoch {epoch} step {steps}; aborting"
                )
            model.ps.zero_grad()
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step(params, grads, state, lr_now, tcfg.beta1, tcfg.beta2)
            epoch_loss += lval
            parts_sum = (
                {k: parts_sum[k] + v for k, v in parts.items()} if parts_sum else dict(parts)
            )
            steps += 1
        rec = {
            "epoch": epoch,
            "lr": float(lr_now),
            "loss": epoch_loss / steps,
            "parts": {k: v / steps for k, v in parts_sum.items()},
            "elapsed_s": time.perf_counter() - t_start,
        }
        if val_set is not None and len(val_set):
            psnr, m = _validate(model, val_set, tcfg.val_batch, tcfg.val_limit)
            rec["val_blur_psnr"] = psnr
            rec["val_miou"] = m
            for key, score in (("psnr", psnr), ("miou", m)):
                if score > best[key]:
                    best[key] = score
                    if out_dir is not None:
                        path = Path(out_dir) / f"best_{key}.npz"
                        save_checkpoint(
                            path, model.ps.state_dict(),
                            {"epoch": epoch, f"val_{key}": score, **_model_meta(model)},
                            None,
                        )
                        best[f"{key}_path"] = str(path)
        trace.append(rec)
        if log_fn is not None:
            log_fn(rec)
    return {"trace": trace, "best": best, "adam_t": state.t}


def _model_meta(model: CmosLite) -> dict:
    c = model.cfg
    return {
        "num_classes": c.num_classes,
        "widths": list(c.widths),
        "window": c.window,
        "channel_groups": c.channel_groups,
        "scale_factor": c.scale_factor,
        "sigma_max": c.sigma_max,
        "fusion_width": c.fusion_width,
        "use_gia": c.use_gia,
        "ignore_value": c.ignore_value,
    }


def save_model(path, model: CmosLite, extra_meta: dict | None = None):
    save_checkpoint(path, model.ps.state_dict(), {**_model_meta(model), **(extra_meta or {})})


def load_model(path) -> CmosLite:
    """Rebuild a model from a checkpoint; config comes from the sidecar."""
    arrays, meta, _ = load_checkpoint(path)
    cfg = CmosConfig(
        num_classes=int(meta["num_classes"]),
        widths=tuple(meta["widths"]),
        window=int(meta["window"]),
        channel_groups=int(meta["channel_groups"]),
        scale_factor=int(meta["scale_factor"]),
        sigma_max=float(meta["sigma_max"]),
        fusion_width=int(meta["fusion_width"]),
        use_gia=bool(meta["use_gia"]),
        ignore_value=int(meta["ignore_value"]),
    )
    model = CmosLite(cfg)
    model.ps.load_state_dict(arrays)
    return model
