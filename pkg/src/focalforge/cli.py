"""Command-line front end: one binary, six subcommands.

synth writes a training corpus to disk (from a source manifest or the
built-in synthetic scenes), train/eval/estimate drive the estimation
network, gradcheck verifies gradients, and bench times the blur engine.
Every subcommand logs line-delimited JSON records (mirrored as
human-readable lines on stdout), exits 0 with a final JSON line naming
its outputs, and exits nonzero with a single-line diagnostic on error.

`--seed` overrides the config seed and reproduces any pipeline bitwise;
`--threads` caps internal parallelism, falling back to FOCALFORGE_THREADS
and then the machine's core count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import gradcheck, tensor
from .cmoslite import (
    CmosLite,
    TrainingSet,
    estimate,
    load_model,
    save_model,
    total_loss,
    train,
)
from .config import ConfigError, RunConfig, parse_config
from .datagen import load_manifest, synthesize_entry
from .image import (
    ImageIOError,
    ImagePlane,
    load_float_map,
    load_image,
    load_label_map,
    save_float_map,
    save_image,
    save_label_map,
)
from .metrics import eval_blurmap, miou
from .optics import BlurMap
from .svblur import DegradeOpts, variant_blur
from .toydata import SceneSpec, render_scene

_ERRORS = (ConfigError, ImageIOError, ValueError, RuntimeError, OSError)


# Logging ------------------------------------------------------------------


class _Log:
    """Line-delimited JSON to a file, human-readable mirror to stdout."""

    def __init__(self, path=None, quiet=False):
        self.fh = open(path, "w") if path is not None else None
        self.quiet = quiet

    def __call__(self, rec: dict):
        if self.fh is not None:
            self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self.fh.flush()
        if not self.quiet:
            print("  ".join(f"{k}={_short(v)}" for k, v in rec.items()), flush=True)

    def close(self):
        if self.fh is not None:
            self.fh.close()


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return "{" + ",".join(f"{k}:{_short(x)}" for k, x in v.items()) + "}"
    return v


def _done(outputs: dict) -> int:
    """Success contract: machine-readable output paths on the last line."""
    print(json.dumps({"ok": True, **outputs}, sort_keys=True), flush=True)
    return 0


# Shared option handling ---------------------------------------------------


def _load_cfg(args) -> RunConfig:
    return parse_config(args.config) if args.config else RunConfig()


def _seed_of(cfg: RunConfig, args) -> int:
    return args.seed if args.seed is not None else cfg.seed


def _usable_cores() -> int:
    # affinity, not machine cores: containers often pin fewer than exist
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _threads_of(cfg: RunConfig, args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("FOCALFORGE_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ConfigError(f"FOCALFORGE_THREADS must be >= 1, got {env}")
        return n
    if cfg.threads is not None:
        return cfg.threads
    return _usable_cores()


def _add_common(sp, config=True):
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.add_argument("--threads", type=int, default=None, help="cap internal parallelism")
    sp.add_argument("--quiet", action="store_true", help="suppress the human log mirror")
    if config:
        sp.add_argument("--config", default=None, help="INI run configuration")


# Corpus manifests ---------------------------------------------------------
#
# synth writes a self-describing JSONL manifest: one header line with the
# dataset-level facts train needs, then one record per sample with paths
# relative to the manifest's directory.


def _write_corpus_manifest(path: Path, header: dict, records: list[dict]):
    with open(path, "w") as f:
        f.write(json.dumps({"kind": "focalforge-data", **header}, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_corpus(manifest_path, split: str | None = None) -> TrainingSet:
    """Read a synth-output manifest back into an in-memory training set."""
    path = Path(manifest_path)
    if not path.is_file():
        raise ConfigError(f"no such manifest: {path}")
    root = path.parent
    with open(path) as f:
        lines = [json.loads(l) for l in f if l.strip()]
    if not lines or lines[0].get("kind") != "focalforge-data":
        raise ConfigError(f"{path}: not a synth-output manifest (missing header)")
    head, records = lines[0], lines[1:]
    lrs, blurs, labels, ids = [], [], [], []
    for rec in records:
        if split is not None and rec["split"] != split:
            continue
        lrs.append(load_image(root / rec["lr"]).data.astype(np.float32))
        blurs.append(load_float_map(root / rec["blur"]).astype(np.float32))
        labels.append(
            load_label_map(root / rec["labels"], classes=head["num_classes"]).data
        )
        ids.append(rec["id"])
    if not ids:
        raise ConfigError(f"{path}: no records for split {split!r}")
    return TrainingSet(
        lr=lrs,
        blur_hr=blurs,
        labels_hr=labels,
        ids=ids,
        scale=head["scale"],
        sigma_max=head["sigma_max"],
        num_classes=head["num_classes"],
    ).check()


# synth --------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    seed = _seed_of(cfg, args)
    threads = _threads_of(cfg, args)
    out = Path(args.out)
    for sub in ("lr", "blur", "labels"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    log = _Log(out / "log.jsonl", args.quiet)
    t0 = time.perf_counter()
    records = []
    if args.toy:
        spec = SceneSpec(
            count=args.count,
            lr_size=args.lr_size,
            scale_factor=cfg.degrade.scale_factor,
            kernel_size=cfg.degrade.kernel_size,
            mode=cfg.degrade.mode,
            noise_sigma=cfg.degrade.noise_sigma,
            seed=seed,
        )
        val_every = max(2, spec.count // max(1, args.val_count)) if args.val_count else 0

        def render(i):
            return i, render_scene(spec, i)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(render, range(spec.count)))
        n_val = 0
        for i, (lr, blur, label) in results:
            sid = f"toy-{seed}-{i:04d}"
            # deterministic split: spread validation ids evenly over the corpus
            is_val = bool(val_every) and i % val_every == 0 and n_val < args.val_count
            n_val += is_val
            rec = {
                "id": sid,
                "split": "val" if is_val else "train",
                "lr": f"lr/{sid}.png",
                "blur": f"blur/{sid}.pfm",
                "labels": f"labels/{sid}.png",
            }
            save_image(lr, out / rec["lr"], bit_depth=16)
            save_float_map(blur.data, out / rec["blur"])
            save_label_map(label, out / rec["labels"])
            records.append(rec)
        header = {
            "scale": spec.scale_factor,
            "sigma_max": spec.sigma_max,
            "num_classes": spec.num_classes,
            "count": spec.count,
            "seed": seed,
        }
    else:
        if not args.manifest:
            raise ConfigError("synth needs --manifest (or --toy)")
        entries = load_manifest(args.manifest)
        root = Path(args.manifest).parent
        spec = cfg.dataset
        if spec.seed != seed:
            spec = replace(spec, seed=seed)
        if args.only_split:
            entries = [e for e in entries if e.split == args.only_split]
        if not entries:
            raise ConfigError("no manifest entries match the requested split")

        def synth_one(entry):
            lr, blur = synthesize_entry(
                entry, spec, group=args.group, opts=cfg.degrade, root=root
            )
            return entry, lr, blur

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(synth_one, entries))
        for entry, lr, blur in results:
            rec = {
                "id": entry.id,
                "split": entry.split,
                "lr": f"lr/{entry.id}.png",
                "blur": f"blur/{entry.id}.pfm",
                "labels": f"labels/{entry.id}.png",
            }
            save_image(lr, out / rec["lr"], bit_depth=16)
            save_float_map(blur.data, out / rec["blur"])
            label = load_label_map(
                root / entry.label_path, classes=cfg.model.num_classes
            )
            save_label_map(label, out / rec["labels"])
            records.append(rec)
        header = {
            "scale": cfg.degrade.scale_factor,
            "sigma_max": spec.sigma_max,
            "num_classes": cfg.model.num_classes,
            "count": len(records),
            "seed": seed,
        }
    manifest_path = out / "manifest.jsonl"
    _write_corpus_manifest(manifest_path, header, records)
    log(
        {
            "event": "synth",
            "count": len(records),
            "threads": threads,
            "elapsed_s": round(time.perf_counter() - t0, 3),
        }
    )
    log.close()
    return _done({"manifest": str(manifest_path), "out": str(out)})


# train --------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    seed = _seed_of(cfg, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = load_corpus(args.manifest, "train")
    try:
        val_set = load_corpus(args.manifest, "val")
    except ConfigError:
        val_set = None
    model_cfg = cfg.model
    if args.ablate_gia:
        model_cfg = replace(model_cfg, use_gia=False)
    if model_cfg.scale_factor != train_set.scale:
        model_cfg = replace(model_cfg, scale_factor=train_set.scale)
    if model_cfg.num_classes != train_set.num_classes:
        raise ConfigError(
            f"[model] num_classes {model_cfg.num_classes} != corpus "
            f"num_classes {train_set.num_classes}"
        )
    overrides = {"seed": seed}
    if args.ablate_aux:
        overrides["include_aux"] = False
    if args.single_task:
        overrides["single_task"] = args.single_task
    tcfg = replace(cfg.train, **overrides)
    model = CmosLite(model_cfg, seed=seed)
    log = _Log(out / "log.jsonl", args.quiet)
    result = train(model, train_set, val_set, tcfg, out_dir=out, log_fn=log)
    final_path = out / "final.npz"
    save_model(final_path, model, {"seed": seed})
    log.close()
    trace = result["trace"]
    return _done(
        {
            "final": str(final_path),
            "best_psnr": result["best"]["psnr_path"],
            "best_miou": result["best"]["miou_path"],
            "log": str(out / "log.jsonl"),
            "first_loss": trace[0]["loss"],
            "last_loss": trace[-1]["loss"],
        }
    )


# eval ---------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    data = load_corpus(args.manifest, args.split)
    model = load_model(args.ckpt)
    if model.cfg.num_classes != data.num_classes:
        raise ConfigError(
            f"checkpoint has {model.cfg.num_classes} classes, corpus {data.num_classes}"
        )
    log = _Log(None, args.quiet)
    psnrs, maes, preds, gts = [], [], [], []
    for i in range(len(data)):
        blur, label = estimate(model, data.lr[i])
        gt = BlurMap(data.blur_hr[i].astype(np.float64), sigma_max=data.sigma_max)
        psnrs.append(eval_blurmap(blur, gt, sigma_max=data.sigma_max).psnr)
        maes.append(float(np.abs(blur.data - gt.data).mean()))
        preds.append(label.data.reshape(-1))
        gts.append(np.asarray(data.labels_hr[i], dtype=np.int64).reshape(-1))
        log({"event": "eval", "id": data.ids[i], "blur_psnr": psnrs[-1], "mae": maes[-1]})
    mean_iou, per_class = miou(
        np.concatenate(preds), np.concatenate(gts),
        classes=data.num_classes, ignore_value=model.cfg.ignore_value,
    )
    report = {
        "split": args.split,
        "count": len(data),
        "blur_psnr": float(np.mean(psnrs)),
        "blur_mae": float(np.mean(maes)),
        "miou": float(mean_iou),
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        return _done({"report": str(args.out), **report})
    return _done(report)


# estimate -----------------------------------------------------------------


def cmd_estimate(args) -> int:
    model = load_model(args.ckpt)
    img = load_image(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    blur, label = estimate(model, img.data)
    stem = Path(args.image).stem
    blur_path = out / f"{stem}_blur.pfm"
    label_path = out / f"{stem}_labels.png"
    save_float_map(blur.data, blur_path)
    save_label_map(label, label_path)
    return _done(
        {
            "blur": str(blur_path),
            "labels": str(label_path),
            "blur_range": [float(blur.data.min()), float(blur.data.max())],
        }
    )


# gradcheck ----------------------------------------------------------------


def _gradcheck_ops(seed: int) -> float:
    """Battery over the autodiff primitives at small sizes."""
    from . import autodiff as ad

    rng = np.random.default_rng(seed)
    worst = 0.0

    def check(fn, *shapes, **kw):
        nonlocal worst
        xs = [tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
        worst = max(worst, gradcheck(fn, xs, seed=seed, **kw))

    check(lambda a, b: ad.l1_loss(ad.add(a, b), np.zeros((3, 4))), (3, 4), (3, 4))
    check(lambda a, b: ad.l1_loss(ad.mul(a, b), np.zeros((3, 4))), (3, 4), (1, 4))
    check(lambda a, b: ad.l1_loss(ad.matmul(a, b), np.zeros((3, 5))), (3, 4), (4, 5))
    check(lambda a: ad.l1_loss(ad.relu(a), np.ones((4, 4))), (4, 4))
    check(lambda a: ad.l1_loss(ad.sigmoid(a), np.zeros((4, 4))), (4, 4))
    check(lambda a: ad.l1_loss(ad.reshape(a, (2, 6)), np.zeros((2, 6))), (3, 4))
    check(lambda a: ad.l1_loss(ad.transpose(a, (1, 0, 2)), np.zeros((4, 2, 3))), (2, 4, 3))
    check(
        lambda a, b: ad.l1_loss(ad.concat([a, b], axis=1), np.zeros((2, 5))),
        (2, 3), (2, 2),
    )
    check(
        lambda a: ad.l1_loss(ad.crop2d(a, 1, 1, 2, 0), np.zeros((1, 2, 3, 4))),
        (1, 2, 5, 6),
    )
    check(
        lambda x, w, b: ad.l1_loss(ad.affine(x, w, b), np.zeros((3, 5))),
        (3, 4), (4, 5), (5,),
    )
    check(lambda a: ad.l1_loss(ad.global_avg_pool(a), 0.1), (2, 3, 4, 5))
    check(
        lambda a: ad.l1_loss(ad.pad2d_replicate(a, 1, 2, 1, 2), np.zeros((1, 2, 7, 8))),
        (1, 2, 4, 5),
    )
    check(
        lambda x, w, b: ad.l1_loss(ad.conv2d(x, w, b, stride=2, pad=1), 0.3),
        (2, 3, 6, 6), (4, 3, 3, 3), (4,),
    )
    check(
        lambda x: ad.l1_loss(ad.bilinear_upsample(x, 7, 9), 0.1),
        (1, 2, 4, 5),
    )
    check(
        lambda x, f: ad.l1_loss(ad.grid_sample_flow(ad.bilinear_upsample(x, 6, 6), f), 0.1),
        (1, 2, 3, 3), (1, 2, 6, 6),
    )
    labels = rng.integers(0, 3, (2, 4, 4))
    check(lambda z: ad.softmax_cross_entropy(z, labels), (2, 3, 4, 4))
    return worst


def _gradcheck_gia(seed: int) -> float:
    from .autodiff import ParamSet, add, l1_loss
    from .gia import Gia, GiaConfig

    rng = np.random.default_rng(seed)
    ps = ParamSet()
    block = Gia(ps, "g", GiaConfig(channels=8, window=4, channel_groups=4), rng, np.float64)
    for name in ps.names():
        if name.endswith(("alpha", "beta")):
            ps[name].data = np.array(0.3)
        if ".flow." in name:
            ps[name].data = rng.normal(size=ps[name].data.shape) * 0.05
    f1 = rng.random((1, 8, 8, 8))
    f2 = rng.random((1, 8, 8, 8))

    def loss(*params):
        o1, o2 = block.forward(tensor(f1), tensor(f2))
        return add(l1_loss(o1, 0.2), l1_loss(o2, -0.1))

    return gradcheck(loss, ps.parameters(), sample=2, seed=seed)


def _gradcheck_cmos(seed: int) -> float:
    from .cmoslite import CmosConfig

    rng = np.random.default_rng(seed)
    model = CmosLite(
        CmosConfig(widths=(8, 8, 8, 16), fusion_width=8, num_classes=3, scale_factor=2),
        seed=seed, dtype=np.float64,
    )
    for name in model.ps.names():
        if name.endswith((".alpha", ".beta")):
            model.ps[name].data = np.array(0.3)
        if ".flow." in name:
            model.ps[name].data = rng.normal(size=model.ps[name].data.shape) * 0.05
    # shift first-stage head biases off relu's kink (tiny coarse features
    # leave every pre-activation within the finite-difference window)
    for name in ("aux.blur.c1.b", "aux.seg.c1.b", "fuse.b.c1.b", "fuse.s.c1.b"):
        model.ps[name].data = model.ps[name].data + 0.05
    x = rng.random((1, 16, 16, 3))
    blur_gt = rng.random((1, 32, 32)) * 3
    labels = rng.integers(0, 3, (1, 32, 32))

    def loss(*params):
        out = model.forward(x)
        return total_loss(out, blur_gt, labels)[0]

    return gradcheck(loss, model.ps.parameters(), sample=1, seed=seed)


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    modules = [args.module] if args.module else ["ops", "gia", "cmos"]
    log = _Log(None, args.quiet)
    report = {}
    for mod in modules:
        t0 = time.perf_counter()
        err = {"ops": _gradcheck_ops, "gia": _gradcheck_gia, "cmos": _gradcheck_cmos}[mod](seed)
        report[mod] = err
        log(
            {
                "event": "gradcheck",
                "module": mod,
                "max_rel_err": err,
                "elapsed_s": round(time.perf_counter() - t0, 2),
            }
        )
    worst = max(report.values())
    if worst >= 1e-4:
        raise RuntimeError(f"gradient check failed: max rel error {worst:.3e}")
    return _done({"max_rel_err": worst, "modules": {k: float(v) for k, v in report.items()}})


# bench --------------------------------------------------------------------


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    seed = _seed_of(cfg, args)
    h, w, k = 480, 640, 21
    rng = np.random.default_rng(seed)
    img = ImagePlane(rng.random((h, w, 3)))
    blur = BlurMap(rng.uniform(0.0, 5.0, (h, w)), sigma_max=5.0)
    log = _Log(None, args.quiet)
    thread_counts = [int(t) for t in args.thread_counts.split(",")]
    results = []
    for mode in ("exact", "lut"):
        opts = DegradeOpts(scale_factor=1, kernel_size=k, mode=mode)
        for t in thread_counts:
            best = np.inf
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                variant_blur(img, blur, opts, threads=t)
                best = min(best, time.perf_counter() - t0)
            rec = {
                "mode": mode,
                "threads": t,
                "seconds": round(best, 4),
                "pixels_per_sec": round(h * w / best, 1),
            }
            results.append(rec)
            log({"event": "bench", **rec})
    base = {r["mode"]: r["seconds"] for r in results if r["threads"] == 1}
    for r in results:
        r["speedup"] = round(base[r["mode"]] / r["seconds"], 3)
    report = {
        "case": {"height": h, "width": w, "kernel": k},
        "cpu_count": _usable_cores(),
        "results": results,
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        return _done({"report": str(args.out)})
    print(text, end="")
    return _done({"report": "-"})


# Entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="focalforge",
        description="space-variant defocus synthesis and blur/semantics estimation",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a corpus to disk")
    sp.add_argument("--manifest", default=None, help="source manifest (datagen JSONL)")
    sp.add_argument("--toy", action="store_true", help="render built-in synthetic scenes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--only-split", choices=("train", "val", "test"), default=None)
    sp.add_argument("--group", type=int, choices=range(1, 6), default=None)
    sp.add_argument("--count", type=int, default=200, help="scene count for --toy")
    sp.add_argument("--lr-size", type=int, default=96, help="LR side length for --toy")
    sp.add_argument("--val-count", type=int, default=40, help="held-out scenes for --toy")
    _add_common(sp)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("train", help="train the estimation network")
    sp.add_argument("--manifest", required=True, help="synth-output manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--ablate-gia", action="store_true")
    sp.add_argument("--ablate-aux", action="store_true")
    sp.add_argument("--single-task", choices=("blur", "seg"), default=None)
    _add_common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", default="val")
    sp.add_argument("--out", default=None, help="write the JSON report here")
    _add_common(sp)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("estimate", help="predict blur and labels for one image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp, config=False)
    sp.set_defaults(fn=cmd_estimate)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    sp.add_argument("--module", choices=("ops", "gia", "cmos"), default=None)
    _add_common(sp, config=False)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("bench", help="time the blur engine at spec sizes")
    sp.add_argument("--out", default=None, help="write the JSON report here")
    sp.add_argument("--thread-counts", default="1,2,4")
    sp.add_argument("--repeats", type=int, default=2)
    _add_common(sp)
    sp.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
