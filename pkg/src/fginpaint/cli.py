"""Command-line entry point: ``fginpaint {synth,train,infer,eval,inspect-ckpt}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import config_hash, load_config, parse_overrides
from .datakit import (
    REGIMES,
    SceneDataset,
    load_mask_png,
    load_png,
    read_dataset,
    save_png,
    scenes_from_samples,
    write_dataset,
)
from .errors import ConfigError, FGInpaintError

log = logging.getLogger("fginpaint")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
PHASES = ("contour", "image-pretrain", "image-finetune", "joint")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _cfg(args):
    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, args.profile, overrides)


def _emit(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args):
    cfg = _cfg(args)
    out = Path(args.out or cfg.paths.data_dir)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} exists and is not empty; pass --force to overwrite")
    n = args.n or cfg.data.n_images
    scenes = SceneDataset.synthesize(cfg.scene, n, cfg.seed, cfg.data.sobel_threshold)
    rng = np.random.default_rng([cfg.seed, 7])
    samples = []
    for i in range(n):
        regime = args.regime
        if regime == "mixed":
            regime = "non_overlap" if rng.random() < cfg.data.non_overlap_prob else "overlap"
        samples.append(scenes.sample(i, cfg.brush, regime, int(rng.integers(2**31))))
    meta = {"config_hash": config_hash(cfg), "seed": cfg.seed, "n": n, "regime": args.regime,
            "config": cfg.to_dict()}
    write_dataset(out, samples, meta)
    _emit({"dataset": str(out), "n": n, "config_hash": meta["config_hash"], "seed": cfg.seed})


# ---------------------------------------------------------------------------
# train

def _source(cfg, data_dir):
    from .trainer import SceneSource, scene_source

    if data_dir:
        scenes = scenes_from_samples(read_dataset(data_dir))
        return SceneSource(scenes, cfg.brush, cfg.data.non_overlap_prob)
    return scene_source(cfg)


def cmd_train(args):
    from .trainer import ContourTrainer, ImageTrainer, JointTrainer, resume_trainer

    cfg = _cfg(args)
    out = Path(args.out or Path(cfg.paths.ckpt_dir) / f"{args.phase}.ckpt")
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    diag = Path(str(out) + ".diverged")
    if args.phase == "joint" and not args.resume and not (args.contour_ckpt and args.image_ckpt):
        raise UsageError("--phase joint needs --contour-ckpt and --image-ckpt")
    if args.phase == "image-finetune" and args.init is None and not args.resume:
        log.warning("image-finetune without --init: starting from a fresh contour-guided model")

    if args.resume:
        ckpt = load_checkpoint(args.resume)
        source = _source(load_config_from_ckpt(ckpt), args.data)
        trainer = resume_trainer(ckpt, source, log_path=log_path)
        trainer.diag_path = diag
    else:
        source = _source(cfg, args.data)
        if args.phase == "contour":
            trainer = ContourTrainer(cfg, source, log_path=log_path, diag_path=diag)
        elif args.phase == "image-pretrain":
            trainer = ImageTrainer(cfg, source, use_contour=False, log_path=log_path, diag_path=diag)
        elif args.phase == "image-finetune":
            trainer = ImageTrainer(cfg, source, use_contour=True, log_path=log_path, diag_path=diag)
            if args.init:
                trainer.init_from(load_checkpoint(args.init))
        else:
            trainer = JointTrainer(cfg, source, load_checkpoint(args.contour_ckpt),
                                   load_checkpoint(args.image_ckpt), args.mode, log_path=log_path,
                                   diag_path=diag)
    target = args.steps if args.steps is not None else trainer.cfg.schedule.total_steps
    every = args.save_every or max(target, 1)
    while trainer.step < target:
        trainer.run(min(every, target - trainer.step))
        trainer.save(out)
    if not out.exists():
        trainer.save(out)
    _emit({"checkpoint": str(out), "kind": trainer.kind, "step": trainer.step,
           "config_hash": config_hash(trainer.cfg), "seed": trainer.seed})


def load_config_from_ckpt(ckpt):
    from .config import from_dict

    return from_dict(ckpt.meta["config"])


# ---------------------------------------------------------------------------
# infer

def cmd_infer(args):
    from .pipeline import CleanupConfig, border_contrast_detector, external_detector, infer, overlay

    cfg = _cfg(args)
    image = load_png(args.image, 3)
    hole = load_mask_png(args.hole)
    if hole.shape != image.shape[:2]:
        raise UsageError(f"hole {hole.shape} and image {image.shape[:2]} sizes differ")
    if image.shape[0] % 4 or image.shape[1] % 4:
        raise UsageError("image height and width must be multiples of 4")
    image_in = image * (1 - hole)[..., None]
    detector = external_detector(args.seg) if args.seg else border_contrast_detector()
    threshold = args.sobel_threshold if args.sobel_threshold is not None else cfg.data.sobel_threshold
    cleanup = CleanupConfig(args.min_component_size, cfg.cleanup.connectivity)
    contour_ckpt = load_checkpoint(args.contour_ckpt) if args.contour_ckpt else None
    image_ckpt = load_checkpoint(args.image_ckpt)
    if contour_ckpt is None and image_ckpt.has("contour_g"):
        contour_ckpt = image_ckpt  # joint checkpoints carry both generators
    res = infer(image_in, hole, detector, contour_ckpt, image_ckpt, threshold, cleanup)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"completed": "completed.png", "contour_in": "contour_in.png", "contour": "contour.png",
             "overlay": "overlay.png", "seg": "seg.png"}
    save_png(out / files["completed"], res.image)
    save_png(out / files["contour_in"], res.contour_in)
    save_png(out / files["contour"], res.contour)
    save_png(out / files["overlay"], overlay(res.image, res.contour))
    save_png(out / files["seg"], res.seg)
    prov = {"files": files, "detector": detector.name, "provenance": detector.provenance,
            "image_ckpt": {"path": str(args.image_ckpt), "config_hash": image_ckpt.meta.get("config_hash"),
                           "seed": image_ckpt.meta.get("seed")}}
    if contour_ckpt is not None:
        prov["contour_ckpt"] = {"path": str(args.contour_ckpt or args.image_ckpt), "config_hash": contour_ckpt.meta.get("config_hash"),
                                "seed": contour_ckpt.meta.get("seed")}
    (out / "infer.json").write_text(json.dumps(prov, indent=1, sort_keys=True) + "\n")
    _emit({"out_dir": str(out), **files})


# ---------------------------------------------------------------------------
# eval

def _model_spec(text):
    from .evalkit import ORACLE, ModelSpec

    if text == ORACLE:
        return ModelSpec(ORACLE, ORACLE)
    if "=" not in text:
        raise UsageError(f"model {text!r} is not 'oracle' or TAG=CKPT[,CKPT]")
    tag, paths = text.split("=", 1)
    spec = ModelSpec(tag)
    for p in paths.split(","):
        ckpt = load_checkpoint(p)
        if ckpt.has("image_g"):
            spec.image = ckpt
        if ckpt.has("contour_g"):
            spec.contour = ckpt
    if spec.image is None:
        raise UsageError(f"model {tag!r}: no image generator among {paths}")
    return spec


def cmd_eval(args):
    from .evalkit import evaluate

    cfg = _cfg(args)
    specs = [_model_spec(m) for m in args.models]
    if args.data:
        scenes = scenes_from_samples(read_dataset(args.data))
        dataset_tag = str(args.data)
    else:
        scenes = SceneDataset.synthesize(cfg.scene, args.n_images or cfg.data.n_test, cfg.seed,
                                         cfg.data.sobel_threshold)
        dataset_tag = f"synthetic-seed{cfg.seed}"
    if args.n_images and len(scenes) > args.n_images:
        scenes = replace(scenes, images=scenes.images[:args.n_images], segs=scenes.segs[:args.n_images],
                         contours=scenes.contours[:args.n_images], ids=scenes.ids[:args.n_images])
    out = Path(args.out_dir or cfg.paths.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for spec in specs:
        rep = evaluate(spec, scenes, args.regimes, cfg.brush, seed=cfg.seed, dataset_tag=dataset_tag,
                       sobel_threshold=cfg.data.sobel_threshold,
                       meta={"config_hash": config_hash(cfg)})
        rep.to_csv(out / f"report_{spec.tag}.csv")
        rep.to_json(out / f"report_{spec.tag}.json")
        summary[spec.tag] = rep.summary()
    _emit({"reports": str(out), "means": summary})


# ---------------------------------------------------------------------------
# inspect-ckpt

def cmd_inspect(args):
    ckpt = load_checkpoint(args.path)
    meta = ckpt.meta
    info = {k: meta.get(k) for k in ("kind", "step", "seed", "config_hash", "package_version", "curriculum",
                                     "model", "joint_mode")
            if k in meta}
    groups = {}
    for name, arr in ckpt.arrays.items():
        head = name.split("/")[0] if not name.startswith("optim/") else "/".join(name.split("/")[:2])
        g = groups.setdefault(head, {"arrays": 0, "values": 0})
        g["arrays"] += 1
        g["values"] += int(arr.size)
    info["groups"] = groups
    if args.arrays:
        info["arrays"] = {k: [str(v.dtype), list(v.shape)] for k, v in ckpt.arrays.items()}
    if args.config:
        info["config"] = meta.get("config")
    _emit(info)


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (default: $FGINPAINT_CONFIG)")
    common.add_argument("--profile", choices=("desk", "paper"))
    common.add_argument("--seed", type=int)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. optim.batch_size=4 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="fginpaint", description="Foreground-aware image inpainting toolkit")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--out", help="dataset directory (default: paths.data_dir)")
    p.add_argument("--n", type=_positive_int, help="number of samples (default: data.n_images)")
    p.add_argument("--regime", choices=(*REGIMES, "mixed"), default="mixed")
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="run a training phase")
    p.add_argument("--phase", choices=PHASES, required=True)
    p.add_argument("--data", help="dataset directory written by 'synth' (default: synthesize in memory)")
    p.add_argument("--steps", type=int, help="train until this step count (default: schedule.total_steps)")
    p.add_argument("--out", help="checkpoint path (default: <ckpt_dir>/<phase>.ckpt)")
    p.add_argument("--log", help="CSV training log (default: next to the checkpoint)")
    p.add_argument("--resume", help="continue from this checkpoint")
    p.add_argument("--init", help="image-finetune: pretrained image checkpoint")
    p.add_argument("--contour-ckpt", help="joint: contour checkpoint")
    p.add_argument("--image-ckpt", help="joint: contour-guided image checkpoint")
    p.add_argument("--mode", choices=("joint", "fixed_contour"), default="joint")
    p.add_argument("--save-every", type=_positive_int, help="checkpoint interval in steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="complete one image")
    p.add_argument("--image", required=True)
    p.add_argument("--hole", required=True, help="hole mask image (white = missing)")
    p.add_argument("--seg", help="foreground mask; default is a border-contrast heuristic")
    p.add_argument("--contour-ckpt")
    p.add_argument("--image-ckpt", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sobel-threshold", type=float)
    p.add_argument("--min-component-size", type=int)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="evaluate models on test scenes")
    p.add_argument("--models", nargs="+", required=True, metavar="MODEL",
                   help="'oracle' or TAG=CKPT[,CKPT] (image and, for guided models, contour)")
    p.add_argument("--data", help="dataset directory (default: synthesize test scenes)")
    p.add_argument("--n-images", type=_positive_int)
    p.add_argument("--regimes", nargs="+", choices=REGIMES, default=list(REGIMES))
    p.add_argument("--out-dir", help="report directory (default: paths.report_dir)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-ckpt", help="print checkpoint metadata")
    p.add_argument("path")
    p.add_argument("--arrays", action="store_true", help="list every array")
    p.add_argument("--config", action="store_true", help="include the embedded config")
    p.set_defaults(func=cmd_inspect, verbose=False)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"fginpaint {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FGInpaintError, OSError) as exc:
        print(f"fginpaint {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
