"""Guided-vs-unguided trend experiment.

For each seed: train the contour module, a contour-guided image module
(teacher-forced on ground-truth contours) and an unguided image module, all
on the same scenes, batches and step budget. Then evaluate both pipelines on
held-out scenes in both hole regimes and compare test-set L1.

Every run saves a partial checkpoint every ``save_every`` steps and resumes
from it, so the experiment can be interrupted and restarted freely. Results
are cached in ``results.json`` together with a hash of the protocol.

    python -m fginpaint.experiments --work-dir runs/trend
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import time
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import RunConfig, config_hash, load_config
from .datakit import REGIMES, SceneDataset
from .evalkit import ModelSpec, evaluate
from .trainer import ContourTrainer, ImageTrainer, resume_trainer, scene_source

log = logging.getLogger(__name__)

TREND_SEEDS = (0, 1, 2)
TEST_SEED_OFFSET = 1_000_000
RESULTS = "results.json"


def protocol(cfg: RunConfig, seeds=TREND_SEEDS, steps=None, n_test=None):
    steps = cfg.schedule.total_steps if steps is None else steps
    n_test = cfg.data.n_test if n_test is None else n_test
    p = {"config_hash": config_hash(replace(cfg, seed=0)), "seeds": list(seeds), "steps": steps,
         "n_test": n_test, "n_images": cfg.data.n_images, "test_seed_offset": TEST_SEED_OFFSET,
         "regimes": list(REGIMES)}
    p["hash"] = hashlib.sha256(json.dumps(p, sort_keys=True).encode()).hexdigest()[:16]
    return p


def _trim_log(path: Path, upto_step):
    """Drop log rows at or beyond ``upto_step`` (they will be replayed)."""
    if not path.exists():
        return
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    fields = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        if fields:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(r for r in rows if int(r["step"]) < upto_step)


def train_resumable(make_trainer, source, out_dir: Path, name, steps, save_every=500):
    """Train to ``steps`` with periodic partial checkpoints; returns the final checkpoint."""
    final, partial = out_dir / f"{name}.ckpt", out_dir / f"{name}.partial.ckpt"
    log_path = out_dir / f"{name}.log.csv"
    if final.exists():
        return load_checkpoint(final)
    out_dir.mkdir(parents=True, exist_ok=True)
    if partial.exists():
        ckpt = load_checkpoint(partial)
        _trim_log(log_path, ckpt.meta["step"])
        trainer = resume_trainer(ckpt, source, log_path=log_path)
        log.info("%s: resuming at step %d", name, trainer.step)
    else:
        log_path.unlink(missing_ok=True)
        trainer = make_trainer(log_path)
    t0 = time.time()
    while trainer.step < steps:
        start = trainer.step
        trainer.run(min(save_every, steps - trainer.step))
        trainer.save(partial)
        rate = (time.time() - t0) / max(trainer.step - start, 1)
        t0 = time.time()
        log.info("%s: step %d/%d (%.2f s/step)", name, trainer.step, steps, rate)
    trainer.save(final)
    partial.unlink(missing_ok=True)
    return load_checkpoint(final)


def run_seed(cfg: RunConfig, seed, work_dir, steps=None, n_test=None, save_every=500):
    steps = cfg.schedule.total_steps if steps is None else steps
    n_test = cfg.data.n_test if n_test is None else n_test
    cfg = replace(cfg, seed=seed)
    out = Path(work_dir) / f"seed{seed}"
    scenes = SceneDataset.synthesize(cfg.scene, cfg.data.n_images, seed, cfg.data.sobel_threshold)
    src = scene_source(cfg, scenes)

    contour = train_resumable(lambda lp: ContourTrainer(cfg, src, log_path=lp), src, out, "contour", steps,
                              save_every)
    guided = train_resumable(lambda lp: ImageTrainer(cfg, src, True, log_path=lp), src, out, "image_guided",
                             steps, save_every)
    unguided = train_resumable(lambda lp: ImageTrainer(cfg, src, False, log_path=lp), src, out,
                               "image_unguided", steps, save_every)

    test = SceneDataset.synthesize(cfg.scene, n_test, TEST_SEED_OFFSET + seed, cfg.data.sobel_threshold)
    result = {"seed": seed}
    for tag, spec in (("guided", ModelSpec("guided", guided, contour)),
                      ("unguided", ModelSpec("unguided", unguided))):
        report = evaluate(spec, test, REGIMES, cfg.brush, seed=seed, dataset_tag=f"synthetic-test-{seed}",
                          sobel_threshold=cfg.data.sobel_threshold, meta={"config_hash": config_hash(cfg)})
        report.to_json(out / f"report_{tag}.json")
        report.to_csv(out / f"report_{tag}.csv")
        result[tag] = {k: v["l1"] for k, v in report.summary().items()}
    result["guided_better"] = result["guided"]["all"] < result["unguided"]["all"]
    return result


def run_trend(cfg: RunConfig | None = None, work_dir="runs/trend", seeds=TREND_SEEDS, steps=None, n_test=None,
              save_every=500):
    cfg = cfg or load_config()
    proto = protocol(cfg, seeds, steps, n_test)
    cached = load_trend_results(work_dir, proto)
    if cached is not None:
        return cached
    per_seed = [run_seed(cfg, s, work_dir, steps, n_test, save_every) for s in seeds]
    wins = sum(r["guided_better"] for r in per_seed)
    results = {"protocol": proto, "seeds": per_seed, "guided_wins": wins, "passed": wins >= 2}
    Path(work_dir).mkdir(parents=True, exist_ok=True)
    (Path(work_dir) / RESULTS).write_text(json.dumps(results, indent=1, sort_keys=True) + "\n")
    return results


def load_trend_results(work_dir, proto):
    path = Path(work_dir) / RESULTS
    if not path.exists():
        return None
    results = json.loads(path.read_text())
    return results if results.get("protocol", {}).get("hash") == proto["hash"] else None


def main(argv=None):
    ap = argparse.ArgumentParser(description="guided vs unguided trend experiment")
    ap.add_argument("--work-dir", default="runs/trend")
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(TREND_SEEDS))
    ap.add_argument("--steps", type=int)
    ap.add_argument("--n-test", type=int)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    results = run_trend(load_config(args.config), args.work_dir, tuple(args.seeds), args.steps, args.n_test)
    print(json.dumps({k: v for k, v in results.items() if k != "protocol"}, indent=1))
    return 0 if results["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
