"""Curriculum GAN training for the contour and image modules.

Each trainer owns its networks, Adam optimizers, a numpy ``Generator`` that
drives batch and hole sampling, and a step counter. Its whole state
serializes into a :class:`~fginpaint.checkpoint.Checkpoint`; loading it back
and continuing reproduces the uninterrupted loss trajectory.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash, from_dict
from .contour_completion import (
    ContourGenerator,
    contour_content_loss,
    contour_d_loss,
    contour_g_adv_loss,
    contour_pair,
    make_contour_discriminator,
)
from .datakit import SceneDataset, TrainingSample
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .image_completion import (
    ImageGenerator,
    composite,
    image_adv_losses,
    image_content_loss,
    image_pair,
    make_image_discriminator,
)
from .nnblocks import first_layer_prefixes

log = logging.getLogger(__name__)

STAGE_ADV_WEIGHTS = {1: 0.0, 2: 0.01, 3: 1.0}
JOINT_MODES = ("fixed_contour", "joint")


# ---------------------------------------------------------------------------
# curriculum

@dataclass(frozen=True)
class CurriculumState:
    stage: int
    content_weight: float
    adv_weight: float
    step: int
    stage_boundaries: tuple[int, int]


def curriculum_stage(step, stage_boundaries):
    first, second = stage_boundaries
    if step < first:
        return 1
    if step < second:
        return 2
    return 3


def curriculum_weights(step, stage_boundaries=(3000, 6000)):
    """Content-only, then adversarial at 0.01 : 1, then 1 : 1."""
    return 1.0, STAGE_ADV_WEIGHTS[curriculum_stage(step, stage_boundaries)]


def curriculum_state(step, stage_boundaries):
    cw, aw = curriculum_weights(step, stage_boundaries)
    return CurriculumState(curriculum_stage(step, stage_boundaries), cw, aw, step, tuple(stage_boundaries))


# ---------------------------------------------------------------------------
# batches

@dataclass
class Batch:
    image: torch.Tensor
    seg: torch.Tensor
    contour_gt: torch.Tensor
    hole: torch.Tensor
    image_in: torch.Tensor
    contour_in: torch.Tensor


def collate(samples: list[TrainingSample]) -> Batch:
    def grid(name):
        return torch.from_numpy(np.stack([getattr(s, name) for s in samples])[:, None].astype(np.float32))

    image = torch.from_numpy(np.stack([s.image for s in samples]).transpose(0, 3, 1, 2).copy())
    image_in = torch.from_numpy(np.stack([s.image_in for s in samples]).transpose(0, 3, 1, 2).copy())
    return Batch(image, grid("seg"), grid("contour_gt"), grid("hole"), image_in, grid("contour_in"))


class SceneSource:
    """Random scenes with a freshly sampled hole per draw."""

    def __init__(self, scenes: SceneDataset, brush, non_overlap_prob=0.5):
        self.scenes = scenes
        self.brush = brush
        self.non_overlap_prob = non_overlap_prob

    def draw(self, rng, batch_size):
        samples = []
        for _ in range(batch_size):
            idx = int(rng.integers(len(self.scenes)))
            regime = "non_overlap" if rng.random() < self.non_overlap_prob else "overlap"
            samples.append(self.scenes.sample(idx, self.brush, regime, int(rng.integers(2**31))))
        return collate(samples)


class FixedSource:
    """Draws from a fixed list of samples (holes included)."""

    def __init__(self, samples):
        self.samples = list(samples)

    def draw(self, rng, batch_size):
        return collate([self.samples[int(rng.integers(len(self.samples)))] for _ in range(batch_size)])


def scene_source(cfg: RunConfig, scenes=None, seed=None):
    if scenes is None:
        scenes = SceneDataset.synthesize(cfg.scene, cfg.data.n_images, cfg.seed if seed is None else seed,
                                         cfg.data.sobel_threshold)
    return SceneSource(scenes, cfg.brush, cfg.data.non_overlap_prob)


# ---------------------------------------------------------------------------
# state (de)serialization helpers

def _module_arrays(prefix, module):
    return {f"{prefix}/{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def _load_module(module, arrays, prefix):
    sd = module.state_dict()
    missing = [k for k in sd if f"{prefix}/{k}" not in arrays]
    if missing:
        raise CheckpointError(f"checkpoint lacks {prefix} entries: {missing[:3]}...")
    new = {}
    for k, v in sd.items():
        arr = arrays[f"{prefix}/{k}"]
        if tuple(arr.shape) != tuple(v.shape):
            raise CheckpointError(f"{prefix}/{k}: shape {arr.shape} does not match model {tuple(v.shape)}")
        new[k] = torch.from_numpy(arr.copy())
    module.load_state_dict(new)


def _optim_arrays(prefix, opt, module):
    out = {}
    names = {id(p): n for n, p in module.named_parameters()}
    for group in opt.param_groups:
        for p in group["params"]:
            st = opt.state.get(p)
            if not st:
                continue
            name = names[id(p)]
            for key in ("step", "exp_avg", "exp_avg_sq"):
                val = st[key]
                val = val if torch.is_tensor(val) else torch.tensor(float(val))
                out[f"{prefix}/{name}/{key}"] = val.detach().cpu().numpy().copy()
    return out


def _load_optim(opt, module, arrays, prefix):
    sd = opt.state_dict()
    state = {}
    for i, (name, _) in enumerate(module.named_parameters()):
        key = f"{prefix}/{name}"
        if f"{key}/exp_avg" in arrays:
            state[i] = {k: torch.from_numpy(arrays[f"{key}/{k}"].copy()) for k in ("step", "exp_avg", "exp_avg_sq")}
    sd["state"] = state
    opt.load_state_dict(sd)


def _make_adam(params, cfg: RunConfig):
    o = cfg.optim
    return torch.optim.Adam(params, lr=o.learning_rate, betas=(o.beta1, o.beta2))


def configure_torch(deterministic=True):
    torch.set_flush_denormal(True)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True, warn_only=True)


def _finite(*values):
    return all(math.isfinite(float(v.detach()) if torch.is_tensor(v) else float(v)) for v in values)


def _set_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)


# ---------------------------------------------------------------------------
# trainers

class BaseTrainer:
    kind = "base"
    log_fields: tuple = ()
    nets: tuple = ()

    def __init__(self, cfg: RunConfig, source, seed=None, log_path=None, diag_path=None):
        cfg.validate()
        configure_torch(cfg.deterministic)
        self.cfg = cfg
        self.source = source
        self.seed = cfg.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        torch.manual_seed(self.seed)
        self.step = 0
        self.log_path = Path(log_path) if log_path else None
        self.diag_path = Path(diag_path) if diag_path else None
        self.history: list[dict] = []

    # subclasses provide self.modules: dict name -> nn.Module, self.optims: dict name -> (opt, module)

    @property
    def curriculum(self):
        return curriculum_state(self.step, self.cfg.schedule.stage_boundaries)

    def train_step(self) -> dict:
        raise NotImplementedError

    def run(self, steps=None, callback=None):
        """Run ``steps`` more steps (default: up to ``schedule.total_steps``)."""
        if steps is None:
            steps = max(self.cfg.schedule.total_steps - self.step, 0)
        rows = []
        for _ in range(steps):
            row = self.train_step()
            rows.append(row)
            self.history.append(row)
            self._append_log(row)
            if callback:
                callback(self, row)
        return rows

    def _row(self, losses):
        st = self.curriculum
        row = {"step": self.step, "stage": st.stage, "content_weight": st.content_weight,
               "adv_weight": st.adv_weight}
        row.update({k: float(v.detach() if torch.is_tensor(v) else v) for k, v in losses.items()})
        return row

    def _check(self, losses):
        if not _finite(*losses.values()):
            path = None
            if self.diag_path is not None:
                path = save_checkpoint(self.diag_path, self.checkpoint(extra_meta={"diverged": True}))
            raise TrainingDivergedError(
                f"non-finite loss at step {self.step}: " + ", ".join(f"{k}={float(v.detach() if torch.is_tensor(v) else v):.4g}" for k, v in losses.items()),
                checkpoint_path=path,
            )

    def _append_log(self, row):
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.log_path.exists() or self.log_path.stat().st_size == 0
        with open(self.log_path, "a", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(row))
            if new:
                writer.writeheader()
            writer.writerow(row)

    # -- persistence -------------------------------------------------------

    def model_meta(self):
        return {}

    def checkpoint(self, extra_meta=None) -> Checkpoint:
        arrays = {}
        for name, module in self.modules.items():
            arrays.update(_module_arrays(name, module))
        for name, (opt, module) in self.optims.items():
            arrays.update(_optim_arrays(f"optim/{name}", opt, module))
        arrays["rng/torch"] = torch.get_rng_state().numpy().copy()
        st = self.curriculum
        meta = {
            "kind": self.kind,
            "package_version": __version__,
            "step": self.step,
            "seed": self.seed,
            "config": self.cfg.to_dict(),
            "config_hash": config_hash(self.cfg),
            "curriculum": {**asdict(st), "stage_boundaries": list(st.stage_boundaries)},
            "rng": self.rng.bit_generator.state,
            "model": self.model_meta(),
        }
        meta.update(extra_meta or {})
        return Checkpoint(meta, arrays)

    def save(self, path, extra_meta=None):
        return save_checkpoint(path, self.checkpoint(extra_meta))

    def restore(self, ckpt: Checkpoint):
        if ckpt.meta.get("kind") != self.kind:
            raise CheckpointError(f"checkpoint kind {ckpt.meta.get('kind')!r} != trainer kind {self.kind!r}")
        for name, module in self.modules.items():
            _load_module(module, ckpt.arrays, name)
        for name, (opt, module) in self.optims.items():
            _load_optim(opt, module, ckpt.arrays, f"optim/{name}")
        torch.set_rng_state(torch.from_numpy(ckpt.arrays["rng/torch"].copy()))
        self.rng.bit_generator.state = ckpt.meta["rng"]
        self.step = int(ckpt.meta["step"])
        self.seed = ckpt.meta["seed"]
        return self


class ContourTrainer(BaseTrainer):
    kind = "contour"

    def __init__(self, cfg: RunConfig, source, seed=None, log_path=None, diag_path=None):
        super().__init__(cfg, source, seed, log_path, diag_path)
        m = cfg.model
        self.generator = ContourGenerator(m.width, m.softmax_scale)
        self.discriminator = make_contour_discriminator(m.width, m.disc_base_channels, m.disc_layers)
        self.opt_g = _make_adam(self.generator.parameters(), cfg)
        self.opt_d = _make_adam(self.discriminator.parameters(), cfg)
        self.modules = {"contour_g": self.generator, "contour_d": self.discriminator}
        self.optims = {"contour_g": (self.opt_g, self.generator), "contour_d": (self.opt_d, self.discriminator)}

    def model_meta(self):
        return {"width": self.cfg.model.width, "softmax_scale": self.cfg.model.softmax_scale}

    def train_step(self):
        cw, aw = curriculum_weights(self.step, self.cfg.schedule.stage_boundaries)
        b = self.source.draw(self.rng, self.cfg.optim.batch_size)
        g, d = self.generator.train(), self.discriminator.train()
        out = g(b.image_in, b.contour_in, b.hole)

        scores = d(torch.cat([contour_pair(b.image, b.contour_gt), contour_pair(b.image, out.refined.detach())]))
        d_real, d_fake = scores.chunk(2)
        d_loss = contour_d_loss(d_real, d_fake)
        self._check({"d_loss": d_loss})
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        content = contour_content_loss(out, b.contour_gt, b.hole, self.cfg.contour_loss)
        _set_grad(d, False)
        if aw > 0:
            g_adv = contour_g_adv_loss(d(contour_pair(b.image, out.refined), update_sn=False))
            total = cw * content + aw * g_adv
        else:
            with torch.no_grad():
                g_adv = contour_g_adv_loss(d(contour_pair(b.image, out.refined), update_sn=False))
            total = cw * content
        _set_grad(d, True)
        losses = {"content_loss": content, "g_adv_loss": g_adv, "d_loss": d_loss, "g_total": total}
        self._check(losses)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        row = self._row(losses)
        self.step += 1
        return row


class ImageTrainer(BaseTrainer):
    """Image module trainer; contour-guided generators are teacher-forced on C_gt."""

    kind = "image"

    def __init__(self, cfg: RunConfig, source, use_contour=True, seed=None, log_path=None, diag_path=None):
        super().__init__(cfg, source, seed, log_path, diag_path)
        m = cfg.model
        self.use_contour = use_contour
        self.generator = ImageGenerator(use_contour, m.width, m.softmax_scale)
        self.discriminator = make_image_discriminator(m.width, m.disc_base_channels, m.disc_layers)
        self._make_optims()

    def _make_optims(self):
        self.opt_g = _make_adam(self.generator.parameters(), self.cfg)
        self.opt_d = _make_adam(self.discriminator.parameters(), self.cfg)
        self.modules = {"image_g": self.generator, "image_d": self.discriminator}
        self.optims = {"image_g": (self.opt_g, self.generator), "image_d": (self.opt_d, self.discriminator)}

    def model_meta(self):
        return {"use_contour": self.use_contour, "width": self.cfg.model.width,
                "softmax_scale": self.cfg.model.softmax_scale}

    def init_from(self, ckpt: Checkpoint):
        """Copy pretrained weights, re-initializing first layers whose input width changed."""
        _transfer_image_weights(self.generator, ckpt.subset("image_g"))
        if ckpt.has("image_d"):
            _load_module(self.discriminator, ckpt.arrays, "image_d")
        return self

    def train_step(self):
        cw, aw = curriculum_weights(self.step, self.cfg.schedule.stage_boundaries)
        b = self.source.draw(self.rng, self.cfg.optim.batch_size)
        g, d = self.generator.train(), self.discriminator.train()
        out = g(b.image_in, b.contour_gt if self.use_contour else None, b.hole)
        fake = composite(out.refined, b.image_in, b.hole)

        scores = d(torch.cat([image_pair(b.image, b.hole), image_pair(fake.detach(), b.hole)]))
        d_real, d_fake = scores.chunk(2)
        d_loss, _ = image_adv_losses(d_real, d_fake)
        self._check({"d_loss": d_loss})
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        content = image_content_loss(out, b.image)
        _set_grad(d, False)
        if aw > 0:
            g_adv = -d(image_pair(fake, b.hole), update_sn=False).mean()
            total = cw * content + aw * g_adv
        else:
            with torch.no_grad():
                g_adv = -d(image_pair(fake, b.hole), update_sn=False).mean()
            total = cw * content
        _set_grad(d, True)
        losses = {"content_loss": content, "g_adv_loss": g_adv, "d_loss": d_loss, "g_total": total}
        self._check(losses)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        row = self._row(losses)
        self.step += 1
        return row


class JointTrainer(BaseTrainer):
    """Fine-tunes the image module on predicted contours.

    ``mode="joint"`` also updates the contour module, with image losses
    back-propagating through the soft refined contour; ``"fixed_contour"``
    freezes it.
    """

    kind = "joint"

    def __init__(self, cfg: RunConfig, source, contour_ckpt: Checkpoint, image_ckpt: Checkpoint,
                 mode="joint", seed=None, log_path=None, diag_path=None):
        if mode not in JOINT_MODES:
            raise ConfigError(f"mode must be one of {JOINT_MODES}")
        super().__init__(cfg, source, seed, log_path, diag_path)
        self.mode = mode
        self.contour_g = build_contour_generator(contour_ckpt)
        self.contour_d = make_contour_discriminator(cfg.model.width, cfg.model.disc_base_channels,
                                                    cfg.model.disc_layers)
        if contour_ckpt.has("contour_d"):
            _load_module(self.contour_d, contour_ckpt.arrays, "contour_d")
        self.image_g = build_image_generator(image_ckpt)
        if not self.image_g.use_contour:
            raise CheckpointError("joint fine-tuning needs a contour-guided image checkpoint")
        self.image_d = make_image_discriminator(cfg.model.width, cfg.model.disc_base_channels, cfg.model.disc_layers)
        if image_ckpt.has("image_d"):
            _load_module(self.image_d, image_ckpt.arrays, "image_d")
        self.modules = {"contour_g": self.contour_g, "contour_d": self.contour_d,
                        "image_g": self.image_g, "image_d": self.image_d}
        self.optims = {"image_g": (_make_adam(self.image_g.parameters(), cfg), self.image_g),
                       "image_d": (_make_adam(self.image_d.parameters(), cfg), self.image_d)}
        if mode == "joint":
            self.optims["contour_g"] = (_make_adam(self.contour_g.parameters(), cfg), self.contour_g)
            self.optims["contour_d"] = (_make_adam(self.contour_d.parameters(), cfg), self.contour_d)
        else:
            _set_grad(self.contour_g, False)

    def model_meta(self):
        return {"use_contour": True, "width": self.cfg.model.width,
                "softmax_scale": self.cfg.model.softmax_scale, "mode": self.mode}

    def checkpoint(self, extra_meta=None):
        return super().checkpoint({"joint_mode": self.mode, **(extra_meta or {})})

    def train_step(self):
        cw, aw = curriculum_weights(self.step, self.cfg.schedule.stage_boundaries)
        b = self.source.draw(self.rng, self.cfg.optim.batch_size)
        joint = self.mode == "joint"
        opt = {k: v[0] for k, v in self.optims.items()}

        with torch.set_grad_enabled(joint):
            c_out = self.contour_g(b.image_in, b.contour_in, b.hole)
        c_cond = b.hole * c_out.refined + (1 - b.hole) * b.contour_in
        i_out = self.image_g(b.image_in, c_cond, b.hole)
        fake = composite(i_out.refined, b.image_in, b.hole)

        scores = self.image_d(torch.cat([image_pair(b.image, b.hole), image_pair(fake.detach(), b.hole)]))
        d_img, _ = image_adv_losses(*scores.chunk(2))
        losses = {"d_image": d_img}
        d_total = d_img
        if joint:
            cs = self.contour_d(torch.cat([contour_pair(b.image, b.contour_gt),
                                           contour_pair(b.image, c_out.refined.detach())]))
            d_con = contour_d_loss(*cs.chunk(2))
            losses["d_contour"] = d_con
            d_total = d_total + d_con
        self._check(losses)
        for k in ("image_d", "contour_d"):
            if k in opt:
                opt[k].zero_grad(set_to_none=True)
        d_total.backward()
        for k in ("image_d", "contour_d"):
            if k in opt:
                opt[k].step()

        _set_grad(self.image_d, False)
        _set_grad(self.contour_d, False)
        content_i = image_content_loss(i_out, b.image)
        adv_i = -self.image_d(image_pair(fake, b.hole), update_sn=False).mean()
        total = cw * content_i + aw * adv_i
        losses.update(content_image=content_i, g_adv_image=adv_i)
        if joint:
            content_c = contour_content_loss(c_out, b.contour_gt, b.hole, self.cfg.contour_loss)
            adv_c = contour_g_adv_loss(self.contour_d(contour_pair(b.image, c_out.refined), update_sn=False))
            total = total + cw * content_c + aw * adv_c
            losses.update(content_contour=content_c, g_adv_contour=adv_c)
        _set_grad(self.image_d, True)
        _set_grad(self.contour_d, True)
        losses["g_total"] = total
        self._check(losses)
        for k in ("image_g", "contour_g"):
            if k in opt:
                opt[k].zero_grad(set_to_none=True)
        total.backward()
        for k in ("image_g", "contour_g"):
            if k in opt:
                opt[k].step()
        row = self._row(losses)
        self.step += 1
        return row


# ---------------------------------------------------------------------------
# building generators from checkpoints

def _model_cfg(ckpt: Checkpoint):
    return from_dict(ckpt.meta["config"]).model


def build_contour_generator(ckpt: Checkpoint) -> ContourGenerator:
    if not ckpt.has("contour_g"):
        raise CheckpointError("checkpoint holds no contour generator")
    m = _model_cfg(ckpt)
    g = ContourGenerator(m.width, m.softmax_scale)
    _load_module(g, ckpt.arrays, "contour_g")
    return g.eval()


def build_image_generator(ckpt: Checkpoint) -> ImageGenerator:
    if not ckpt.has("image_g"):
        raise CheckpointError("checkpoint holds no image generator")
    m = _model_cfg(ckpt)
    g = ImageGenerator(bool(ckpt.meta["model"].get("use_contour", True)), m.width, m.softmax_scale)
    _load_module(g, ckpt.arrays, "image_g")
    return g.eval()


def _transfer_image_weights(generator, arrays):
    """Copy ``arrays`` into ``generator``; first layers with a new input width keep their fresh init."""
    sd = generator.state_dict()
    extra = set(arrays) - set(sd)
    if extra:
        raise CheckpointError(f"pretrained weights have unknown entries: {sorted(extra)[:3]}")
    prefixes = first_layer_prefixes()
    reinit_layers = set()
    for name, value in sd.items():
        if name not in arrays:
            raise CheckpointError(f"pretrained weights lack {name}")
        if tuple(arrays[name].shape) != tuple(value.shape):
            prefix = next((p for p in prefixes if name.startswith(p)), None)
            if prefix is None:
                raise CheckpointError(f"incompatible pretrained parameter {name}: "
                                      f"{arrays[name].shape} vs {tuple(value.shape)}")
            reinit_layers.add(prefix)
    new = {}
    for name, value in sd.items():
        if any(name.startswith(p) for p in reinit_layers):
            new[name] = value
        else:
            new[name] = torch.from_numpy(arrays[name].copy())
    generator.load_state_dict(new)
    return sorted(reinit_layers)


# ---------------------------------------------------------------------------
# phase entry points

def _finish(trainer, steps, ckpt_path):
    trainer.run(steps)
    ckpt = trainer.checkpoint()
    if ckpt_path:
        save_checkpoint(ckpt_path, ckpt)
    return ckpt


def train_contour(source, cfg: RunConfig, steps=None, seed=None, ckpt_path=None, log_path=None):
    trainer = ContourTrainer(cfg, source, seed, log_path, _diag(ckpt_path))
    return _finish(trainer, steps, ckpt_path)


def train_image(source, cfg: RunConfig, init: Checkpoint | None = None, use_contour=True, steps=None,
                seed=None, ckpt_path=None, log_path=None):
    trainer = ImageTrainer(cfg, source, use_contour, seed, log_path, _diag(ckpt_path))
    if init is not None:
        trainer.init_from(init)
    return _finish(trainer, steps, ckpt_path)


def finetune_joint(contour_ckpt, image_ckpt, source, cfg: RunConfig, mode="joint", steps=None, seed=None,
                   ckpt_path=None, log_path=None):
    trainer = JointTrainer(cfg, source, contour_ckpt, image_ckpt, mode, seed, log_path, _diag(ckpt_path))
    return _finish(trainer, steps, ckpt_path)


def _diag(ckpt_path):
    return Path(str(ckpt_path) + ".diverged") if ckpt_path else None


def resume_trainer(path_or_ckpt, source, log_path=None):
    """Rebuild a trainer from a checkpoint written by :meth:`BaseTrainer.save`."""
    ckpt = path_or_ckpt if isinstance(path_or_ckpt, Checkpoint) else load_checkpoint(path_or_ckpt)
    cfg = from_dict(ckpt.meta["config"])
    kind = ckpt.meta.get("kind")
    if kind == "contour":
        trainer = ContourTrainer(cfg, source, log_path=log_path)
    elif kind == "image":
        trainer = ImageTrainer(cfg, source, bool(ckpt.meta["model"]["use_contour"]), log_path=log_path)
    elif kind == "joint":
        trainer = JointTrainer(cfg, source, ckpt, ckpt, ckpt.meta.get("joint_mode", "joint"), log_path=log_path)
    else:
        raise CheckpointError(f"cannot resume checkpoint of kind {kind!r}")
    return trainer.restore(ckpt)
