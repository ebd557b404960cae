"""End-to-end inference: detect, clean, extract the known contour, complete contour, complete image.

Arrays here are numpy in the datakit layout: images ``(H, W, 3)`` and maps
``(H, W)``, float32 in [0, 1], hole = 1 for missing pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import torch
from scipy import ndimage

from .checkpoint import Checkpoint, load_checkpoint
from .contour_completion import ContourGenerator
from .datakit import load_mask_png, make_incomplete_contour, sobel_contour
from .errors import CheckpointError, ConfigError, ContractError, DetectorError
from .image_completion import ImageGenerator

PROVENANCES = ("oracle", "oracle_noisy", "external")
DEFAULT_MIN_COMPONENT_FRAC = 0.001


# ---------------------------------------------------------------------------
# detectors

@dataclass(frozen=True)
class DetectorHandle:
    """A saliency detector: ``fn(image) -> seg`` plus a name and provenance tag."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"provenance must be one of {PROVENANCES}")

    def __call__(self, image):
        try:
            seg = np.asarray(self.fn(image), dtype=np.float32)
        except DetectorError:
            raise
        except Exception as exc:
            raise DetectorError(f"detector {self.name!r} failed: {exc}") from exc
        if seg.shape != image.shape[:2]:
            raise DetectorError(f"detector {self.name!r} returned shape {seg.shape}, expected {image.shape[:2]}")
        if not np.all((seg == 0) | (seg == 1)):
            raise DetectorError(f"detector {self.name!r} returned a non-binary mask")
        return seg


def oracle_detector(seg):
    """Returns the ground-truth segmentation regardless of the image."""
    seg = np.asarray(seg, dtype=np.float32)
    return DetectorHandle(lambda image: seg.copy(), "oracle", "oracle")


def noisy_segmentation(seg, hole, seed=0, flip_prob=0.002, n_blobs=3, blob_radius=(1.0, 3.0)):
    """``seg`` with sparse speckle flips plus spurious disks centred inside the hole."""
    rng = np.random.default_rng(seed)
    out = np.asarray(seg, dtype=bool).copy()
    h, w = out.shape
    out ^= rng.random((h, w)) < flip_prob
    ys, xs = np.nonzero(np.asarray(hole) > 0)
    if len(ys):
        yy, xx = np.mgrid[0:h, 0:w]
        for _ in range(n_blobs):
            i = int(rng.integers(len(ys)))
            r = rng.uniform(*blob_radius)
            out |= (yy - ys[i]) ** 2 + (xx - xs[i]) ** 2 <= r * r
    return out.astype(np.float32)


def oracle_noisy_detector(seg, hole, seed=0, **noise):
    noisy = noisy_segmentation(seg, hole, seed, **noise)
    return DetectorHandle(lambda image: noisy.copy(), "oracle_noisy", "oracle_noisy")


def external_detector(mask_path):
    """Reads a user-supplied mask file (nonzero = foreground)."""
    path = Path(mask_path)

    def fn(image):
        if not path.is_file():
            raise DetectorError(f"segmentation mask not found: {path}")
        return load_mask_png(path)

    return DetectorHandle(fn, f"external:{path.name}", "external")


def border_contrast_detector(threshold=0.25):
    """Marks pixels whose colour differs from the median border colour.

    A crude stand-in used by the CLI when no mask is supplied.
    """

    def fn(image):
        border = np.concatenate([image[0], image[-1], image[:, 0], image[:, -1]])
        dist = np.abs(image - np.median(border, axis=0)).sum(-1)
        return (dist > threshold).astype(np.float32)

    return DetectorHandle(fn, "border_contrast", "external")


# ---------------------------------------------------------------------------
# cleanup

@dataclass(frozen=True)
class CleanupConfig:
    """``min_component_size=None`` means 0.1% of the image area, rounded up."""

    min_component_size: int | None = None
    connectivity: int = 8

    def validate(self):
        if self.min_component_size is not None and self.min_component_size < 0:
            raise ConfigError("min_component_size must be >= 0")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")
        return self

    def size_for(self, shape):
        if self.min_component_size is not None:
            return int(self.min_component_size)
        return int(math.ceil(DEFAULT_MIN_COMPONENT_FRAC * shape[0] * shape[1]))


def remove_small_components(mask, min_size, connectivity=8):
    structure = ndimage.generate_binary_structure(2, 2 if connectivity == 8 else 1)
    labels, n = ndimage.label(mask, structure=structure)
    if n == 0 or min_size <= 0:
        return mask.astype(np.float32)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels].astype(np.float32)


def clean_segmentation(seg, hole, cfg: CleanupConfig = CleanupConfig()):
    """Drop foreground inside holes, then connected components below the minimum size."""
    seg, hole = np.asarray(seg), np.asarray(hole)
    if seg.shape != hole.shape:
        raise ContractError(f"seg {seg.shape} and hole {hole.shape} differ in shape")
    cfg.validate()
    kept = (seg > 0) & ~(hole > 0)
    return remove_small_components(kept, cfg.size_for(seg.shape), cfg.connectivity)


# ---------------------------------------------------------------------------
# inference

class InferenceResult(NamedTuple):
    image: np.ndarray
    contour_in: np.ndarray
    contour: np.ndarray
    seg: np.ndarray


def _generator(obj, builder, kind):
    if obj is None or isinstance(obj, (ContourGenerator, ImageGenerator)):
        return obj
    if isinstance(obj, (str, Path)):
        obj = load_checkpoint(obj)
    if not isinstance(obj, Checkpoint):
        raise CheckpointError(f"cannot build a {kind} generator from {type(obj).__name__}")
    return builder(obj)


def load_generators(contour_ckpt=None, image_ckpt=None):
    """Build eval-mode generators from checkpoints, paths or ready modules."""
    from .trainer import build_contour_generator, build_image_generator

    contour_g = _generator(contour_ckpt, build_contour_generator, "contour")
    image_g = _generator(image_ckpt, build_image_generator, "image")
    if image_g is None:
        raise CheckpointError("an image checkpoint is required")
    if image_g.use_contour and contour_g is None:
        raise CheckpointError("the image model is contour-guided; a contour checkpoint is required")
    return contour_g, image_g


def _t(arr):
    arr = np.asarray(arr, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1).copy() if arr.ndim == 3 else arr[None].copy())[None]


def _n(t):
    a = t[0].detach().cpu().numpy()
    return a[0] if a.shape[0] == 1 else a.transpose(1, 2, 0)


@torch.no_grad()
def complete(image_in, hole, contour_in, contour_g, image_g):
    """Run the two generators; returns (completed image, completed contour), both composited."""
    hole = np.asarray(hole, dtype=np.float32)
    if contour_g is not None:
        c_ref = _n(contour_g.eval()(_t(image_in), _t(contour_in), _t(hole)).refined)
        contour = np.where(hole > 0, c_ref, contour_in).astype(np.float32)
    else:
        contour = np.asarray(contour_in, dtype=np.float32)
    cond = _t(contour) if image_g.use_contour else None
    out = _n(image_g.eval()(_t(image_in), cond, _t(hole)).refined)
    image = np.where(hole[..., None] > 0, out, image_in).astype(np.float32)
    return image, contour


def infer(image_in, hole, detector: DetectorHandle, contour_ckpt=None, image_ckpt=None,
          sobel_threshold=1.0, cleanup: CleanupConfig = CleanupConfig()) -> InferenceResult:
    """Complete one image.

    ``contour_ckpt`` / ``image_ckpt`` may be checkpoints, checkpoint paths or
    generator modules. Pixels outside the hole are returned unchanged.
    """
    image_in = np.asarray(image_in, dtype=np.float32)
    hole = np.asarray(hole, dtype=np.float32)
    if image_in.ndim != 3 or image_in.shape[:2] != hole.shape:
        raise ContractError(f"image {image_in.shape} and hole {hole.shape} do not match")
    if not np.all((hole == 0) | (hole == 1)):
        raise ContractError("hole mask must be binary")
    contour_g, image_g = load_generators(contour_ckpt, image_ckpt)
    seg = clean_segmentation(detector(image_in), hole, cleanup)
    contour_in = make_incomplete_contour(sobel_contour(seg, sobel_threshold), hole)
    image, contour = complete(image_in, hole, contour_in, contour_g, image_g)
    return InferenceResult(image, contour_in, contour, seg)


def overlay(image, contour, color=(1.0, 0.0, 0.0), threshold=0.5):
    """Draws contour pixels above ``threshold`` over the image."""
    out = np.array(image, dtype=np.float32, copy=True)
    out[np.asarray(contour) > threshold] = color
    return out
