"""Synthetic scenes, brush-stroke holes, and contour ground truth.

All grids are numpy ``float32`` arrays. Images are ``(H, W, 3)`` in [0, 1];
segmentation, contour and hole maps are ``(H, W)``. Binary maps hold exactly
0.0 and 1.0. Hole maps use 1 for a missing pixel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage.draw import polygon2mask

from .errors import ConfigError, ContractError, SamplingError

SHAPE_KINDS = ("ellipse", "polygon", "blob")
TEXTURES = ("flat", "gradient", "noise")
REGIMES = ("overlap", "non_overlap")

# Shapes smaller than this fraction of the canvas are redrawn.
MIN_SHAPE_FRAC = 0.02

# Largest |Gx| + |Gy| response of the 3x3 Sobel pair on a unit step.
SOBEL_MAX = 8.0


@dataclass(frozen=True)
class SceneConfig:
    canvas_size: int = 64
    shape_count_range: tuple[int, int] = (1, 3)
    shape_kinds: tuple[str, ...] = SHAPE_KINDS
    textures: tuple[str, ...] = TEXTURES
    rng_seed: int = 0

    def validate(self):
        if self.canvas_size < 32:
            raise ConfigError(f"canvas_size must be >= 32, got {self.canvas_size}")
        lo, hi = self.shape_count_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"shape_count_range must satisfy 1 <= lo <= hi, got {self.shape_count_range}")
        if not self.shape_kinds:
            raise ConfigError("shape_kinds is empty")
        bad = set(self.shape_kinds) - set(SHAPE_KINDS)
        if bad:
            raise ConfigError(f"unknown shape kinds {sorted(bad)}")
        if not self.textures or set(self.textures) - set(TEXTURES):
            raise ConfigError(f"textures must be a non-empty subset of {TEXTURES}")


@dataclass(frozen=True)
class BrushConfig:
    """Free-form brush parameters; widths and lengths are fractions of min(H, W)."""

    stroke_range: tuple[int, int] = (1, 8)
    vertex_range: tuple[int, int] = (4, 12)
    width_frac: tuple[float, float] = (0.05, 0.20)
    length_frac: tuple[float, float] = (0.05, 0.18)
    mean_angle: float = 2 * math.pi / 5
    angle_range: float = 2 * math.pi / 15
    area_ratio: tuple[float, float] = (0.01, 0.40)
    max_retries: int = 200

    def validate(self):
        s_lo, s_hi = self.stroke_range
        v_lo, v_hi = self.vertex_range
        if s_lo < 0 or s_hi < s_lo or v_lo < 1 or v_hi < v_lo:
            raise ConfigError("stroke/vertex ranges must be non-negative and ordered")
        a_lo, a_hi = self.area_ratio
        if not 0.0 <= a_lo <= a_hi <= 1.0:
            raise ConfigError(f"area_ratio must satisfy 0 <= lo <= hi <= 1, got {self.area_ratio}")
        if self.width_frac[0] <= 0 or self.width_frac[1] < self.width_frac[0]:
            raise ConfigError("width_frac must be positive and ordered")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")


@dataclass
class TrainingSample:
    image: np.ndarray
    seg: np.ndarray
    contour_gt: np.ndarray
    hole: np.ndarray
    image_in: np.ndarray
    contour_in: np.ndarray
    regime: str = "overlap"
    seed: int = 0


def _check_binary(arr, name):
    if not np.all((arr == 0) | (arr == 1)):
        raise ContractError(f"{name} must be binary (values 0 and 1 only)")


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ContractError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# scene synthesis

def _random_color(rng, avoid=None, min_dist=0.35):
    for _ in range(100):
        c = rng.uniform(0.05, 0.95, size=3)
        if avoid is None or np.abs(c - avoid).sum() >= min_dist:
            return c
    return c


def _paint(rng, kind, size, base):
    if kind == "flat":
        return np.broadcast_to(base, (size, size, 3)).copy()
    if kind == "gradient":
        other = np.clip(base + rng.uniform(-0.2, 0.2, size=3), 0, 1)
        theta = rng.uniform(0, 2 * math.pi)
        yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
        t = (math.cos(theta) * xx + math.sin(theta) * yy)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
        return base * (1 - t[..., None]) + other * t[..., None]
    noise = rng.normal(0.0, 1.0, size=(size, size, 3))
    noise = ndimage.gaussian_filter(noise, sigma=(1.5, 1.5, 0))
    noise /= max(noise.std(), 1e-9)
    return base + 0.06 * noise


def _shape_mask(rng, kind, size):
    cy, cx = rng.uniform(0.25, 0.75, size=2) * size
    r = rng.uniform(0.10, 0.22) * size
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if kind == "ellipse":
        a = r
        b = r * rng.uniform(0.55, 1.0)
        th = rng.uniform(0, math.pi)
        u = (xx - cx) * math.cos(th) + (yy - cy) * math.sin(th)
        v = -(xx - cx) * math.sin(th) + (yy - cy) * math.cos(th)
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0
    if kind == "polygon":
        n = int(rng.integers(3, 9))
        # evenly spaced with jitter so the polygon never degenerates to a sliver
        angles = rng.uniform(0, 2 * math.pi) + (np.arange(n) + rng.uniform(-0.3, 0.3, size=n)) * (2 * math.pi / n)
        radii = r * rng.uniform(0.7, 1.15, size=n)
        verts = np.stack([cy + radii * np.sin(angles), cx + radii * np.cos(angles)], axis=1)
        return polygon2mask((size, size), verts)
    # blob: star-shaped radial Fourier outline
    theta = np.arctan2(yy - cy, xx - cx)
    rad = np.hypot(yy - cy, xx - cx)
    outline = np.ones_like(theta)
    for k in (2, 3, 4):
        outline += rng.uniform(0.0, 0.12) * np.cos(k * theta + rng.uniform(0, 2 * math.pi))
    return rad <= r * outline


def synth_scene(cfg: SceneConfig):
    """Render a textured background with opaque foreground shapes.

    Returns ``(image, seg)``; ``seg`` marks exactly the shape pixels.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.rng_seed)
    size = cfg.canvas_size
    bg_color = _random_color(rng)
    image = _paint(rng, rng.choice(cfg.textures), size, bg_color)
    seg = np.zeros((size, size), dtype=bool)
    lo, hi = cfg.shape_count_range
    for _ in range(int(rng.integers(lo, hi + 1))):
        kind = rng.choice(cfg.shape_kinds)
        mask = _shape_mask(rng, kind, size)
        while mask.sum() < MIN_SHAPE_FRAC * size * size:
            mask = _shape_mask(rng, kind, size)
        fill = _paint(rng, rng.choice(cfg.textures), size, _random_color(rng, avoid=bg_color))
        image[mask] = fill[mask]
        seg |= mask
    return np.clip(image, 0.0, 1.0).astype(np.float32), seg.astype(np.float32)


# ---------------------------------------------------------------------------
# contours and holes

def sobel_magnitude(seg):
    """|Gx| + |Gy| with standard 3x3 Sobel kernels and replicate padding."""
    seg = np.asarray(seg, dtype=np.float64)
    gx = ndimage.sobel(seg, axis=1, mode="nearest")
    gy = ndimage.sobel(seg, axis=0, mode="nearest")
    return np.abs(gx) + np.abs(gy)


def sobel_contour(seg, threshold=1.0):
    """Binary contour where the Sobel magnitude of ``seg`` exceeds ``threshold``."""
    _check_binary(seg, "seg")
    if not 0.0 < threshold < SOBEL_MAX:
        raise ContractError(f"threshold must lie in (0, {SOBEL_MAX}), got {threshold}")
    return (sobel_magnitude(seg) > threshold).astype(np.float32)


def _rasterize_capsules(size, segments):
    """Union of thick segments with round caps: pixels within w/2 of a segment."""
    mask = np.zeros((size, size), dtype=bool)
    centers = np.arange(size) + 0.5
    for y0, x0, y1, x1, width in segments:
        r = width / 2.0
        r0 = max(int(math.floor(min(y0, y1) - r)), 0)
        r1 = min(int(math.ceil(max(y0, y1) + r)) + 1, size)
        c0 = max(int(math.floor(min(x0, x1) - r)), 0)
        c1 = min(int(math.ceil(max(x0, x1) + r)) + 1, size)
        py = centers[r0:r1, None] - y0
        px = centers[None, c0:c1] - x0
        dy, dx = y1 - y0, x1 - x0
        t = np.clip((py * dy + px * dx) / max(dy * dy + dx * dx, 1e-12), 0.0, 1.0)
        mask[r0:r1, c0:c1] |= (py - t * dy) ** 2 + (px - t * dx) ** 2 <= r * r
    return mask


def _draw_strokes(rng, size, cfg: BrushConfig):
    s_lo, s_hi = cfg.stroke_range
    v_lo, v_hi = cfg.vertex_range
    segments = []
    for _ in range(int(rng.integers(s_lo, s_hi + 1))):
        n_vertex = int(rng.integers(v_lo, v_hi + 1))
        width = rng.uniform(*cfg.width_frac) * size
        y, x = rng.uniform(0, size, size=2)
        for i in range(n_vertex):
            angle = rng.uniform(cfg.mean_angle - cfg.angle_range, cfg.mean_angle + cfg.angle_range)
            if i % 2 == 0:
                angle = 2 * math.pi - angle
            length = rng.uniform(*cfg.length_frac) * size
            ny = float(np.clip(y + length * math.sin(angle), 0, size - 1))
            nx = float(np.clip(x + length * math.cos(angle), 0, size - 1))
            segments.append((y, x, ny, nx, width))
            y, x = ny, nx
    return _rasterize_capsules(size, segments)


def sample_brush_holes(size, cfg: BrushConfig | None = None, rng_seed=0):
    """Sample a free-form hole mask whose area ratio lies within ``cfg.area_ratio``.

    Resamples until the ratio fits or ``cfg.max_retries`` is exhausted, in
    which case :class:`SamplingError` carries the last achieved ratio.
    """
    cfg = cfg or BrushConfig()
    cfg.validate()
    if cfg.stroke_range[1] == 0:
        return np.zeros((size, size), dtype=np.float32)
    rng = np.random.default_rng(rng_seed)
    lo, hi = cfg.area_ratio
    ratio = None
    for _ in range(cfg.max_retries):
        mask = _draw_strokes(rng, size, cfg)
        ratio = float(mask.mean())
        if lo <= ratio <= hi:
            return mask.astype(np.float32)
    raise SamplingError(
        f"no mask with area ratio in [{lo}, {hi}] after {cfg.max_retries} tries (last {ratio:.4f})",
        achieved_ratio=ratio,
    )


def restrict_non_overlap(hole, seg):
    """Remove the parts of ``hole`` lying on foreground pixels."""
    _check_same_shape(hole, seg, "restrict_non_overlap")
    return (hole * (1.0 - seg)).astype(np.float32)


def make_incomplete_contour(contour_gt, hole):
    """Keep the contour in the known region only: ``(1 - hole) * contour_gt``."""
    _check_same_shape(contour_gt, hole, "make_incomplete_contour")
    _check_binary(contour_gt, "contour_gt")
    return ((1.0 - hole) * contour_gt).astype(np.float32)


def sample_hole(seg, brush: BrushConfig, regime, seed):
    """Sample a hole for ``seg`` in the given regime, respecting the area bounds.

    For ``non_overlap`` the bounds are checked after the foreground is carved
    out, redrawing whole masks as needed.
    """
    if regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}, got {regime!r}")
    size = seg.shape[0]
    if regime == "overlap":
        return sample_brush_holes(size, brush, seed)
    if brush.stroke_range[1] == 0:
        return np.zeros_like(seg)
    lo, hi = brush.area_ratio
    rng = np.random.default_rng([seed, 1])
    ratio = None
    for _ in range(brush.max_retries):
        hole = restrict_non_overlap(sample_brush_holes(size, brush, int(rng.integers(2**31))), seg)
        ratio = float(hole.mean())
        if lo <= ratio <= hi:
            return hole
    raise SamplingError(f"non-overlap hole out of bounds after {brush.max_retries} tries", achieved_ratio=ratio)


def assemble_sample(image, seg, contour_gt, hole, regime="overlap", seed=0):
    keep = 1.0 - hole
    return TrainingSample(
        image=image,
        seg=seg,
        contour_gt=contour_gt,
        hole=hole,
        image_in=(image * keep[..., None]).astype(np.float32),
        contour_in=make_incomplete_contour(contour_gt, hole),
        regime=regime,
        seed=seed,
    )


def make_sample(cfg: SceneConfig, regime="overlap", seed=0, brush: BrushConfig | None = None,
                sobel_threshold=1.0):
    brush = brush or BrushConfig()
    image, seg = synth_scene(replace(cfg, rng_seed=seed))
    contour = sobel_contour(seg, sobel_threshold)
    hole = sample_hole(seg, brush, regime, seed)
    return assemble_sample(image, seg, contour, hole, regime, seed)


# ---------------------------------------------------------------------------
# in-memory scene collections

@dataclass
class SceneDataset:
    """Scenes with exact segmentation; holes are drawn per use."""

    images: np.ndarray
    segs: np.ndarray
    contours: np.ndarray
    ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)

    @classmethod
    def synthesize(cls, cfg: SceneConfig, n, seed, sobel_threshold=1.0):
        if n < 1:
            raise ConfigError("dataset size must be >= 1")
        images, segs, contours = [], [], []
        for i in range(n):
            scene_seed = int(np.random.default_rng([seed, i]).integers(2**31))
            image, seg = synth_scene(replace(cfg, rng_seed=scene_seed))
            images.append(image)
            segs.append(seg)
            contours.append(sobel_contour(seg, sobel_threshold))
        return cls(np.stack(images), np.stack(segs), np.stack(contours), [f"{i:05d}" for i in range(n)])

    def sample(self, index, brush: BrushConfig, regime, seed):
        hole = sample_hole(self.segs[index], brush, regime, seed)
        return assemble_sample(self.images[index], self.segs[index], self.contours[index], hole, regime, seed)


# ---------------------------------------------------------------------------
# on-disk format: PNG files plus manifest.json

MANIFEST = "manifest.json"
DATASET_FORMAT = "fginpaint-dataset"
_SUBDIRS = ("image", "seg", "contour", "hole")


def _to_u8(arr):
    return np.clip(np.rint(np.asarray(arr) * 255.0), 0, 255).astype(np.uint8)


def save_png(path, arr):
    Image.fromarray(_to_u8(arr)).save(path, format="PNG")


def load_png(path, channels):
    img = Image.open(path)
    img = img.convert("RGB" if channels == 3 else "L")
    return (np.asarray(img, dtype=np.float32) / 255.0)


def load_mask_png(path):
    return (load_png(path, 1) >= 0.5).astype(np.float32)


def write_dataset(root, samples, meta=None):
    """Write samples as paired 8-bit PNGs with a manifest listing each tuple."""
    root = Path(root)
    for sub in _SUBDIRS:
        (root / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        sid = f"{i:05d}"
        files = {sub: f"{sub}/{sid}.png" for sub in _SUBDIRS}
        save_png(root / files["image"], s.image)
        save_png(root / files["seg"], s.seg)
        save_png(root / files["contour"], s.contour_gt)
        save_png(root / files["hole"], s.hole)
        entries.append({"id": sid, "regime": s.regime, "seed": int(s.seed), **files})
    manifest = {"format": DATASET_FORMAT, "version": 1, "meta": meta or {}, "samples": entries}
    with open(root / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return root


def read_manifest(root):
    path = Path(root) / MANIFEST
    if not path.exists():
        raise ConfigError(f"no {MANIFEST} in {root}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != DATASET_FORMAT:
        raise ConfigError(f"{path} is not a {DATASET_FORMAT} manifest")
    return manifest


def read_dataset(root):
    """Load every sample listed in a dataset manifest."""
    root = Path(root)
    samples = []
    for e in read_manifest(root)["samples"]:
        image = load_png(root / e["image"], 3)
        seg = load_mask_png(root / e["seg"])
        contour = load_mask_png(root / e["contour"])
        hole = load_mask_png(root / e["hole"])
        samples.append(assemble_sample(image, seg, contour, hole, e["regime"], e["seed"]))
    return samples


def scenes_from_samples(samples, ids=None):
    return SceneDataset(
        np.stack([s.image for s in samples]),
        np.stack([s.seg for s in samples]),
        np.stack([s.contour_gt for s in samples]),
        ids or [f"{i:05d}" for i in range(len(samples))],
    )


def load_corpus(root, canvas_size=64, sobel_threshold=1.0):
    """Adapter for real data: ``root/images/*`` paired by stem with ``root/masks/*``.

    Images are center-cropped to a square and resized to ``canvas_size``.
    """
    root = Path(root)
    masks = {p.stem: p for p in (root / "masks").iterdir() if p.is_file()}
    images, segs, contours, ids = [], [], [], []
    for p in sorted((root / "images").iterdir()):
        if p.stem not in masks:
            continue
        img = _square_resize(Image.open(p).convert("RGB"), canvas_size, Image.BILINEAR)
        msk = _square_resize(Image.open(masks[p.stem]).convert("L"), canvas_size, Image.NEAREST)
        seg = (np.asarray(msk, dtype=np.float32) >= 128).astype(np.float32)
        images.append(np.asarray(img, dtype=np.float32) / 255.0)
        segs.append(seg)
        contours.append(sobel_contour(seg, sobel_threshold))
        ids.append(p.stem)
    if not images:
        raise ConfigError(f"no image/mask pairs found under {root}")
    return SceneDataset(np.stack(images), np.stack(segs), np.stack(contours), ids)


def _square_resize(img, size, resample):
    w, h = img.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    return img.crop((left, top, left + side, top + side)).resize((size, size), resample)

