"""Image-quality metrics (L1, L2, PSNR, SSIM) and evaluation reports.

All metrics take float arrays in [0, 1], either ``(H, W)`` or ``(H, W, C)``,
and are computed in float64.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .datakit import REGIMES, BrushConfig, SceneDataset
from .errors import ConfigError, ContractError
from .pipeline import CleanupConfig, infer, load_generators, oracle_detector

PSNR_MAX_DB = 100.0
ORACLE = "oracle"
METRICS = ("l1", "l2", "psnr", "ssim")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def l1_metric(a, b):
    a, b = _pair(a, b)
    return float(np.abs(a - b).mean())


def l2_metric(a, b):
    a, b = _pair(a, b)
    return float(((a - b) ** 2).mean())


def psnr_from_mse(mse):
    if mse <= 0:
        return PSNR_MAX_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_MAX_DB)


def psnr(a, b):
    """``10 log10(1 / MSE)`` for unit peak, clamped to 100 dB."""
    return psnr_from_mse(l2_metric(a, b))


def gaussian_kernel(size=11, sigma=1.5):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    out = ndimage.correlate1d(x, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    r = len(g) // 2
    return out[r:x.shape[0] - r, r:x.shape[1] - r]


def ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean local SSIM over all fully contained Gaussian windows, averaged over channels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < window or a.shape[1] < window:
        raise ContractError(f"image {a.shape[:2]} is smaller than the {window}x{window} window")
    g = gaussian_kernel(window, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        vx = _filter_valid(x * x, g) - mx * mx
        vy = _filter_valid(y * y, g) - my * my
        cov = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        scores.append((num / den).mean())
    return float(np.mean(scores))


def all_metrics(a, b):
    return {"l1": l1_metric(a, b), "l2": l2_metric(a, b), "psnr": psnr(a, b), "ssim": ssim(a, b)}


# ---------------------------------------------------------------------------
# reports

@dataclass
class MetricRow:
    id: str
    regime: str
    l1: float
    l2: float
    psnr: float
    ssim: float


@dataclass
class MetricReport:
    model: str
    dataset: str
    regimes: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def means(self, regime=None):
        rows = [r for r in self.rows if regime is None or r.regime == regime]
        if not rows:
            return {m: float("nan") for m in METRICS}
        return {m: float(np.mean([getattr(r, m) for r in rows])) for m in METRICS}

    def summary(self):
        out = {"all": self.means()}
        for regime in self.regimes:
            out[regime] = self.means(regime)
        return out

    # JSON ---------------------------------------------------------------

    def to_dict(self):
        return {"model": self.model, "dataset": self.dataset, "regimes": list(self.regimes),
                "meta": self.meta, "rows": [asdict(r) for r in self.rows], "means": self.summary()}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(d["model"], d["dataset"], list(d["regimes"]), [MetricRow(**r) for r in d["rows"]],
                   d.get("meta", {}))

    @classmethod
    def from_json(cls, text_or_path):
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        return cls.from_dict(json.loads(text))

    # CSV ----------------------------------------------------------------

    def to_csv(self, path=None):
        buf = io.StringIO()
        header = {"model": self.model, "dataset": self.dataset, "regimes": self.regimes, "meta": self.meta}
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "regime", *METRICS])
        for r in self.rows:
            w.writerow([r.id, r.regime, *(repr(getattr(r, m)) for m in METRICS)])
        means = self.means()
        w.writerow(["mean", "all", *(repr(means[m]) for m in METRICS)])
        text = buf.getvalue()
        if path:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path):
        text = str(text_or_path)
        if not text.startswith("# "):
            text = Path(text).read_text()
        first, rest = text.split("\n", 1)
        header = json.loads(first[2:])
        rows = []
        for rec in csv.DictReader(io.StringIO(rest)):
            if rec["id"] == "mean" and rec["regime"] == "all":
                continue
            rows.append(MetricRow(rec["id"], rec["regime"], *(float(rec[m]) for m in METRICS)))
        return cls(header["model"], header["dataset"], header["regimes"], rows, header.get("meta", {}))


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class ModelSpec:
    """A model under evaluation.

    ``image`` and ``contour`` accept checkpoints, paths or generator modules;
    ``image=ORACLE`` is a perfect model that returns the ground truth.
    """

    tag: str
    image: object = None
    contour: object = None


def sample_seed(seed, index, regime):
    return int(np.random.default_rng([seed, index, REGIMES.index(regime)]).integers(2**31))


def eval_samples(scenes: SceneDataset, brush: BrushConfig, regimes=REGIMES, seed=0):
    """``(id, sample)`` pairs: every scene once per regime, with deterministic holes."""
    for regime in regimes:
        if regime not in REGIMES:
            raise ConfigError(f"unknown regime {regime!r}")
        for i in range(len(scenes)):
            sid = scenes.ids[i] if scenes.ids else f"{i:05d}"
            yield sid, scenes.sample(i, brush, regime, sample_seed(seed, i, regime))


def evaluate(model: ModelSpec, scenes: SceneDataset, regimes=REGIMES, brush: BrushConfig | None = None,
             seed=0, dataset_tag="synthetic", sobel_threshold=1.0, cleanup: CleanupConfig = CleanupConfig(),
             meta=None) -> MetricReport:
    """Run the pipeline (oracle detector) on every scene and regime; metrics on composited output."""
    brush = brush or BrushConfig()
    regimes = list(regimes)
    oracle = isinstance(model.image, str) and model.image == ORACLE
    if not oracle:
        contour_g, image_g = load_generators(model.contour, model.image)
    report = MetricReport(model.tag, dataset_tag, regimes, meta=dict(meta or {}, seed=seed))
    for sid, s in eval_samples(scenes, brush, regimes, seed):
        if oracle:
            result = s.image
        else:
            result = infer(s.image_in, s.hole, oracle_detector(s.seg), contour_g, image_g,
                           sobel_threshold, cleanup).image
        report.rows.append(MetricRow(sid, s.regime, **all_metrics(result, s.image)))
    return report
