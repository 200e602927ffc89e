"""Segmentation-style evaluation of translated label images.

Translated outputs are continuous images; to score them against ground
truth they are first snapped to a fixed palette of class colors (nearest
color in squared distance, ties to the lowest class id). Scores come from
a K x K confusion matrix:

    per-pixel accuracy: trace / total pixels
    per-class accuracy: mean over classes present in GT of diag / gt_count
    class IoU: mean over classes present in GT or prediction of
               intersection / union

Classes absent from both sides of a metric's domain are skipped, never
counted as zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import Tensor
from .errors import ConfigError, DataError, UsageError
from .rng import RngStream


@dataclass
class LabelMap:
    """Integer class ids [h, w] with the number of classes K."""

    ids: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids)
        if self.ids.ndim != 2 or not np.issubdtype(self.ids.dtype, np.integer):
            raise UsageError("LabelMap needs an integer [h, w] array")
        if self.num_classes < 1:
            raise UsageError("num_classes must be positive")
        if self.ids.size and (self.ids.min() < 0 or self.ids.max() >= self.num_classes):
            raise UsageError("label ids must lie in [0, num_classes)")


@dataclass
class SegScores:
    """Headline scores plus the per-class breakdown (None = not scored)."""

    per_pixel_acc: float
    per_class_acc: float
    class_iou: float
    per_class_acc_list: list[Optional[float]]
    per_class_iou_list: list[Optional[float]]


def quantize_to_labels(img, palette: np.ndarray) -> LabelMap:
    """Snap an image to the nearest palette color per pixel.

    Args:
        img: float [c, h, w] in [-1, 1] (Tensor or array).
        palette: float [K, c], the class colors in the same range, ordered
            by class id. Ties go to the lowest id.
    """
    a = img.data if isinstance(img, Tensor) else np.asarray(img)
    pal = np.asarray(palette, dtype=np.float64)
    if a.ndim != 3:
        raise UsageError(f"expected [c, h, w] image, got shape {a.shape}")
    if pal.ndim != 2 or pal.shape[1] != a.shape[0]:
        raise UsageError(f"palette {pal.shape} does not match {a.shape[0]} channels")
    # distances [K, h, w]; argmin returns the first (lowest id) minimum
    d = ((a[None, :, :, :].astype(np.float64) - pal[:, :, None, None]) ** 2).sum(axis=1)
    ids = np.argmin(d, axis=0).astype(np.int32)
    return LabelMap(ids, pal.shape[0])


def confusion_matrix(pred: LabelMap, gt: LabelMap) -> np.ndarray:
    """K x K counts indexed [gt_class, pred_class]."""
    if pred.ids.shape != gt.ids.shape:
        raise UsageError(f"shape mismatch: pred {pred.ids.shape} vs gt {gt.ids.shape}")
    if pred.num_classes != gt.num_classes:
        raise UsageError("pred and gt disagree on the number of classes")
    k = gt.num_classes
    joint = gt.ids.astype(np.int64) * k + pred.ids.astype(np.int64)
    return np.bincount(joint.reshape(-1), minlength=k * k).reshape(k, k)


def segmentation_scores(pred: LabelMap, gt: LabelMap) -> SegScores:
    """Score a predicted label map against ground truth."""
    cm = confusion_matrix(pred, gt)
    k = gt.num_classes
    total = cm.sum()
    if total == 0:
        raise UsageError("empty label maps")
    diag = np.diag(cm)
    gt_count = cm.sum(axis=1)
    pred_count = cm.sum(axis=0)

    per_pixel = diag.sum() / total

    acc_list: list[Optional[float]] = []
    iou_list: list[Optional[float]] = []
    for c in range(k):
        acc_list.append(float(diag[c] / gt_count[c]) if gt_count[c] > 0 else None)
        union = gt_count[c] + pred_count[c] - diag[c]
        iou_list.append(float(diag[c] / union) if union > 0 else None)

    accs = [a for a in acc_list if a is not None]
    ious = [i for i in iou_list if i is not None]
    return SegScores(
        per_pixel_acc=float(per_pixel),
        per_class_acc=float(np.mean(accs)),
        class_iou=float(np.mean(ious)),
        per_class_acc_list=acc_list,
        per_class_iou_list=iou_list,
    )


def average_scores(scores: list[SegScores]) -> dict:
    """Mean of headline scores over images, plus an averaged per-class
    breakdown (classes never scored in any image stay None)."""
    if not scores:
        raise UsageError("no scores to average")
    k = len(scores[0].per_class_acc_list)
    per_class = []
    for c in range(k):
        accs = [s.per_class_acc_list[c] for s in scores if s.per_class_acc_list[c] is not None]
        ious = [s.per_class_iou_list[c] for s in scores if s.per_class_iou_list[c] is not None]
        per_class.append(
            {
                "class_id": c,
                "acc": float(np.mean(accs)) if accs else None,
                "iou": float(np.mean(ious)) if ious else None,
            }
        )
    return {
        "per_pixel_acc": float(np.mean([s.per_pixel_acc for s in scores])),
        "per_class_acc": float(np.mean([s.per_class_acc for s in scores])),
        "class_iou": float(np.mean([s.class_iou for s in scores])),
        "per_class": per_class,
        "n_images": len(scores),
    }


def parse_palette_file(path: str | Path) -> np.ndarray:
    """Read a palette file of "class_id R G B" lines.

    Returns float [K, 3] colors mapped to [-1, 1], ordered by class id.
    Ids must be exactly 0..K-1 with no gaps or duplicates; blank lines and
    lines starting with '#' are skipped.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read palette file {path}: {e}") from e
    entries: dict[int, tuple[int, int, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ConfigError("palette", f"line {lineno}: expected 'class_id R G B'")
        try:
            cid, r, g, b = (int(p) for p in parts)
        except ValueError:
            raise ConfigError("palette", f"line {lineno}: values must be integers")
        if cid < 0:
            raise ConfigError("palette", f"line {lineno}: class_id must be non-negative")
        if cid in entries:
            raise ConfigError("palette", f"line {lineno}: duplicate class_id {cid}")
        for v in (r, g, b):
            if not (0 <= v <= 255):
                raise ConfigError("palette", f"line {lineno}: colors must be 8-bit")
        entries[cid] = (r, g, b)
    if not entries:
        raise ConfigError("palette", "no palette entries found")
    k = max(entries) + 1
    if set(entries) != set(range(k)):
        raise ConfigError("palette", f"class ids must cover 0..{k - 1} without gaps")
    colors = np.array([entries[c] for c in range(k)], dtype=np.float64)
    return colors / 127.5 - 1.0


def cycle_reconstruction_error(model, dataset, n: int, noise_enabled: bool = False) -> dict:
    """Mean round-trip L1 error over the first n images of each domain.

    For u: |u - gen_b(gen_a(u))| averaged over pixels and images, and the
    mirror image for v. model only needs translate_u2v / translate_v2u;
    with noise disabled the result is deterministic. Evaluation draws no
    values from the model's training noise streams when noise is off.
    """
    if n < 1:
        raise UsageError(f"n must be positive, got {n}")
    errs_u = []
    for i in range(min(n, dataset.n_u)):
        u = dataset.image("u", i)[None]
        fake_v = model.translate_u2v(u, noise_enabled=noise_enabled)
        back = model.translate_v2u(fake_v, noise_enabled=noise_enabled)
        errs_u.append(float(np.mean(np.abs(u - back.data))))
    errs_v = []
    for i in range(min(n, dataset.n_v)):
        v = dataset.image("v", i)[None]
        fake_u = model.translate_v2u(v, noise_enabled=noise_enabled)
        back = model.translate_u2v(fake_u, noise_enabled=noise_enabled)
        errs_v.append(float(np.mean(np.abs(v - back.data))))
    return {
        "recon_u": float(np.mean(errs_u)),
        "recon_v": float(np.mean(errs_v)),
    }
