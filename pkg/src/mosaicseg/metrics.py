"""Mean intersection-over-union between predicted and reference label maps."""

import numpy as np

from .errors import ShapeError


def compute_miou(pred, gt, k: int, ignore_label=None) -> float:
    """Mean over classes of |pred & gt| / |pred | gt|.

    Pixels whose ground-truth label equals ignore_label are excluded entirely.
    Classes absent from both maps (over the kept pixels) are excluded from the
    mean, avoiding 0/0. Identical maps score exactly 1.0.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ShapeError(f"label maps must be equal rank-2 shapes, got {pred.shape} vs {gt.shape}")
    if k < 1:
        raise ValueError(f"class count must be >= 1, got {k}")
    pred = pred.astype(np.int64).ravel()
    gt = gt.astype(np.int64).ravel()
    if ignore_label is not None:
        keep = gt != ignore_label
        pred, gt = pred[keep], gt[keep]
    if pred.size == 0:
        raise ValueError("no pixels left to score after ignoring")
    if pred.min() < 0 or pred.max() >= k:
        raise ValueError(f"prediction labels outside [0, {k})")
    if gt.min() < 0 or gt.max() >= k:
        raise ValueError(f"ground-truth labels outside [0, {k})")

    pred_count = np.bincount(pred, minlength=k).astype(np.int64)
    gt_count = np.bincount(gt, minlength=k).astype(np.int64)
    inter = np.bincount(gt[pred == gt], minlength=k).astype(np.int64)
    union = pred_count + gt_count - inter
    present = union > 0
    iou = inter[present] / union[present]
    return float(iou.mean())
