"""Normalized mean error, CED curves and yaw-binned reporting.

NME for one sample is the mean distance between predicted and ground-truth
visible landmarks divided by the bounding-box normalizer d = sqrt(w * h),
reported in percent.  Samples are binned by absolute yaw into [0, 30],
(30, 60] and (60, 90] degrees (boundaries go to the lower bin); the report's
Std is the population standard deviation over the three bin values.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError

BIN_EDGES = (0.0, 30.0, 60.0, 90.0)
BIN_LABELS = ("[0,30]", "(30,60]", "(60,90]")


@dataclass
class EvalSample:
    """Ground truth, visibility, prediction and normalizer for one image."""

    landmarks_gt: np.ndarray  # (68, 2)
    visibility: np.ndarray  # (68,) bool
    landmarks_pred: np.ndarray  # (68, 2)
    d: float  # sqrt(bbox_w * bbox_h)
    yaw_deg: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.landmarks_gt = np.asarray(self.landmarks_gt, dtype=np.float64)
        self.landmarks_pred = np.asarray(self.landmarks_pred, dtype=np.float64)
        self.visibility = np.asarray(self.visibility, dtype=bool)
        if self.landmarks_gt.shape != self.landmarks_pred.shape:
            raise DimensionError(
                f"sample {self.name or '?'}: prediction shape "
                f"{self.landmarks_pred.shape} != ground truth {self.landmarks_gt.shape}"
            )
        if self.d <= 0:
            raise DataError(f"sample {self.name or '?'}: normalizer must be positive")


def per_sample_nme(sample: EvalSample):
    """Normalized error of one sample, in percent."""
    vis = sample.visibility
    n_vis = int(vis.sum())
    if n_vis == 0:
        raise DataError(f"sample '{sample.name or '?'}' has no visible landmarks")
    err = np.linalg.norm(sample.landmarks_pred[vis] - sample.landmarks_gt[vis], axis=1)
    return 100.0 * err.sum() / (sample.d * n_vis)


def nme(samples):
    """Mean of per-sample normalized errors, in percent."""
    samples = list(samples)
    if not samples:
        raise DataError("nme needs at least one sample")
    return float(np.mean([per_sample_nme(s) for s in samples]))


def ced_curve(samples, thresholds):
    """Fraction of samples with per-sample NME <= threshold, per threshold."""
    samples = list(samples)
    if not samples:
        raise DataError("ced_curve needs at least one sample")
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise DataError("thresholds must be sorted ascending")
    errors = np.array([per_sample_nme(s) for s in samples])
    return [(float(t), float(np.mean(errors <= t))) for t in thresholds]


@dataclass
class BinReport:
    """Per-yaw-bin NME plus their mean and population std."""

    bins: dict = field(default_factory=dict)  # label -> NME% or None
    counts: dict = field(default_factory=dict)
    mean: float = math.nan
    std: float = math.nan
    missing: tuple = ()

    def rows(self):
        return [(label, self.bins.get(label), self.counts.get(label, 0)) for label in BIN_LABELS]


def bin_of_yaw(yaw_deg, tolerance=1e-9):
    a = abs(yaw_deg)
    if a > BIN_EDGES[-1] + tolerance:
        raise DataError(f"|yaw| = {a:.3f} exceeds 90 degrees")
    if a <= BIN_EDGES[1]:
        return 0
    if a <= BIN_EDGES[2]:
        return 1
    return 2


def summarize_bins(values):
    """Mean and population std over the available bin values."""
    vals = [v for v in values if v is not None]
    if not vals:
        raise DataError("no populated yaw bins")
    mean = float(np.mean(vals))
    std = float(np.sqrt(np.mean((np.asarray(vals) - mean) ** 2)))
    return mean, std


def yaw_bin_report(samples):
    samples = list(samples)
    if not samples:
        raise DataError("yaw_bin_report needs at least one sample")
    groups = {label: [] for label in BIN_LABELS}
    for s in samples:
        groups[BIN_LABELS[bin_of_yaw(s.yaw_deg)]].append(s)
    bins = {}
    counts = {}
    for label in BIN_LABELS:
        counts[label] = len(groups[label])
        bins[label] = nme(groups[label]) if groups[label] else None
    mean, std = summarize_bins(bins.values())
    return BinReport(
        bins=bins,
        counts=counts,
        mean=mean,
        std=std,
        missing=tuple(label for label in BIN_LABELS if bins[label] is None),
    )


def format_report(report: BinReport, title="NME(%) by absolute yaw"):
    """Aligned text table mirroring the published layout."""
    cols = list(BIN_LABELS) + ["Mean", "Std"]
    vals = []
    for label in BIN_LABELS:
        v = report.bins.get(label)
        vals.append("-" if v is None else f"{v:.3f}")
    vals += [f"{report.mean:.3f}", f"{report.std:.3f}"]
    widths = [max(len(c), len(v)) for c, v in zip(cols, vals)]
    lines = [
        title,
        "  ".join(c.rjust(w) for c, w in zip(cols, widths)),
        "  ".join(v.rjust(w) for v, w in zip(vals, widths)),
    ]
    if report.missing:
        lines.append(f"(empty bins excluded from mean/std: {', '.join(report.missing)})")
    return "\n".join(lines)


def report_to_dict(report: BinReport):
    return {
        "bins": {k: report.bins[k] for k in BIN_LABELS},
        "counts": {k: report.counts[k] for k in BIN_LABELS},
        "mean": report.mean,
        "std": report.std,
        "missing": list(report.missing),
    }
