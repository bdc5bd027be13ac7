"""Standard depth-evaluation statistics and scale-shift alignment.

Conventions follow the common outdoor-benchmark definitions: errors are
averaged over jointly valid pixels, ground truth outside (0, cap] is
masked out, predictions are clamped into (1e-3, cap] before taking logs,
and SILog carries a factor of 100.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError

PRED_FLOOR = 1e-3


@dataclass(frozen=True)
class DepthRaster:
    """A rows x cols grid of depths in meters with a validity mask and an
    evaluation cap."""

    values: np.ndarray
    mask: np.ndarray
    cap: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.size == 0:
            raise DimensionMismatchError(
                f"values must be a non-empty 2-d grid, got shape {values.shape}"
            )
        mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.shape != values.shape:
            raise DimensionMismatchError(
                f"mask shape {mask.shape} does not match values {values.shape}"
            )
        cap = float(self.cap)
        if not cap > 0.0:
            raise ValueError(f"cap must be positive, got {cap}")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "cap", cap)

    @classmethod
    def from_values(cls, values, cap: float, mask=None) -> "DepthRaster":
        values = np.asarray(values, dtype=np.float64)
        if mask is None:
            mask = np.ones(values.shape, dtype=bool)
        return cls(values=values, mask=mask, cap=cap)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MetricReport:
    """The nine standard statistics; irms is in the unit named by irms_unit."""

    silog: float
    abs_rel: float
    rms: float
    rms_log: float
    sq_rel: float
    irms: float
    delta1: float
    delta2: float
    delta3: float
    irms_unit: str = "inv_km"

    def lines(self) -> list[str]:
        """name value pairs in canonical order."""
        fields = [
            ("silog", self.silog),
            ("abs_rel", self.abs_rel),
            ("rms", self.rms),
            ("rms_log", self.rms_log),
            ("sq_rel", self.sq_rel),
            ("irms", self.irms),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
        ]
        return [f"{name} {value:.12f}" for name, value in fields]


def _joint_selection(pred: DepthRaster, gt: DepthRaster):
    if pred.values.shape != gt.values.shape:
        raise DimensionMismatchError(
            f"prediction {pred.values.shape} and ground truth {gt.values.shape} differ"
        )
    cap = gt.cap
    valid = pred.mask & gt.mask & (gt.values > 0.0) & (gt.values <= cap)
    if not valid.any():
        raise DegenerateInputError("no jointly valid pixels to evaluate")
    gt_v = gt.values[valid]
    pred_v = np.clip(pred.values[valid], PRED_FLOOR, cap)
    return pred_v, gt_v, valid


def evaluate(pred: DepthRaster, gt: DepthRaster, irms_unit: str = "km") -> MetricReport:
    """Compute the nine statistics over jointly valid pixels.

    irms_unit selects inverse kilometers ("km", the benchmark convention
    for metric depths) or inverse meters ("m") for the iRMS field.
    """
    if irms_unit not in ("km", "m"):
        raise ValueError(f"irms_unit must be 'km' or 'm', got {irms_unit!r}")
    pred_v, gt_v, _ = _joint_selection(pred, gt)

    d = np.log(pred_v) - np.log(gt_v)
    silog = 100.0 * float(np.sqrt(max((d * d).mean() - d.mean() ** 2, 0.0)))
    diff = pred_v - gt_v
    abs_rel = float((np.abs(diff) / gt_v).mean())
    rms = float(np.sqrt((diff * diff).mean()))
    rms_log = float(np.sqrt((d * d).mean()))
    sq_rel = float(((diff * diff) / gt_v).mean())
    inv_diff = 1.0 / pred_v - 1.0 / gt_v
    irms = float(np.sqrt((inv_diff * inv_diff).mean()))
    if irms_unit == "km":
        irms *= 1000.0
    ratio = np.maximum(pred_v / gt_v, gt_v / pred_v)
    delta1 = float((ratio < 1.25).mean())
    delta2 = float((ratio < 1.25 ** 2).mean())
    delta3 = float((ratio < 1.25 ** 3).mean())
    return MetricReport(
        silog=silog,
        abs_rel=abs_rel,
        rms=rms,
        rms_log=rms_log,
        sq_rel=sq_rel,
        irms=irms,
        delta1=delta1,
        delta2=delta2,
        delta3=delta3,
        irms_unit="inv_km" if irms_unit == "km" else "inv_m",
    )


def align_scale_shift(pred: DepthRaster, gt: DepthRaster) -> DepthRaster:
    """Least-squares s*pred + t alignment to the ground truth.

    (s, t) minimize the squared error over jointly valid pixels; the
    returned raster applies them to every pixel and keeps the original
    mask and cap.  A constant prediction has no well-defined scale and is
    rejected.
    """
    pred_v, gt_v, valid = _joint_selection(pred, gt)
    if valid.sum() < 2:
        raise DegenerateInputError("alignment needs at least 2 jointly valid pixels")
    centered = pred_v - pred_v.mean()
    denom = float(centered @ centered)
    if denom <= 1e-12 * pred_v.size * max(1.0, float(np.abs(pred_v).max()) ** 2):
        raise DegenerateInputError("constant prediction cannot be scale-aligned")
    s = float(centered @ (gt_v - gt_v.mean())) / denom
    t = float(gt_v.mean() - s * pred_v.mean())
    return DepthRaster(values=s * pred.values + t, mask=pred.mask, cap=pred.cap)
