"""Confusion counts and precision/recall/accuracy, overall and per class.

The positive class (+1) is "attacked". Metrics whose denominator is zero are
reported as NaN and excluded from sweep aggregation; they are never coerced
to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

UNDEFINED = float("nan")

METRIC_NAMES = ("acc", "prec", "rec", "prec1", "rec1", "prec2", "rec2")


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    prec: float
    rec: float
    prec1: float
    rec1: float
    prec2: float
    rec2: float

    def as_dict(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _ratio(num, den):
    return num / den if den > 0 else UNDEFINED


def score(predictions, labels):
    """Count the confusion table and derive the seven performance measures."""
    predictions = np.asarray(predictions, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ContractError("predictions and labels must be 1-D and equal length")
    if len(predictions) == 0:
        raise ContractError("nothing to score")
    pos_pred = predictions > 0
    pos_true = labels > 0
    tp = int(np.sum(pos_pred & pos_true))
    fp = int(np.sum(pos_pred & ~pos_true))
    fn = int(np.sum(~pos_pred & pos_true))
    tn = int(np.sum(~pos_pred & ~pos_true))
    conf = Confusion(tp=tp, fp=fp, fn=fn, tn=tn)
    prec = _ratio(tp, tp + fp)
    rec = _ratio(tp, tp + fn)
    report = MetricsReport(
        acc=_ratio(tp + tn, conf.total),
        prec=prec,
        rec=rec,
        prec1=prec,
        rec1=rec,
        prec2=_ratio(tn, tn + fn),
        rec2=_ratio(tn, fp + tn),
    )
    return conf, report


def is_defined(value):
    return not math.isnan(value)
