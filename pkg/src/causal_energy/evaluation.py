"""Forecast scoring, chronological train/test evaluation and k-fold cross-validation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, format_timestamp
from .errors import ValidationError
from .priors import DEFAULT_PRIORS, PriorSpec
from .scm import ScmParams, default_params
from .svi import TrainConfig, TrainReport, predict_dataset, train


def mape(predicted, actual) -> float:
    """Mean absolute percentage error, in percent.

    Raises:
        ValidationError: lengths differ, inputs are empty, or an actual value
            is not strictly positive.
    """
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise ValidationError(f"predicted {p.shape} and actual {a.shape} must be equal-length vectors")
    if a.size == 0:
        raise ValidationError("mape needs at least one point")
    if not np.all(a > 0):
        raise ValidationError("actual values must be strictly positive")
    return float(100.0 * np.mean(np.abs(p - a) / a))


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous folds over ``n`` records; sizes differ by at most one."""

    k: int
    n: int
    bounds: tuple[tuple[int, int], ...]

    @classmethod
    def contiguous(cls, n: int, k: int) -> "FoldPlan":
        if k < 2:
            raise ValidationError(f"cross-validation needs k >= 2, got {k}")
        if n < k:
            raise ValidationError(f"cannot split {n} records into {k} folds")
        size, extra = divmod(n, k)
        bounds, start = [], 0
        for i in range(k):
            stop = start + size + (1 if i < extra else 0)
            bounds.append((start, stop))
            start = stop
        return cls(k, n, tuple(bounds))

    def test_indices(self, i: int) -> np.ndarray:
        lo, hi = self.bounds[i]
        return np.arange(lo, hi)

    def train_indices(self, i: int) -> np.ndarray:
        lo, hi = self.bounds[i]
        return np.concatenate([np.arange(0, lo), np.arange(hi, self.n)])


@dataclass
class EvalReport:
    """Scores of one evaluation run.

    ``mean_mape`` is the plain average of ``fold_mapes``; a train/test run has a
    single fold.  ``series`` holds ``(timestamp, actual, predicted, fold)``
    rows for the scored records.
    """

    fold_mapes: list[float]
    monthly_mape: dict[int, float]
    series: list[tuple[datetime, float, float, int]] = field(repr=False, default_factory=list)
    train_mapes: list[float] = field(default_factory=list)
    aborted: bool = False

    @property
    def mean_mape(self) -> float:
        return float(np.mean(self.fold_mapes))

    def to_json(self) -> dict:
        return {
            "fold_mapes": self.fold_mapes,
            "mean_mape": self.mean_mape,
            "train_mapes": self.train_mapes,
            "monthly_mape": {str(m): v for m, v in sorted(self.monthly_mape.items())},
            "aborted": self.aborted,
        }

    def write(self, json_path: str | Path, series_path: str | Path) -> None:
        Path(json_path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        with open(series_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "actual_mw", "predicted_mw", "fold"])
            for ts, a, p, f in self.series:
                w.writerow([format_timestamp(ts), repr(float(a)), repr(float(p)), f])


def _monthly(ds: Dataset, pred: np.ndarray) -> dict[int, float]:
    months = ds.columns["month"]
    actual = ds.columns["demand"]
    return {int(m): mape(pred[months == m], actual[months == m]) for m in np.unique(months)}


def _fit_and_score(train_ds: Dataset, test_ds: Dataset, config, priors, params, backend):
    report = train(train_ds, priors, config, params, backend=backend)
    train_pred, _ = predict_dataset(report.guide, train_ds, params)
    test_pred, _ = predict_dataset(report.guide, test_ds, params)
    return (
        report,
        mape(train_pred, train_ds.columns["demand"]),
        mape(test_pred, test_ds.columns["demand"]),
        test_pred,
    )


def train_test_eval(
    ds: Dataset,
    split: datetime,
    config: TrainConfig = TrainConfig(),
    *,
    priors: PriorSpec = DEFAULT_PRIORS,
    params: ScmParams | None = None,
    backend: str | None = None,
) -> tuple[EvalReport, TrainReport]:
    """Train on records before ``split`` and score plug-in predictions on both sides."""
    params = params or default_params()
    ts = ds.timestamps
    before = [i for i, t in enumerate(ts) if t < split]
    after = [i for i, t in enumerate(ts) if t >= split]
    if not before or not after:
        raise ValidationError(f"split {split.isoformat()} leaves an empty side ({len(before)} / {len(after)})")
    train_ds, test_ds = ds.take(before), ds.take(after)
    report, train_m, test_m, pred = _fit_and_score(train_ds, test_ds, config, priors, params, backend)
    series = [(t, a, p, 0) for t, a, p in zip(test_ds.timestamps, test_ds.columns["demand"], pred)]
    ev = EvalReport([test_m], _monthly(test_ds, pred), series, [train_m], report.aborted)
    return ev, report


def fold_seeds(seed: int, k: int) -> list[int]:
    """Independent per-fold training seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def cross_validate(
    ds: Dataset,
    k: int = 5,
    config: TrainConfig = TrainConfig(),
    *,
    priors: PriorSpec = DEFAULT_PRIORS,
    params: ScmParams | None = None,
    backend: str | None = None,
) -> EvalReport:
    """Contiguous k-fold cross-validation; each fold is scored by a model trained on the rest.

    Raises:
        ValidationError: ``k < 2`` or fewer than ``5 * k`` records.
    """
    if k < 2:
        raise ValidationError(f"cross-validation needs k >= 2, got {k}")
    if len(ds) < 5 * k:
        raise ValidationError(f"need at least {5 * k} records for {k} folds, got {len(ds)}")
    params = params or default_params()
    plan = FoldPlan.contiguous(len(ds), k)
    fold_m, train_m, series = [], [], []
    pred_all = np.empty(len(ds))
    aborted = False
    for i, seed in enumerate(fold_seeds(config.seed, k)):
        tr, te = ds.take(plan.train_indices(i)), ds.take(plan.test_indices(i))
        report, m_tr, m_te, pred = _fit_and_score(tr, te, replace(config, seed=seed), priors, params, backend)
        aborted |= report.aborted
        fold_m.append(m_te)
        train_m.append(m_tr)
        pred_all[plan.test_indices(i)] = pred
        series.extend((t, a, p, i) for t, a, p in zip(te.timestamps, te.columns["demand"], pred))
    return EvalReport(fold_m, _monthly(ds, pred_all), series, train_m, aborted)
