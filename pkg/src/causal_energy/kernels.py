"""Likelihood kernel: fused log-density and gradient over a batch of records.

Two interchangeable implementations exist: a compiled Cython extension
(``_kernel``) and a numpy fallback (``_kernel_py``).  The compiled one is used
when it imports; :func:`use_backend` switches explicitly.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, fields

import numpy as np

from . import _kernel_py
from .data import Dataset
from .errors import ValidationError
from .scm import TWO_PI, ScmParams, daylight_shape, harmonic_features

try:
    from . import _kernel as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

HUMIDITY_CLIP = 1e-4
TERM_NAMES = ("temperature", "humidity", "radiation", "wind", "demand")

_BACKENDS = {"numpy": _kernel_py.loglik_grad}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled.loglik_grad
_active = "compiled" if _compiled is not None else "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; have {available_backends()}")
    _active = name


@contextmanager
def use_backend(name: str):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


@dataclass(frozen=True)
class PreparedBatch:
    """Parameter-free per-record features consumed by the kernels.

    Everything here depends only on observed data and the fixed model
    quantities (comfort midpoint, thresholds, active hours, solar table).
    """

    fm: np.ndarray
    fh: np.ndarray
    temp: np.ndarray
    rad: np.ndarray
    vdev: np.ndarray
    hs: np.ndarray
    hc: np.ndarray
    ms: np.ndarray
    mc: np.ndarray
    log_x: np.ndarray
    log_1mx: np.ndarray
    rh: np.ndarray
    ind_rh: np.ndarray
    wind: np.ndarray
    cold: np.ndarray
    hot: np.ndarray
    rad_month: np.ndarray
    rad_shape: np.ndarray
    act: np.ndarray
    demand: np.ndarray
    rad_zero: np.ndarray
    wind_zero: np.ndarray

    def __len__(self) -> int:
        return self.temp.shape[0]

    def take(self, idx: np.ndarray) -> "PreparedBatch":
        return PreparedBatch(**{f.name: np.ascontiguousarray(getattr(self, f.name)[idx]) for f in fields(self)})


def prepare_batch(ds: Dataset, params: ScmParams) -> PreparedBatch:
    cols = ds.columns
    for key in ("temp_f", "rh", "wind", "rad", "demand"):
        if np.isnan(cols[key]).any():
            raise ValidationError(f"dataset has missing {key} values; join weather and load first")
    hour = cols["hour"].astype(np.float64)
    month = cols["month"].astype(np.float64)
    n = params.harmonic_order
    t = cols["temp_f"].astype(np.float64)
    x = np.clip(cols["rh"], HUMIDITY_CLIP, 1.0 - HUMIDITY_CLIP)
    table = params.solar_table
    shape = np.array([daylight_shape(h, int(m), table) for h, m in zip(hour, month)])
    f64 = lambda a: np.ascontiguousarray(a, dtype=np.float64)  # noqa: E731
    return PreparedBatch(
        fm=f64(harmonic_features(TWO_PI * month / 12.0, n)),
        fh=f64(harmonic_features(TWO_PI * hour / 24.0, n)),
        temp=f64(t),
        rad=f64(cols["rad"]),
        vdev=f64(np.abs(t - params.temp_mid)),
        hs=f64(np.sin(math.pi * hour / 12.0)),
        hc=f64(np.cos(math.pi * hour / 12.0)),
        ms=f64(np.sin(math.pi * month / 6.0)),
        mc=f64(np.cos(math.pi * month / 6.0)),
        log_x=f64(np.log(x)),
        log_1mx=f64(np.log1p(-x)),
        rh=f64(cols["rh"]),
        ind_rh=f64(t > params.humid_temp_threshold),
        wind=f64(cols["wind"]),
        cold=f64(t < params.wind_cold_threshold),
        hot=f64(t > params.wind_hot_threshold),
        rad_month=f64(np.sin(math.pi * month / 12.0)),
        rad_shape=f64(shape),
        act=f64(np.isin(cols["hour"], sorted(params.active_hours))),
        demand=f64(cols["demand"]),
        rad_zero=f64(cols["rad"] <= 0.0),
        wind_zero=f64(cols["wind"] <= 0.0),
    )


def loglik_grad(theta: np.ndarray, batch: PreparedBatch, n: int = 2, weight: float = 1.0, backend: str | None = None):
    """``(terms, grad)``: per-term log-likelihood sums (see :data:`TERM_NAMES`) and d/d theta.

    ``theta`` is the latent vector in the order of :func:`causal_energy.scm.latent_names`.
    """
    fn = _BACKENDS[backend or _active]
    return fn(np.ascontiguousarray(theta, dtype=np.float64), batch, n, float(weight))
