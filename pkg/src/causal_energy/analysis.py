"""Confounding diagnostics and regression experiments on hourly demand data.

The routines here work on a :class:`~causal_energy.data.Dataset` (or plain
arrays) and return small result objects that serialise to JSON for the
``report`` stage.  Least squares goes through a column-pivoted QR so that
collinear designs are detected and named instead of silently solved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate, linalg, optimize, stats

from .data import CENTRAL, CalendarPoint, Dataset, HourlyRecord, TzRule, WeatherObservation
from .errors import RankDeficientError, ThinStratumError, ValidationError
from .scm import TWO_PI, harmonic_features

TEMP_MID = 56.0
HARMONIC_ORDER = 2
MIN_STRATUM = 30
SUMMER_MONTHS = (6, 7, 8)
WINTER_MONTHS = (12, 1, 2)


# ---------------------------------------------------------------------------
# least squares


@dataclass
class RegressionFit:
    """Ordinary least-squares fit with named coefficients.

    Attributes:
        names: one label per design column.
        coefficients: fitted values, aligned with ``names``.
        stderr: classical standard errors (NaN when there are no residual
            degrees of freedom).
        residuals: target minus fitted values.
        r_squared: centred when the design has a constant column, uncentred
            otherwise.
        n: number of rows.
        extra: analysis-specific scalars such as a stratum standard deviation.
    """

    names: tuple[str, ...]
    coefficients: np.ndarray
    stderr: np.ndarray
    residuals: np.ndarray
    r_squared: float
    n: int
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def predict(self, design: np.ndarray) -> np.ndarray:
        return np.asarray(design, dtype=np.float64) @ self.coefficients

    def to_json(self) -> dict:
        return {
            "coefficients": {k: float(v) for k, v in zip(self.names, self.coefficients)},
            "stderr": {k: float(v) for k, v in zip(self.names, self.stderr)},
            "r_squared": float(self.r_squared),
            "n": int(self.n),
            **{k: float(v) if isinstance(v, (int, float, np.floating)) else v for k, v in self.extra.items()},
        }


def solve_ols(design, target, names: Sequence[str] | None = None, *, rtol: float | None = None) -> RegressionFit:
    """Least squares by column-pivoted QR.

    Args:
        design: ``(n, p)`` regressor matrix; include a column of ones for an
            intercept.
        target: length-``n`` response.
        names: column labels, defaulting to ``x0, x1, ...``.
        rtol: relative pivot threshold below which a column counts as
            collinear.  Defaults to ``max(n, p) * machine epsilon``.

    Raises:
        ValidationError: shapes disagree, fewer rows than columns, or
            non-finite input.
        RankDeficientError: the design lacks full column rank.
    """
    X = np.asarray(design, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(target, dtype=np.float64)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ValidationError(f"{len(names)} names for {p} design columns")
    if y.shape != (n,):
        raise ValidationError(f"target has shape {y.shape}, expected ({n},)")
    if n < p:
        raise ValidationError(f"{n} rows cannot identify {p} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("design and target must be finite")

    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = (rtol if rtol is not None else max(n, p) * np.finfo(float).eps) * (diag[0] if p else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        raise RankDeficientError([names[j] for j in piv[rank:]])

    beta_piv = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[piv] = beta_piv
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = n - p
    if dof > 0:
        r_inv = linalg.solve_triangular(R, np.eye(p))
        cov_piv = (rss / dof) * (r_inv @ r_inv.T)
        se = np.empty(p)
        se[piv] = np.sqrt(np.diag(cov_piv))
    else:
        se = np.full(p, np.nan)

    has_const = bool(np.any(np.all(X == X[:1], axis=0) & (X[0] != 0))) if n else False
    tss = float(np.sum((y - y.mean()) ** 2)) if has_const else float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss <= 1e-300 else 0.0)
    return RegressionFit(names, beta, se, resid, r2, n)


# ---------------------------------------------------------------------------
# correlation with a Fisher-z confidence density


@dataclass(frozen=True)
class CorrelationDensity:
    """Approximate confidence density for a correlation coefficient.

    Treats ``atanh(r)`` as normal with mean ``atanh(r)`` and variance
    ``1 / (n - 3)`` and maps that back to the correlation scale.
    """

    r: float
    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValidationError(f"need n >= 4 for the density, got {self.n}")
        if not -1.0 < self.r < 1.0:
            raise ValidationError(f"correlation {self.r} is on the boundary; the density is degenerate")

    @property
    def _scale(self) -> float:
        return math.sqrt(self.n - 3)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        inside = np.abs(rho) < 1.0
        safe = np.where(inside, rho, 0.0)
        s = self._scale
        z = s * (np.arctanh(safe) - math.atanh(self.r))
        out = np.where(inside, s * stats.norm.pdf(z) / (1.0 - safe * safe), 0.0)
        return out if out.ndim else float(out)

    def log_density(self, rho: float) -> float:
        s = self._scale
        z = s * (math.atanh(rho) - math.atanh(self.r))
        return math.log(s) - 0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log1p(-rho * rho)

    def mode(self) -> float:
        """Location of the density maximum, found numerically.

        The Jacobian ``1 / (1 - rho^2)`` pulls the mode slightly away from
        ``r`` towards the nearer boundary; the shift shrinks like ``1 / n``.
        """
        lo, hi = self.interval(0.999999)
        res = optimize.minimize_scalar(lambda t: -self.log_density(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        return float(res.x)

    def stationary_mode(self) -> float:
        """Root of ``(n - 3)(atanh rho - atanh r) = 2 rho``, the analytic mode condition."""
        a = math.atanh(self.r)
        f = lambda t: (self.n - 3) * (math.atanh(t) - a) - 2.0 * t  # noqa: E731
        lo, hi = self.interval(0.999999)
        return float(optimize.brentq(f, lo, hi, xtol=1e-15))

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Central interval obtained by transforming the normal interval of ``atanh``."""
        if not 0.0 < level < 1.0:
            raise ValidationError(f"level must be in (0, 1), got {level}")
        half = stats.norm.ppf(0.5 + level / 2.0) / self._scale
        a = math.atanh(self.r)
        return math.tanh(a - half), math.tanh(a + half)

    def mass(self, lo: float = -1.0, hi: float = 1.0) -> float:
        """Quadrature of the density over ``[lo, hi]``, split at ``r`` for accuracy."""
        pts = sorted({lo, min(max(self.r, lo), hi), hi})
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            if b > a:
                total += integrate.quad(self, a, b, limit=400, epsabs=1e-12, epsrel=1e-10)[0]
        return total

    def to_json(self) -> dict:
        lo, hi = self.interval(0.95)
        return {"r": self.r, "n": self.n, "mode": self.mode(), "interval_95": [lo, hi]}


def correlation_with_density(x, y) -> tuple[float, CorrelationDensity]:
    """Pearson correlation of ``x`` and ``y`` plus its Fisher-z confidence density.

    Raises:
        ValidationError: fewer than four pairs, a constant input, or
            ``|r| = 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-d vectors of equal length")
    if x.size < 4:
        raise ValidationError(f"need at least 4 pairs, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValidationError("correlation undefined for a constant input")
    r = float(np.corrcoef(x, y)[0, 1])
    # an exact linear relation can come back a few ulps short of +-1
    if 1.0 - abs(r) <= 1e-12:
        raise ValidationError(f"correlation {r!r} is on the boundary; the density is degenerate")
    return r, CorrelationDensity(r, int(x.size))


# ---------------------------------------------------------------------------
# design helpers


def _window_mask(values: np.ndarray, window) -> np.ndarray:
    if window is None:
        return np.ones(values.shape, dtype=bool)
    if isinstance(window, tuple) and len(window) == 2:
        lo, hi = window
        if lo <= hi:
            return (values >= lo) & (values <= hi)
        return (values >= lo) | (values <= hi)  # wraps, e.g. (22, 3) or (11, 2)
    return np.isin(values, list(window))


def _dummies(values: np.ndarray, prefix: str) -> tuple[np.ndarray, list[str]]:
    """Indicator columns for every level but the first."""
    levels = np.unique(values)
    cols = [(values == lv).astype(np.float64) for lv in levels[1:]]
    names = [f"{prefix}_{int(lv)}" for lv in levels[1:]]
    return (np.column_stack(cols) if cols else np.empty((values.size, 0))), names


def hour_harmonics(hour: np.ndarray, order: int = HARMONIC_ORDER) -> tuple[np.ndarray, list[str]]:
    names = [f"hour_{f}_{j}" for j in range(1, order + 1) for f in ("sin", "cos")]
    return harmonic_features(TWO_PI * np.asarray(hour, dtype=np.float64) / 24.0, order), names


def _complete_columns(ds: Dataset) -> Mapping[str, np.ndarray]:
    cols = ds.columns
    if len(ds) and (np.isnan(cols["demand"]).any() or np.isnan(cols["temp_f"]).any()):
        raise ValidationError("analysis needs joined records with weather and demand")
    return cols


def month_columns(ds: Dataset, month: int) -> dict[str, np.ndarray]:
    if not 1 <= month <= 12:
        raise ValidationError(f"month {month} outside [1, 12]")
    cols = _complete_columns(ds)
    sel = cols["month"] == month if len(ds) else np.zeros(0, dtype=bool)
    if not sel.any():
        raise ThinStratumError(f"month {month}", 0, 1)
    return {k: np.asarray(v)[sel] for k, v in cols.items()}


# ---------------------------------------------------------------------------
# humidity


def conditional_humidity_effect(
    ds: Dataset,
    temp_threshold: float = 75.0,
    hour_window=None,
    month_window=None,
    *,
    adjust: bool = True,
    t_mid: float = TEMP_MID,
    min_records: int = MIN_STRATUM,
) -> RegressionFit:
    """Humidity coefficient on demand within a hot-weather stratum.

    The stratum keeps records with temperature above ``temp_threshold`` whose
    hour and month fall in the given windows (``(lo, hi)`` inclusive, wrapping
    allowed, or an explicit collection).  With ``adjust`` the regression also
    holds hour and month fixed through indicator columns and includes the
    V-shaped temperature deviation, which closes the path through the calendar.

    The returned fit carries ``stratum_demand_sd`` and ``stratum_size`` in
    ``extra``.

    Raises:
        ThinStratumError: fewer than ``min_records`` records in the stratum.
    """
    cols = _complete_columns(ds)
    t = np.asarray(cols["temp_f"])
    mask = (t > temp_threshold) & _window_mask(cols["hour"], hour_window) & _window_mask(cols["month"], month_window)
    count = int(mask.sum())
    if count < min_records:
        raise ThinStratumError(f"stratum T > {temp_threshold:g} F", count, min_records)
    rh = np.asarray(cols["rh"])[mask]
    demand = np.asarray(cols["demand"])[mask]
    blocks = [np.ones((count, 1)), rh[:, None]]
    names = ["intercept", "humidity"]
    if adjust:
        blocks.append(np.abs(t[mask] - t_mid)[:, None])
        names.append("temp_dev")
        for key, prefix in (("hour", "hour"), ("month", "month")):
            d, dn = _dummies(np.asarray(cols[key])[mask], prefix)
            blocks.append(d)
            names.extend(dn)
    fit = solve_ols(np.hstack(blocks), demand, names)
    fit.extra.update(stratum_demand_sd=float(np.std(demand, ddof=1)), stratum_size=count)
    return fit


def humidity_profiles(ds: Dataset, month: int, edges: Sequence[float] | None = None) -> list[dict]:
    """Per-hour histogram densities of humidity within one month."""
    cols = month_columns(ds, month)
    edges = np.asarray(edges if edges is not None else np.linspace(0.0, 1.0, 21))
    rows = []
    for hour in range(24):
        vals = cols["rh"][cols["hour"] == hour]
        if vals.size == 0:
            continue
        dens, _ = np.histogram(vals, bins=edges, density=True)
        for lo, hi, d in zip(edges[:-1], edges[1:], dens):
            rows.append({"month": month, "hour": hour, "bin_lo": float(lo), "bin_hi": float(hi), "density": float(d)})
    return rows


def grid_search_threshold(ds: Dataset, candidate_grid: Iterable[float], effect: str = "humidity") -> float:
    """Grid point maximising ``corr(humidity * 1[T > tau], demand)``.

    Ties go to the lower threshold.  A threshold that leaves the feature
    constant scores negative infinity.
    """
    if effect != "humidity":
        raise ValidationError(f"unsupported effect {effect!r}")
    grid = sorted(float(g) for g in candidate_grid)
    if not grid:
        raise ValidationError("candidate grid is empty")
    cols = _complete_columns(ds)
    t, rh, demand = (np.asarray(cols[k]) for k in ("temp_f", "rh", "demand"))
    best, best_score = grid[0], -math.inf
    for tau in grid:
        feat = rh * (t > tau)
        if feat.size < 2 or np.ptp(feat) == 0 or np.ptp(demand) == 0:
            score = -math.inf
        else:
            score = float(np.corrcoef(feat, demand)[0, 1])
        if score > best_score:
            best, best_score = tau, score
    return best


# ---------------------------------------------------------------------------
# temperature: naive two-stage fit against the joint fit


def _temperature_design(cols: Mapping[str, np.ndarray], t_mid: float, order: int):
    dev = np.abs(np.asarray(cols["temp_f"]) - t_mid)
    harm, hnames = hour_harmonics(cols["hour"], order)
    return dev, harm, hnames


def fit_approach1(
    ds: Dataset, month: int, *, t_mid: float = TEMP_MID, order: int = HARMONIC_ORDER
) -> tuple[RegressionFit, RegressionFit]:
    """Two sequential regressions that ignore the hour confounder.

    Stage 1 regresses demand on an intercept and ``|T - t_mid|``; stage 2
    regresses the stage-1 residuals on hour harmonics.
    """
    cols = month_columns(ds, month)
    dev, harm, hnames = _temperature_design(cols, t_mid, order)
    n = dev.size
    stage1 = solve_ols(np.column_stack([np.ones(n), dev]), cols["demand"], ["intercept", "temp_dev"])
    stage2 = solve_ols(harm, stage1.residuals, hnames)
    return stage1, stage2


def fit_approach2(ds: Dataset, month: int, *, t_mid: float = TEMP_MID, order: int = HARMONIC_ORDER) -> RegressionFit:
    """Joint regression of demand on intercept, ``|T - t_mid|`` and hour harmonics."""
    cols = month_columns(ds, month)
    dev, harm, hnames = _temperature_design(cols, t_mid, order)
    n = dev.size
    return solve_ols(np.column_stack([np.ones(n), dev, harm]), cols["demand"], ["intercept", "temp_dev", *hnames])


def fwl_fit(ds: Dataset, month: int, *, t_mid: float = TEMP_MID, order: int = HARMONIC_ORDER) -> RegressionFit:
    """Temperature coefficient by partialling out the hour block first.

    Demand and ``|T - t_mid|`` are each residualised on intercept plus hour
    harmonics, then the residuals are regressed on each other.  The slope
    equals the joint-regression coefficient exactly (up to rounding).
    """
    cols = month_columns(ds, month)
    dev, harm, hnames = _temperature_design(cols, t_mid, order)
    n = dev.size
    block = np.column_stack([np.ones(n), harm])
    names = ["intercept", *hnames]
    r_y = solve_ols(block, cols["demand"], names).residuals
    r_x = solve_ols(block, dev, names).residuals
    return solve_ols(r_x[:, None], r_y, ["temp_dev"])


def approach1_predict(stage1: RegressionFit, stage2: RegressionFit, cols, *, t_mid: float = TEMP_MID) -> np.ndarray:
    order = len(stage2.names) // 2
    dev, harm, _ = _temperature_design(cols, t_mid, order)
    return stage1["intercept"] + stage1["temp_dev"] * dev + harm @ stage2.coefficients


def approach2_predict(fit: RegressionFit, cols, *, t_mid: float = TEMP_MID) -> np.ndarray:
    order = (len(fit.names) - 2) // 2
    dev, harm, _ = _temperature_design(cols, t_mid, order)
    return fit.predict(np.column_stack([np.ones(dev.size), dev, harm]))


@dataclass
class MonthComparison:
    month: int
    coef_naive: float
    coef_adjusted: float
    coef_fwl: float
    deviation: float
    n_train: int
    mape_naive: float | None = None
    mape_adjusted: float | None = None
    n_test: int = 0

    @property
    def mape_gap(self) -> float | None:
        if self.mape_naive is None or self.mape_adjusted is None:
            return None
        return (self.mape_naive - self.mape_adjusted) / self.mape_adjusted


@dataclass
class ApproachComparison:
    """Per-month naive-vs-adjusted results with equal-weight and size-weighted aggregates."""

    months: list[MonthComparison]

    def _agg(self, attr: str, weight_attr: str | None) -> float | None:
        vals = [(getattr(m, attr), getattr(m, weight_attr) if weight_attr else 1) for m in self.months]
        vals = [(v, w) for v, w in vals if v is not None and w > 0]
        if not vals:
            return None
        v, w = np.array(vals, dtype=np.float64).T
        return float(np.sum(v * w) / np.sum(w))

    @property
    def mean_deviation(self) -> float | None:
        return self._agg("deviation", None)

    @property
    def weighted_deviation(self) -> float | None:
        return self._agg("deviation", "n_train")

    @property
    def mean_mape_gap(self) -> float | None:
        return self._agg("mape_gap", None)

    @property
    def weighted_mape_gap(self) -> float | None:
        return self._agg("mape_gap", "n_test")

    def rows(self) -> list[dict]:
        return [
            {
                "month": m.month,
                "coef_naive": m.coef_naive,
                "coef_adjusted": m.coef_adjusted,
                "coef_fwl": m.coef_fwl,
                "deviation": m.deviation,
                "n_train": m.n_train,
                "mape_naive": m.mape_naive,
                "mape_adjusted": m.mape_adjusted,
                "mape_gap": m.mape_gap,
                "n_test": m.n_test,
            }
            for m in self.months
        ]

    def summary(self) -> dict:
        return {
            "months": [m.month for m in self.months],
            "mean_deviation": self.mean_deviation,
            "weighted_deviation": self.weighted_deviation,
            "mean_mape_gap": self.mean_mape_gap,
            "weighted_mape_gap": self.weighted_mape_gap,
        }


def compare_approaches(
    train: Dataset,
    test: Dataset | None = None,
    months: Iterable[int] | None = None,
    *,
    t_mid: float = TEMP_MID,
    order: int = HARMONIC_ORDER,
) -> ApproachComparison:
    """Fit both approaches month by month and score them on ``test`` when given.

    Deviation is ``|coef_naive - coef_adjusted| / |coef_adjusted|``; the MAPE
    gap is ``(MAPE_naive - MAPE_adjusted) / MAPE_adjusted``.  Months missing
    from the training data are skipped.
    """
    from .evaluation import mape

    present = set(np.unique(train.columns["month"]).tolist()) if len(train) else set()
    months = sorted(present if months is None else set(months) & present)
    out = []
    for month in months:
        s1, s2 = fit_approach1(train, month, t_mid=t_mid, order=order)
        a2 = fit_approach2(train, month, t_mid=t_mid, order=order)
        fw = fwl_fit(train, month, t_mid=t_mid, order=order)
        row = MonthComparison(
            month=month,
            coef_naive=s1["temp_dev"],
            coef_adjusted=a2["temp_dev"],
            coef_fwl=fw["temp_dev"],
            deviation=abs(s1["temp_dev"] - a2["temp_dev"]) / abs(a2["temp_dev"]),
            n_train=s1.n,
        )
        if test is not None and len(test) and month in set(test.columns["month"].tolist()):
            cols = month_columns(test, month)
            row.mape_naive = mape(approach1_predict(s1, s2, cols, t_mid=t_mid), cols["demand"])
            row.mape_adjusted = mape(approach2_predict(a2, cols, t_mid=t_mid), cols["demand"])
            row.n_test = int(cols["demand"].size)
        out.append(row)
    return ApproachComparison(out)


# ---------------------------------------------------------------------------
# backdoor adjustment on a linear instance


@dataclass(frozen=True)
class LinearScmInstance:
    """Linear-Gaussian model with a discrete confounder.

    ``z`` takes ``z_values`` with probabilities ``z_probs``;
    ``x = x_intercept + x_from_z * z + N(0, x_noise_sd)`` and
    ``y = y_intercept + y_from_x * x + y_from_z * z + N(0, y_noise_sd)``.
    """

    z_values: tuple[float, ...] = (0.0, 1.0)
    z_probs: tuple[float, ...] = (0.5, 0.5)
    x_from_z: float = 1.0
    y_from_x: float = 2.0
    y_from_z: float = 3.0
    x_intercept: float = 0.0
    y_intercept: float = 0.0
    x_noise_sd: float = 1.0
    y_noise_sd: float = 1.0

    def __post_init__(self):
        if len(self.z_values) != len(self.z_probs) or not self.z_values:
            raise ValidationError("z_values and z_probs must be non-empty and of equal length")
        if any(p < 0 for p in self.z_probs) or abs(sum(self.z_probs) - 1.0) > 1e-12:
            raise ValidationError(f"z probabilities must be non-negative and sum to 1, got {self.z_probs}")
        if self.x_noise_sd <= 0 or self.y_noise_sd < 0:
            raise ValidationError("noise scales must be positive")

    @property
    def z_mean(self) -> float:
        return float(np.dot(self.z_values, self.z_probs))

    @property
    def z_var(self) -> float:
        z = np.asarray(self.z_values)
        return float(np.dot(self.z_probs, (z - self.z_mean) ** 2))

    def expected_y_given(self, x: float, z: float) -> float:
        return self.y_intercept + self.y_from_x * x + self.y_from_z * z

    def expected_y_do(self, x: float) -> float:
        """``E[y | do(x)]`` by the adjustment formula: average over ``P(z)`` with ``x`` held fixed."""
        return float(sum(p * self.expected_y_given(x, z) for z, p in zip(self.z_values, self.z_probs)))

    def do_coefficient(self) -> float:
        return self.expected_y_do(1.0) - self.expected_y_do(0.0)

    def naive_coefficient(self) -> float:
        """Population slope of ``y`` on ``x`` alone (omitted-variable bias included)."""
        cov_xz = self.x_from_z * self.z_var
        var_x = self.x_from_z**2 * self.z_var + self.x_noise_sd**2
        return self.y_from_x + self.y_from_z * cov_xz / var_x

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        z = rng.choice(np.asarray(self.z_values, dtype=np.float64), size=n, p=np.asarray(self.z_probs))
        x = self.x_intercept + self.x_from_z * z + rng.normal(0.0, self.x_noise_sd, n)
        y = self.y_intercept + self.y_from_x * x + self.y_from_z * z + rng.normal(0.0, self.y_noise_sd, n)
        return z, x, y


@dataclass(frozen=True)
class BackdoorResult:
    regression_coef: float
    regression_se: float
    do_coef: float
    abs_diff: float
    naive_coef: float
    naive_se: float
    naive_expected: float
    stratified_coef: float
    n: int

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def backdoor_check(instance: LinearScmInstance, n_samples: int, seed: int) -> BackdoorResult:
    """Compare the adjusted regression slope with the analytic interventional slope.

    The adjusted slope comes from OLS of ``y`` on ``(1, x, z)``.  Also reported:
    the naive slope from ``y`` on ``(1, x)``, its population value, and a
    stratified estimate that averages within-``z`` slopes over the empirical
    ``P(z)``.
    """
    if n_samples < 4:
        raise ValidationError("n_samples must be at least 4")
    rng = np.random.default_rng(seed)
    z, x, y = instance.sample(n_samples, rng)
    ones = np.ones(n_samples)
    levels = np.unique(z)
    if levels.size > 1:
        adjusted = solve_ols(np.column_stack([ones, x, z]), y, ["intercept", "x", "z"])
    else:
        adjusted = solve_ols(np.column_stack([ones, x]), y, ["intercept", "x"])
    naive = solve_ols(np.column_stack([ones, x]), y, ["intercept", "x"])
    strat, weight = 0.0, 0
    for lv in levels:
        sel = z == lv
        if sel.sum() >= 3:
            strat += sel.sum() * solve_ols(np.column_stack([ones[sel], x[sel]]), y[sel], ["intercept", "x"])["x"]
            weight += int(sel.sum())
    do = instance.do_coefficient()
    return BackdoorResult(
        regression_coef=adjusted["x"],
        regression_se=adjusted.se("x"),
        do_coef=do,
        abs_diff=abs(adjusted["x"] - do),
        naive_coef=naive["x"],
        naive_se=naive.se("x"),
        naive_expected=instance.naive_coefficient(),
        stratified_coef=strat / weight if weight else float("nan"),
        n=n_samples,
    )


# ---------------------------------------------------------------------------
# variance by season


@dataclass(frozen=True)
class SeasonalVariance:
    variances: dict[int, float]
    counts: dict[int, int]

    @property
    def summer(self) -> float:
        return float(np.mean([self.variances[m] for m in SUMMER_MONTHS]))

    @property
    def winter(self) -> float:
        return float(np.mean([self.variances[m] for m in WINTER_MONTHS]))

    @property
    def ratio(self) -> float:
        return self.summer / self.winter if self.winter > 0 else math.inf

    def rows(self) -> list[dict]:
        return [{"month": m, "count": self.counts[m], "variance": self.variances[m]} for m in sorted(self.variances)]

    def summary(self) -> dict:
        return {"summer_variance": self.summer, "winter_variance": self.winter, "summer_winter_ratio": self.ratio}


def seasonal_variance(ds: Dataset, *, min_records: int = MIN_STRATUM) -> SeasonalVariance:
    """Sample variance (``ddof=1``) of demand for each calendar month.

    Raises:
        ThinStratumError: any month has fewer than ``min_records`` records.
    """
    cols = ds.columns
    demand = np.asarray(cols["demand"])
    if np.isnan(demand).any():
        raise ValidationError("demand has missing values")
    variances, counts = {}, {}
    for m in range(1, 13):
        vals = demand[cols["month"] == m]
        if vals.size < min_records:
            raise ThinStratumError(f"month {m}", int(vals.size), min_records)
        variances[m] = float(np.var(vals, ddof=1))
        counts[m] = int(vals.size)
    return SeasonalVariance(variances, counts)


# ---------------------------------------------------------------------------
# regime profiles for radiation and wind


def binned_profile(x, y, edges: Sequence[float]) -> list[dict]:
    """Count, mean and standard deviation of ``y`` within bins of ``x`` (right-open; last bin closed)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, edges.size - 2)
    inside = (x >= edges[0]) & (x <= edges[-1])
    rows = []
    for b in range(edges.size - 1):
        vals = y[inside & (idx == b)]
        rows.append(
            {
                "bin_lo": float(edges[b]),
                "bin_hi": float(edges[b + 1]),
                "count": int(vals.size),
                "mean": float(vals.mean()) if vals.size else float("nan"),
                "sd": float(vals.std(ddof=1)) if vals.size > 1 else float("nan"),
            }
        )
    return rows


def _regime_slope(x: np.ndarray, y: np.ndarray, hours: np.ndarray) -> dict:
    """Slope of ``y`` on ``x`` with hour indicators, or ``None`` values if unidentifiable."""
    d, dn = _dummies(hours, "hour")
    design = np.column_stack([np.ones(x.size), x, d])
    if x.size <= design.shape[1] or np.ptp(x) == 0:
        return {"slope": None, "slope_se": None}
    try:
        fit = solve_ols(design, y, ["intercept", "x", *dn])
    except RankDeficientError:
        return {"slope": None, "slope_se": None}
    return {"slope": fit["x"], "slope_se": fit.se("x")}


RADIATION_REGIMES = {
    "summer_afternoon": ((6, 7, 8), (13, 16)),
    "summer_sunset": ((6, 7, 8), (19, 21)),
    "winter_afternoon": ((12, 1, 2), (13, 16)),
    "winter_sunset": ((12, 1, 2), (16, 18)),
}
WIND_BANDS = {"hot": (80.0, 85.0), "cold": (-10.0, -5.0)}


def radiation_regimes(ds: Dataset, edges: Sequence[float] | None = None, regimes=None) -> dict[str, dict]:
    """Demand against radiation within season and hour-of-day regimes."""
    cols = _complete_columns(ds)
    edges = edges if edges is not None else np.linspace(0.0, 1000.0, 11)
    out = {}
    for name, (months, hours) in (regimes or RADIATION_REGIMES).items():
        sel = _window_mask(cols["month"], months) & _window_mask(cols["hour"], hours)
        x, y, h = cols["rad"][sel], cols["demand"][sel], cols["hour"][sel]
        out[name] = {"count": int(sel.sum()), "bins": binned_profile(x, y, edges), **_regime_slope(x, y, h)}
    return out


def wind_regimes(ds: Dataset, edges: Sequence[float] | None = None, bands=None) -> dict[str, dict]:
    """Demand against wind speed within narrow temperature bands."""
    cols = _complete_columns(ds)
    edges = edges if edges is not None else np.linspace(0.0, 40.0, 9)
    out = {}
    for name, (lo, hi) in (bands or WIND_BANDS).items():
        sel = (cols["temp_f"] >= lo) & (cols["temp_f"] <= hi)
        x, y, h = cols["wind"][sel], cols["demand"][sel], cols["hour"][sel]
        out[name] = {"temp_range": [lo, hi], "count": int(sel.sum()), "bins": binned_profile(x, y, edges),
                     **_regime_slope(x, y, h)}
    return out


# ---------------------------------------------------------------------------
# synthetic data with an hour-confounded temperature effect


def confounded_month(
    month: int = 7,
    year: int = 2024,
    *,
    coef: float = 25.0,
    seed: int = 0,
    confounded: bool = True,
    t_mid: float = TEMP_MID,
    temp_level: float = 80.0,
    temp_swing: float = 10.0,
    temp_noise: float = 3.0,
    activity_amp: float = 300.0,
    base: float = 3000.0,
    noise_sd: float = 60.0,
    tz: TzRule = CENTRAL,
) -> Dataset:
    """One calendar month of hourly records where demand is linear in ``|T - t_mid|``.

    Temperature follows a daily cycle peaking mid-afternoon and the activity
    component of demand peaks at about the same hour, so the hour of day
    confounds the temperature effect.  With ``confounded=False`` temperature
    has the same marginal spread but no dependence on the hour.
    """
    rng = np.random.default_rng(seed)
    start = tz.to_utc(datetime(year, month, 1, 0))
    end = tz.to_utc(datetime(year + (month == 12), month % 12 + 1, 1, 0))
    hours = int((end - start).total_seconds() // 3600)
    records = []
    for i in range(hours):
        ts = start + timedelta(hours=i)
        cal = tz.calendar(ts)
        if cal.month != month:
            continue
        phase = TWO_PI * (cal.hour - 15) / 24.0
        if confounded:
            temp = temp_level + temp_swing * math.cos(phase) + rng.normal(0.0, temp_noise)
        else:
            temp = temp_level + rng.normal(0.0, math.sqrt(temp_swing**2 / 2 + temp_noise**2))
        activity = activity_amp * math.cos(TWO_PI * (cal.hour - 14) / 24.0)
        demand = base + coef * abs(temp - t_mid) + activity + rng.normal(0.0, noise_sd)
        weather = WeatherObservation(temp, 0.5, 5.0, 0.0)
        records.append(HourlyRecord(ts, CalendarPoint(cal.hour, cal.month), weather, float(demand)))
    return Dataset(tuple(records), {"synthetic": "confounded_month", "coef": coef, "seed": seed})
