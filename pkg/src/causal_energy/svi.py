"""Stochastic variational inference for the demand model.

The guide is a diagonal Gaussian over unconstrained coordinates: natural
units for Normal-prior latents, log units for LogNormal-prior latents.  Each
ELBO evaluation records the reparameterised draw, prior and guide densities on
a fresh :class:`~causal_energy.autodiff.Tape`; the data likelihood enters the
tape as one fused node whose partials come from :mod:`causal_energy.kernels`.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from . import kernels
from .data import CalendarPoint, Dataset, WeatherObservation
from .errors import NonFiniteElboError, ValidationError
from .priors import DEFAULT_PRIORS, PriorSpec
from .scm import (
    ScmParams,
    default_params,
    demand_mean_array,
    humidity_shapes,
    latent_names,
    predict_demand,
    radiation_mean,
    temp_mean,
)

log = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# densities (float or DiffScalar)


def normal_logpdf(x, mu, sd):
    r = (x - mu) / sd
    return -ad.log(sd) - LOG_SQRT_2PI - 0.5 * r * r


def lognormal_logpdf(x, loc, scale):
    lx = ad.log(x)
    return normal_logpdf(lx, loc, scale) - lx


def beta_logpdf(x: float, a, b):
    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - ad.lgamma(a) - ad.lgamma(b) + ad.lgamma(a + b)


def censored_normal_logpdf(x: float, mu, sd):
    """Density of ``max(0, N(mu, sd))``: point mass at zero, normal density above."""
    if x <= 0.0:
        return ad.log_ndtr(-mu / sd)
    return normal_logpdf(x, mu, sd)


# ---------------------------------------------------------------------------
# prior and likelihood


def log_prior(latents: Mapping[str, object], priors: PriorSpec = DEFAULT_PRIORS):
    """Sum of prior log-densities of natural-unit latent values."""
    total = 0.0
    for name, entry in priors.entries.items():
        if name not in latents:
            raise ValidationError(f"no value for latent {name!r}")
        x = latents[name]
        if entry.log_space:
            total = total + lognormal_logpdf(x, entry.loc, entry.scale)
        else:
            total = total + normal_logpdf(x, entry.loc, entry.scale)
    return total


def _theta(latents: Mapping[str, float], n: int) -> np.ndarray:
    names = latent_names(n)
    missing = [k for k in names if k not in latents]
    if missing:
        raise ValidationError(f"no value for latents {missing}")
    return np.array([float(latents[k]) for k in names])


def log_likelihood_terms(
    batch: kernels.PreparedBatch, latents: Mapping[str, float], n: int = 2, backend: str | None = None
) -> dict[str, float]:
    terms, _ = kernels.loglik_grad(_theta(latents, n), batch, n, backend=backend)
    return dict(zip(kernels.TERM_NAMES, terms.tolist()))


def log_likelihood(ds: Dataset, latents: Mapping[str, float], params: ScmParams | None = None) -> float:
    """Joint log-density of observed weather and demand given latent values.

    ``params`` supplies the fixed quantities (thresholds, solar table, ...).
    """
    params = params or default_params()
    if len(ds) == 0:
        return 0.0
    batch = kernels.prepare_batch(ds, params)
    return sum(log_likelihood_terms(batch, latents, params.harmonic_order).values())


def log_likelihood_tape(ds: Dataset, params: ScmParams):
    """Same density as :func:`log_likelihood`, written record by record.

    ``params`` may hold DiffScalar latents, in which case the result is
    recorded on their tape.  Slow; used to cross-check the kernels.
    """
    total = 0.0
    for rec in ds:
        cal, wx = rec.calendar, rec.weather
        x = min(max(wx.humidity, kernels.HUMIDITY_CLIP), 1.0 - kernels.HUMIDITY_CLIP)
        a, b = humidity_shapes(cal, params)
        total = total + normal_logpdf(wx.temperature, temp_mean(cal, wx.radiation, params), params.temp_noise_sd)
        total = total + beta_logpdf(x, a, b)
        total = total + censored_normal_logpdf(wx.radiation, radiation_mean(cal, params), params.rad_sd)
        total = total + censored_normal_logpdf(wx.wind_speed, params.wind_mean, params.wind_sd)
        total = total + normal_logpdf(rec.demand, predict_demand(cal, wx, params), params.demand_noise_sd)
    return total


# ---------------------------------------------------------------------------
# guide


INIT_SD = 0.1


@dataclass(frozen=True)
class GuideState:
    names: tuple[str, ...]
    mean: np.ndarray
    log_sd: np.ndarray
    log_space: np.ndarray

    def __post_init__(self):
        sd = np.exp(self.log_sd)
        if not (np.all(np.isfinite(sd)) and np.all(sd > 0)):
            raise ValidationError("guide standard deviations must be finite and positive")

    @classmethod
    def from_priors(
        cls, priors: PriorSpec = DEFAULT_PRIORS, names: Sequence[str] | None = None, init_sd: float = INIT_SD
    ) -> "GuideState":
        """Means at prior locations and a common small standard deviation in unconstrained units."""
        names = tuple(names or latent_names())
        missing = [k for k in names if k not in priors]
        if missing:
            raise ValidationError(f"priors missing for latents {missing}")
        entries = [priors[k] for k in names]
        return cls(
            names,
            np.array([e.loc for e in entries]),
            np.full(len(entries), math.log(init_sd)),
            np.array([e.log_space for e in entries]),
        )

    @property
    def sd(self) -> np.ndarray:
        return np.exp(self.log_sd)

    @property
    def size(self) -> int:
        return len(self.names)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.mean, self.log_sd])

    def with_vector(self, v: np.ndarray) -> "GuideState":
        p = self.size
        return replace(self, mean=np.array(v[:p]), log_sd=np.array(v[p:]))

    def to_natural(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return np.where(self.log_space, np.exp(np.where(self.log_space, u, 0.0)), u)

    def point(self) -> dict[str, float]:
        """Natural-unit values at the guide means."""
        return dict(zip(self.names, self.to_natural(self.mean).tolist()))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Natural-unit draws, shape ``(size, n_latents)``."""
        u = self.mean + self.sd * rng.standard_normal((size, self.size))
        return self.to_natural(u)

    def summary(self) -> dict[str, dict]:
        out = {}
        natural = self.to_natural(self.mean)
        for i, name in enumerate(self.names):
            out[name] = {
                "mean": float(self.mean[i]),
                "sd": float(self.sd[i]),
                "space": "log" if self.log_space[i] else "identity",
                "point": float(natural[i]),
            }
        return out

    @classmethod
    def from_summary(cls, summary: Mapping[str, Mapping]) -> "GuideState":
        names = tuple(summary)
        return cls(
            names,
            np.array([float(summary[k]["mean"]) for k in names]),
            np.log(np.array([float(summary[k]["sd"]) for k in names])),
            np.array([summary[k]["space"] == "log" for k in names]),
        )


# ---------------------------------------------------------------------------
# ELBO


def elbo_estimate(
    batch: kernels.PreparedBatch | None,
    priors: PriorSpec,
    guide: GuideState,
    rng: np.random.Generator | None = None,
    n_particles: int = 1,
    *,
    harmonic_order: int = 2,
    weight: float = 1.0,
    eps: np.ndarray | None = None,
    backend: str | None = None,
) -> ad.DiffScalar:
    """Reparameterised Monte-Carlo ELBO recorded on a new tape.

    The tape's leaves are the guide means followed by the guide log-sds, so
    ``backward(result)`` is the gradient over ``guide.vector()``.  Supplying
    ``eps`` (shape ``(n_particles, n_latents)``) fixes the noise for common
    random numbers.  ``weight`` rescales the likelihood of a minibatch.
    """
    if n_particles < 1:
        raise ValidationError("n_particles must be >= 1")
    p = guide.size
    if eps is None:
        eps = rng.standard_normal((n_particles, p))
    eps = np.asarray(eps, dtype=np.float64).reshape(n_particles, p)

    tape = ad.Tape()
    means = [tape.leaf(m, name) for m, name in zip(guide.mean, guide.names)]
    log_sds = [tape.leaf(s, name + "__log_sd") for s, name in zip(guide.log_sd, guide.names)]
    sds = [ad.exp(s) for s in log_sds]
    entries = [priors[k] for k in guide.names]
    use_data = batch is not None and len(batch) > 0

    pieces = []
    for k in range(n_particles):
        u = [m + s * float(e) for m, s, e in zip(means, sds, eps[k])]
        z = [ad.exp(ui) if lg else ui for ui, lg in zip(u, guide.log_space)]
        for ui, zi, ls, entry, m, s in zip(u, z, log_sds, entries, means, sds):
            if entry.log_space:
                pieces.append(lognormal_logpdf(zi, entry.loc, entry.scale) + ui)
            else:
                pieces.append(normal_logpdf(zi, entry.loc, entry.scale))
            r = (ui - m) / s
            pieces.append(ls + LOG_SQRT_2PI + 0.5 * r * r)
        if use_data:
            theta = np.array([zi.value for zi in z])
            terms, grad = kernels.loglik_grad(theta, batch, harmonic_order, weight, backend=backend)
            loglik = math.fsum(terms)
            if not math.isfinite(loglik) or not np.all(np.isfinite(grad)):
                raise NonFiniteElboError(loglik, dict(zip(guide.names, theta.tolist())))
            pieces.append(tape.custom(loglik, z, grad, kind="loglik"))
    total = ad.fsum(pieces)
    elbo = total * (1.0 / n_particles) if n_particles > 1 else total
    if not isinstance(elbo, ad.DiffScalar):
        elbo = tape.constant(elbo)
    if not math.isfinite(elbo.value):
        raise NonFiniteElboError(elbo.value, {k: ad.value(v) for k, v in zip(guide.names, z)})
    return elbo


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, grads: np.ndarray, params: np.ndarray, *, maximize: bool = False):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``.

    Descends ``grads`` by default; ``maximize=True`` ascends.
    """
    grads = np.asarray(grads, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValidationError(f"gradient shape {grads.shape} does not match parameters {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    if maximize:
        grads = -grads
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    t = state.t + 1
    m = state.beta1 * m + (1.0 - state.beta1) * grads
    v = state.beta2 * v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, t=t, m=m, v=v), new_params


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    batch_size: int | None = None
    seed: int = 0
    n_particles: int = 1
    lr: float = 0.01

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "n_particles": self.n_particles,
            "lr": self.lr,
        }


@dataclass
class TrainReport:
    elbo_trace: list[float]
    guide: GuideState
    params: ScmParams
    priors: PriorSpec
    config: TrainConfig
    seed: int
    wall_clock: float = 0.0
    aborted: bool = False
    message: str = ""

    @property
    def posterior(self) -> dict[str, dict]:
        return self.guide.summary()

    def point_params(self) -> ScmParams:
        """Plug-in parameters at the guide means."""
        return self.params.with_latents(self.guide.point())

    def snapshot(self) -> dict:
        return {
            "latents": self.guide.summary(),
            "params": self.point_params().to_json(),
            "priors": self.priors.to_json(),
            "config": self.config.to_json(),
            "seed": self.seed,
            "aborted": self.aborted,
        }

    def write(self, snapshot_path: str | Path, trace_path: str | Path) -> None:
        Path(snapshot_path).write_text(json.dumps(self.snapshot(), indent=2, sort_keys=True) + "\n")
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("step,elbo\n")
            for i, v in enumerate(self.elbo_trace):
                fh.write(f"{i},{v!r}\n")


def load_snapshot(path: str | Path) -> tuple[GuideState, ScmParams]:
    """Guide and plug-in parameters from a snapshot, latents in canonical order."""
    doc = json.loads(Path(path).read_text())
    params = ScmParams.from_json(doc["params"])
    names = latent_names(params.harmonic_order)
    latents = doc["latents"]
    if set(latents) != set(names):
        raise ValidationError(f"snapshot latents do not match the model: {sorted(set(latents) ^ set(names))}")
    return GuideState.from_summary({k: latents[k] for k in names}), params


def train(
    ds: Dataset,
    priors: PriorSpec = DEFAULT_PRIORS,
    config: TrainConfig = TrainConfig(),
    params: ScmParams | None = None,
    *,
    backend: str | None = None,
    progress_every: int = 0,
) -> TrainReport:
    """Fit the guide by maximising the ELBO with Adam.

    ``params`` provides the fixed (non-latent) model quantities.  Training is
    deterministic for a given seed and backend.
    """
    if len(ds) == 0:
        raise ValidationError("cannot train on an empty dataset")
    params = params or default_params()
    n = params.harmonic_order
    guide = GuideState.from_priors(priors, latent_names(n))
    rng = np.random.default_rng(config.seed)
    full = kernels.prepare_batch(ds, params)
    n_rows = len(full)
    batch_size = config.batch_size if config.batch_size and config.batch_size < n_rows else None
    weight = n_rows / batch_size if batch_size else 1.0

    state = AdamState(lr=config.lr)
    vec = guide.vector()
    trace: list[float] = []
    failures = 0
    aborted, message = False, ""
    start = time.perf_counter()
    for step in range(config.steps):
        batch = full.take(np.sort(rng.choice(n_rows, batch_size, replace=False))) if batch_size else full
        current = guide.with_vector(vec)
        try:
            elbo = elbo_estimate(
                batch, priors, current, rng, config.n_particles, harmonic_order=n, weight=weight, backend=backend
            )
        except NonFiniteElboError as exc:
            failures += 1
            trace.append(float("nan"))
            if failures >= 2:
                aborted, message = True, f"diverged at step {step}: {exc}"
                log.warning(message)
                break
            continue
        failures = 0
        trace.append(elbo.value)
        grad = ad.backward(elbo)
        state, vec = adam_step(state, grad, vec, maximize=True)
        if progress_every and (step + 1) % progress_every == 0:
            log.info("step %d elbo %.3f", step + 1, elbo.value)
    return TrainReport(
        elbo_trace=trace,
        guide=guide.with_vector(vec),
        params=params,
        priors=priors,
        config=config,
        seed=config.seed,
        wall_clock=time.perf_counter() - start,
        aborted=aborted,
        message=message,
    )


# ---------------------------------------------------------------------------
# prediction


def _noise_second_moment(guide: GuideState) -> float:
    i = guide.names.index("demand_noise_sd")
    m, s = guide.mean[i], guide.sd[i]
    if guide.log_space[i]:
        return math.exp(2.0 * m + 2.0 * s * s)
    return m * m + s * s


def noise_posterior_mean(guide: GuideState) -> float:
    i = guide.names.index("demand_noise_sd")
    m, s = guide.mean[i], guide.sd[i]
    return math.exp(m + 0.5 * s * s) if guide.log_space[i] else m


def posterior_predict(
    guide: GuideState,
    cal: CalendarPoint,
    weather: WeatherObservation,
    params: ScmParams | None = None,
    *,
    n_draws: int = 0,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Plug-in mean demand and predictive standard deviation (MW).

    The sd combines the observation noise (second moment of its posterior) with,
    when ``n_draws > 0``, the Monte-Carlo spread of the mean over guide draws.
    """
    params = params or default_params()
    mean = predict_demand(cal, weather, params.with_latents(guide.point()))
    var = _noise_second_moment(guide)
    if n_draws > 0:
        means = _draw_means(guide, cal, weather, params, n_draws, rng or np.random.default_rng(0))
        var += float(np.var(means))
    return float(mean), math.sqrt(var)


def _draw_means(guide, cal, weather, params, n_draws, rng) -> np.ndarray:
    draws = guide.sample(rng, n_draws)
    return np.array([predict_demand(cal, weather, params.with_latents(dict(zip(guide.names, z)))) for z in draws])


def monte_carlo_predict(
    guide: GuideState,
    cal: CalendarPoint,
    weather: WeatherObservation,
    params: ScmParams | None = None,
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Mean of the predicted demand over guide draws and its standard error."""
    means = _draw_means(guide, cal, weather, params or default_params(), n_draws, rng or np.random.default_rng(0))
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(n_draws))


def predict_dataset(guide: GuideState, ds: Dataset, params: ScmParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in means and predictive sds for every record."""
    params = params or default_params()
    mean = demand_mean_array(ds.columns, params.with_latents(guide.point()))
    sd = np.full(mean.shape, math.sqrt(_noise_second_moment(guide)))
    return mean, sd
