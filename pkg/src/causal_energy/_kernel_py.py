"""Vectorised numpy implementation of the likelihood kernel.

Used when the compiled extension is unavailable, and as the reference the
compiled kernel is tested against.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import digamma, gammaln, log_ndtr

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SHAPE_FLOOR = 0.01
SHAPE_SHARPNESS = 10.0


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _censored_normal(x, is_zero, mu, sd):
    """Log-density of max(0, N(mu, sd)) and its partials in mu and sd."""
    r = (x - mu) / sd
    ll_pos = -math.log(sd) - LOG_SQRT_2PI - 0.5 * r * r
    t = -mu / sd
    lc = log_ndtr(t)
    mills = np.exp(-0.5 * t * t - LOG_SQRT_2PI - lc)
    zero = is_zero > 0.5
    ll = np.where(zero, lc, ll_pos)
    dmu = np.where(zero, -mills / sd, r / sd)
    dsd = np.where(zero, mills * mu / (sd * sd), (r * r - 1.0) / sd)
    return ll, dmu, dsd


def loglik_grad(theta, b, n, weight=1.0):
    """Per-term log-likelihood sums and gradient with respect to ``theta``.

    Returns ``(terms, grad)`` where ``terms`` holds the temperature, humidity,
    radiation, wind and demand contributions.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    terms = np.zeros(5)
    h2 = 2 * n
    base = 4 * n
    c, d = theta[:h2], theta[h2:base]

    # temperature
    w, tb, s_t = theta[base], theta[base + 1], theta[base + 2]
    # Residuals subtract the large base level first so the cancellation is exact.
    mu_t = b.fm @ c + b.fh @ d + w * b.rad
    r = ((b.temp - tb) - mu_t) / s_t
    terms[0] = math.fsum(-math.log(s_t) - LOG_SQRT_2PI - 0.5 * r * r)
    g = r / s_t
    grad[:h2] += b.fm.T @ g
    grad[h2:base] += b.fh.T @ g
    grad[base] += g @ b.rad
    grad[base + 1] += g.sum()
    grad[base + 2] += np.sum((r * r - 1.0) / s_t)

    # humidity
    th, th_c, ph, ph_c, a0, b0 = theta[base + 3 : base + 9]
    a_raw = th * b.hs + th_c * b.hc + a0
    b_raw = ph * b.ms + ph_c * b.mc + b0 - a_raw
    za = SHAPE_SHARPNESS * (a_raw - SHAPE_FLOOR)
    zb = SHAPE_SHARPNESS * (b_raw - SHAPE_FLOOR)
    alpha = SHAPE_FLOOR + _softplus(za) / SHAPE_SHARPNESS
    beta = SHAPE_FLOOR + _softplus(zb) / SHAPE_SHARPNESS
    terms[1] = math.fsum(
        (alpha - 1.0) * b.log_x + (beta - 1.0) * b.log_1mx - gammaln(alpha) - gammaln(beta) + gammaln(alpha + beta)
    )
    psab = digamma(alpha + beta)
    d_alpha = b.log_x - digamma(alpha) + psab
    d_beta = b.log_1mx - digamma(beta) + psab
    d_braw = d_beta * _sigmoid(zb)
    d_araw = d_alpha * _sigmoid(za) - d_braw
    grad[base + 3] += d_araw @ b.hs
    grad[base + 4] += d_araw @ b.hc
    grad[base + 5] += d_braw @ b.ms
    grad[base + 6] += d_braw @ b.mc
    grad[base + 7] += d_araw.sum()
    grad[base + 8] += d_braw.sum()

    # radiation
    p, q, s_r = theta[base + 9], theta[base + 10], theta[base + 11]
    amp = p * b.rad_month + q
    mu_r = amp * b.rad_shape
    ll, dmu, dsd = _censored_normal(b.rad, b.rad_zero, mu_r, s_r)
    terms[2] = math.fsum(ll)
    gp = dmu * b.rad_shape
    grad[base + 9] += gp @ b.rad_month
    grad[base + 10] += gp.sum()
    grad[base + 11] += dsd.sum()

    # wind
    mu_w, s_w = theta[base + 12], theta[base + 13]
    ll, dmu, dsd = _censored_normal(b.wind, b.wind_zero, mu_w, s_w)
    terms[3] = math.fsum(ll)
    grad[base + 12] += dmu.sum()
    grad[base + 13] += dsd.sum()

    # demand
    k, e0, kh, kw, lam = theta[base + 14 : base + 19]
    i_daily = base + 19
    i_yearly = i_daily + h2
    i_light = i_yearly + h2
    a_d = theta[i_daily:i_yearly]
    a_y = theta[i_yearly:i_light]
    k_l, beta_l, s_e = theta[i_light], theta[i_light + 1], theta[i_light + 2]
    humid_x = b.rh * b.ind_rh
    wind_cold = b.wind * b.cold
    wind_hot = b.wind * b.hot
    light = np.exp(-beta_l * b.rad) * b.act
    total = (
        k * b.vdev
        + kh * humid_x
        + (kw * wind_cold - lam * kw * wind_hot)
        + k_l * light
        + b.fh @ a_d
        + b.fm @ a_y
    )
    r = ((b.demand - e0) - total) / s_e
    terms[4] = math.fsum(-math.log(s_e) - LOG_SQRT_2PI - 0.5 * r * r)
    g = r / s_e
    grad[base + 14] += g @ b.vdev
    grad[base + 15] += g.sum()
    grad[base + 16] += g @ humid_x
    grad[base + 17] += g @ (wind_cold - lam * wind_hot)
    grad[base + 18] += -kw * (g @ wind_hot)
    grad[i_daily:i_yearly] += b.fh.T @ g
    grad[i_yearly:i_light] += b.fm.T @ g
    grad[i_light] += g @ light
    grad[i_light + 1] += -k_l * (g @ (light * b.rad))
    grad[i_light + 2] += np.sum((r * r - 1.0) / s_e)

    if weight != 1.0:
        terms *= weight
        grad *= weight
    return terms, grad
