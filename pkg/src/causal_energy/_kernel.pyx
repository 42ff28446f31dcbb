# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled likelihood kernel: one pass over records, fused value and gradient.

Mirrors ``_kernel_py.loglik_grad`` term for term.
"""

import numpy as np

from libc.math cimport exp, fabs, log, log1p
from scipy.special.cython_special cimport gammaln, log_ndtr, psi

cdef double LOG_SQRT_2PI = 0.9189385332046727
cdef double FLOOR = 0.01
cdef double SHARP = 10.0


cdef inline double softplus(double x) noexcept nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline void kahan_add(double* acc, double x) noexcept nogil:
    # Neumaier summation: acc[0] is the running sum, acc[1] the lost low bits.
    cdef double t = acc[0] + x
    if fabs(acc[0]) >= fabs(x):
        acc[1] += (acc[0] - t) + x
    else:
        acc[1] += (x - t) + acc[0]
    acc[0] = t


cdef inline double censored(double x, double is_zero, double mu, double sd,
                            double* dmu, double* dsd) noexcept nogil:
    cdef double r, t, lc, mills
    if is_zero > 0.5:
        t = -mu / sd
        lc = log_ndtr(t)
        mills = exp(-0.5 * t * t - LOG_SQRT_2PI - lc)
        dmu[0] = -mills / sd
        dsd[0] = mills * mu / (sd * sd)
        return lc
    r = (x - mu) / sd
    dmu[0] = r / sd
    dsd[0] = (r * r - 1.0) / sd
    return -log(sd) - LOG_SQRT_2PI - 0.5 * r * r


def loglik_grad(theta, b, int n, double weight=1.0):
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t P = th.shape[0]
    grad_arr = np.zeros(P)
    terms_arr = np.zeros(5)
    cdef double[::1] g = grad_arr
    cdef double[::1] terms = terms_arr

    cdef const double[:, ::1] fm = b.fm
    cdef const double[:, ::1] fh = b.fh
    cdef const double[::1] temp = b.temp, rad = b.rad, vdev = b.vdev
    cdef const double[::1] hs = b.hs, hc = b.hc, ms = b.ms, mc = b.mc
    cdef const double[::1] log_x = b.log_x, log_1mx = b.log_1mx, rh = b.rh, ind_rh = b.ind_rh
    cdef const double[::1] wind = b.wind, cold = b.cold, hot = b.hot
    cdef const double[::1] rad_month = b.rad_month, rad_shape = b.rad_shape, act = b.act
    cdef const double[::1] demand = b.demand, rad_zero = b.rad_zero, wind_zero = b.wind_zero

    cdef Py_ssize_t N = temp.shape[0]
    cdef Py_ssize_t h2 = 2 * n, base = 4 * n
    cdef Py_ssize_t i_daily = base + 19, i_yearly = base + 19 + 2 * n, i_light = base + 19 + 4 * n
    cdef Py_ssize_t i, j

    cdef double w = th[base], tb = th[base + 1], s_t = th[base + 2]
    cdef double t_h = th[base + 3], t_hc = th[base + 4], p_m = th[base + 5], p_mc = th[base + 6]
    cdef double a0 = th[base + 7], b0 = th[base + 8]
    cdef double p = th[base + 9], q = th[base + 10], s_r = th[base + 11]
    cdef double mu_w = th[base + 12], s_w = th[base + 13]
    cdef double k = th[base + 14], e0 = th[base + 15], kh = th[base + 16], kw = th[base + 17], lam = th[base + 18]
    cdef double k_l = th[i_light], beta_l = th[i_light + 1], s_e = th[i_light + 2]
    cdef double log_st = log(s_t), log_se = log(s_e)

    cdef double mu, r, gm, a_raw, b_raw, za, zb, alpha, beta, psab, d_alpha, d_beta, d_araw, d_braw
    cdef double dmu, dsd, ll, shape, light, total, wc, wh, hx
    cdef double acc[10]
    for j in range(10):
        acc[j] = 0.0

    with nogil:
        for i in range(N):
            # temperature
            # Residuals subtract the large base level first so the cancellation is exact.
            mu = w * rad[i]
            for j in range(h2):
                mu = mu + fm[i, j] * th[j] + fh[i, j] * th[h2 + j]
            r = ((temp[i] - tb) - mu) / s_t
            kahan_add(&acc[0], -log_st - LOG_SQRT_2PI - 0.5 * r * r)
            gm = r / s_t
            for j in range(h2):
                g[j] += gm * fm[i, j]
                g[h2 + j] += gm * fh[i, j]
            g[base] += gm * rad[i]
            g[base + 1] += gm
            g[base + 2] += (r * r - 1.0) / s_t

            # humidity
            a_raw = t_h * hs[i] + t_hc * hc[i] + a0
            b_raw = p_m * ms[i] + p_mc * mc[i] + b0 - a_raw
            za = SHARP * (a_raw - FLOOR)
            zb = SHARP * (b_raw - FLOOR)
            alpha = FLOOR + softplus(za) / SHARP
            beta = FLOOR + softplus(zb) / SHARP
            kahan_add(&acc[2], (alpha - 1.0) * log_x[i] + (beta - 1.0) * log_1mx[i] - gammaln(alpha) - gammaln(beta) + gammaln(alpha + beta))
            psab = psi(alpha + beta)
            d_alpha = log_x[i] - psi(alpha) + psab
            d_beta = log_1mx[i] - psi(beta) + psab
            d_braw = d_beta * sigmoid(zb)
            d_araw = d_alpha * sigmoid(za) - d_braw
            g[base + 3] += d_araw * hs[i]
            g[base + 4] += d_araw * hc[i]
            g[base + 5] += d_braw * ms[i]
            g[base + 6] += d_braw * mc[i]
            g[base + 7] += d_araw
            g[base + 8] += d_braw

            # radiation
            shape = rad_shape[i]
            ll = censored(rad[i], rad_zero[i], (p * rad_month[i] + q) * shape, s_r, &dmu, &dsd)
            kahan_add(&acc[4], ll)
            g[base + 9] += dmu * shape * rad_month[i]
            g[base + 10] += dmu * shape
            g[base + 11] += dsd

            # wind
            ll = censored(wind[i], wind_zero[i], mu_w, s_w, &dmu, &dsd)
            kahan_add(&acc[6], ll)
            g[base + 12] += dmu
            g[base + 13] += dsd

            # demand
            hx = rh[i] * ind_rh[i]
            wc = wind[i] * cold[i]
            wh = wind[i] * hot[i]
            light = exp(-beta_l * rad[i]) * act[i]
            total = k * vdev[i] + kh * hx + (kw * wc - lam * kw * wh) + k_l * light
            for j in range(h2):
                total = total + fh[i, j] * th[i_daily + j] + fm[i, j] * th[i_yearly + j]
            r = ((demand[i] - e0) - total) / s_e
            kahan_add(&acc[8], -log_se - LOG_SQRT_2PI - 0.5 * r * r)
            gm = r / s_e
            g[base + 14] += gm * vdev[i]
            g[base + 15] += gm
            g[base + 16] += gm * hx
            g[base + 17] += gm * (wc - lam * wh)
            g[base + 18] += -kw * gm * wh
            for j in range(h2):
                g[i_daily + j] += gm * fh[i, j]
                g[i_yearly + j] += gm * fm[i, j]
            g[i_light] += gm * light
            g[i_light + 1] += -k_l * gm * light * rad[i]
            g[i_light + 2] += (r * r - 1.0) / s_e

    for j in range(5):
        terms[j] = acc[2 * j] + acc[2 * j + 1]
    if weight != 1.0:
        terms_arr *= weight
        grad_arr *= weight
    return terms_arr, grad_arr
