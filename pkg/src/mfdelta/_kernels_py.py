"""Pure NumPy implementations of the hot per-path kernels.

These are the reference kernels: the compiled extension in ``_kernels_cy``
implements the exact same expression trees (same operation order, no fused
multiply-adds) so that both lanes produce bitwise-identical doubles.  Any
change to a formula here must be mirrored there.

All kernels operate on "coefficient tables": models whose drift and
diffusion are linear in the state, b(t, x, rho_t) = drift_t * x and
sigma(t, x, pi_t) = vol_t * x, reduce to per-step scalar arrays once the
mean curves are known.  ``alpha`` and ``beta`` are the corresponding
multipliers of the inhomogeneous Jacobian terms, i.e. the mean-field
feedback is alpha_t * X_t in the drift and beta_t * X_t in the diffusion.
"""

from __future__ import annotations

import numpy as np


def table_paths_x(x0, dt, drift, vol, dw):
    """Euler recursion of the state path alone.

    Same per-step expression tree as ``table_paths``, so the state values
    agree bitwise whether or not tangents are requested.
    """
    c, m = dw.shape
    x = np.empty((c, m + 1))
    x[:, 0] = x0
    for i in range(m):
        xa = x[:, i]
        x[:, i + 1] = (xa + (drift[i] * xa) * dt) + (vol[i] * xa) * dw[:, i]
    return x


def table_paths(x0, dt, drift, vol, alpha, beta, dw):
    """Euler recursion of state X, tangent Y and full Jacobian J.

    dw has shape (C, M); the returned arrays have shape (C, M + 1) with
    X_0 = x0, Y_0 = J_0 = 1.
    """
    c, m = dw.shape
    x = np.empty((c, m + 1))
    y = np.empty((c, m + 1))
    j = np.empty((c, m + 1))
    x[:, 0] = x0
    y[:, 0] = 1.0
    j[:, 0] = 1.0
    for i in range(m):
        xa = x[:, i]
        ya = y[:, i]
        ja = j[:, i]
        w = dw[:, i]
        x[:, i + 1] = (xa + (drift[i] * xa) * dt) + (vol[i] * xa) * w
        y[:, i + 1] = (ya + (drift[i] * ya) * dt) + (vol[i] * ya) * w
        j[:, i + 1] = (ja + (drift[i] * ja + alpha[i] * xa) * dt) + (
            vol[i] * ja + beta[i] * xa
        ) * w
    return x, y, j


def log_accumulate(start, ldrift, vol, dw):
    """Accumulate log-paths L_{i+1} = L_i + ldrift_i + vol_i dW_i.

    ``ldrift`` must already contain (drift_i - vol_i^2 / 2) * dt; the caller
    exponentiates the result, so this kernel stays exp-free and the two
    lanes agree bitwise.
    """
    c, m = dw.shape
    lx = np.empty((c, m + 1))
    lx[:, 0] = start
    for i in range(m):
        lx[:, i + 1] = (lx[:, i] + ldrift[i]) + vol[i] * dw[:, i]
    return lx


def table_jacobian_from_paths(x, dt, drift, vol, alpha, beta, dw):
    """Jacobian recursion matched to exponentially-stepped state paths.

    Uses the realized per-step growth factors x_{i+1}/x_i, so J stays the
    exact derivative of the discrete state map when the state is stepped in
    log space. ``lam`` below collects the deterministic part of the per-step
    log-derivative.
    """
    c, m = dw.shape
    j = np.empty((c, m + 1))
    j[:, 0] = 1.0
    lam = np.empty(m)
    for i in range(m):
        lam[i] = (alpha[i] - vol[i] * beta[i]) * dt
    for i in range(m):
        growth = x[:, i + 1] / x[:, i]
        j[:, i + 1] = growth * j[:, i] + x[:, i + 1] * (lam[i] + beta[i] * dw[:, i])
    return j


def correction_quadrature(x, y, dt, vol, alpha, beta, dw):
    """Left-point quadrature of the correction-process integrals.

    Returns (lebesgue, ito) per path, i.e. the two components of
    u(T) = 1 + int Y^{-1} (alpha_u - B_u beta_u) du + int Y^{-1} beta_u dW.
    """
    c, m = dw.shape
    leb = np.zeros(c)
    ito = np.zeros(c)
    for i in range(m):
        xa = x[:, i]
        ya = y[:, i]
        t_beta = beta[i] * xa
        num = (alpha[i] * xa) - vol[i] * t_beta
        leb = leb + (num / ya) * dt
        ito = ito + (t_beta / ya) * dw[:, i]
    return leb, ito


def correction_noise_derivatives(x, y, dt, drift, vol, alpha, beta, dw, eps):
    """Difference-quotient Malliavin derivatives D_s u(T) for every s.

    For each bump index s the whole path is re-simulated with the single
    increment dW_s shifted by eps and u(T) recomputed; the quotient
    (u_bumped - u_base) / eps approximates D_s u(T).  Work is O(M^2) per
    path; the bump axis is vectorized here, the compiled lane instead
    resumes each bump from step s.

    Returns (lebesgue, ito, dsu) where dsu has shape (C, M).
    """
    c, m = dw.shape
    leb, ito = correction_quadrature(x, y, dt, vol, alpha, beta, dw)
    u_base = (1.0 + leb) + ito

    # One simulated row per (path, bump index), flattened to C*M rows.
    rows = c * m
    s_of_row = np.tile(np.arange(m), c)
    xa = np.empty(rows)
    ya = np.empty(rows)
    xa[:] = np.repeat(x[:, 0], m)
    ya[:] = 1.0
    acc_leb = np.zeros(rows)
    acc_ito = np.zeros(rows)
    for i in range(m):
        w = np.repeat(dw[:, i], m)
        w = np.where(s_of_row == i, w + eps, w)
        t_beta = beta[i] * xa
        num = (alpha[i] * xa) - vol[i] * t_beta
        acc_leb = acc_leb + (num / ya) * dt
        acc_ito = acc_ito + (t_beta / ya) * w
        xn = (xa + (drift[i] * xa) * dt) + (vol[i] * xa) * w
        yn = (ya + (drift[i] * ya) * dt) + (vol[i] * ya) * w
        xa, ya = xn, yn
    u_bump = ((1.0 + acc_leb) + acc_ito).reshape(c, m)
    dsu = (u_bump - u_base[:, None]) / eps
    return leb, ito, dsu
