# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the NumPy kernels in ``_kernels_py``.

Every arithmetic expression below reproduces the reference kernel's
operation order exactly; together with -ffp-contract=off this makes the
compiled lane bitwise-identical to the NumPy lane.  The payoff is the
O(M^2)-per-path correction-derivative sweep and the per-step recursions,
which run as flat C loops here instead of per-step array dispatch.
"""

import numpy as np


def table_paths_x(double x0, double dt,
                  double[::1] drift, double[::1] vol,
                  double[:, ::1] dw):
    cdef Py_ssize_t c = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]
    x_arr = np.empty((c, m + 1))
    cdef double[:, ::1] x = x_arr
    cdef Py_ssize_t p, i
    cdef double xa
    with nogil:
        for p in range(c):
            xa = x0
            x[p, 0] = xa
            for i in range(m):
                xa = (xa + (drift[i] * xa) * dt) + (vol[i] * xa) * dw[p, i]
                x[p, i + 1] = xa
    return x_arr


def table_paths(double x0, double dt,
                double[::1] drift, double[::1] vol,
                double[::1] alpha, double[::1] beta,
                double[:, ::1] dw):
    """Euler recursion of X, Y, J; see the reference kernel for the contract."""
    cdef Py_ssize_t c = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]
    x_arr = np.empty((c, m + 1))
    y_arr = np.empty((c, m + 1))
    j_arr = np.empty((c, m + 1))
    cdef double[:, ::1] x = x_arr
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] j = j_arr
    cdef Py_ssize_t p, i
    cdef double xa, ya, ja, w
    with nogil:
        for p in range(c):
            xa = x0
            ya = 1.0
            ja = 1.0
            x[p, 0] = xa
            y[p, 0] = ya
            j[p, 0] = ja
            for i in range(m):
                w = dw[p, i]
                x[p, i + 1] = (xa + (drift[i] * xa) * dt) + (vol[i] * xa) * w
                y[p, i + 1] = (ya + (drift[i] * ya) * dt) + (vol[i] * ya) * w
                j[p, i + 1] = (ja + (drift[i] * ja + alpha[i] * xa) * dt) + (
                    vol[i] * ja + beta[i] * xa
                ) * w
                xa = x[p, i + 1]
                ya = y[p, i + 1]
                ja = j[p, i + 1]
    return x_arr, y_arr, j_arr


def log_accumulate(double start,
                   double[::1] ldrift, double[::1] vol,
                   double[:, ::1] dw):
    cdef Py_ssize_t c = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]
    lx_arr = np.empty((c, m + 1))
    cdef double[:, ::1] lx = lx_arr
    cdef Py_ssize_t p, i
    cdef double acc
    with nogil:
        for p in range(c):
            acc = start
            lx[p, 0] = acc
            for i in range(m):
                acc = (acc + ldrift[i]) + vol[i] * dw[p, i]
                lx[p, i + 1] = acc
    return lx_arr


def table_jacobian_from_paths(double[:, ::1] x, double dt,
                              double[::1] drift, double[::1] vol,
                              double[::1] alpha, double[::1] beta,
                              double[:, ::1] dw):
    cdef Py_ssize_t c = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]
    j_arr = np.empty((c, m + 1))
    lam_arr = np.empty(m)
    cdef double[:, ::1] j = j_arr
    cdef double[::1] lam = lam_arr
    cdef Py_ssize_t p, i
    cdef double ja, growth
    with nogil:
        for i in range(m):
            lam[i] = (alpha[i] - vol[i] * beta[i]) * dt
        for p in range(c):
            ja = 1.0
            j[p, 0] = ja
            for i in range(m):
                growth = x[p, i + 1] / x[p, i]
                ja = growth * ja + x[p, i + 1] * (lam[i] + beta[i] * dw[p, i])
                j[p, i + 1] = ja
    return j_arr


def correction_quadrature(double[:, ::1] x, double[:, ::1] y, double dt,
                          double[::1] vol, double[::1] alpha, double[::1] beta,
                          double[:, ::1] dw):
    cdef Py_ssize_t c = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]
    leb_arr = np.zeros(c)
    ito_arr = np.zeros(c)
    cdef double[::1] leb = leb_arr
    cdef double[::1] ito = ito_arr
    cdef Py_ssize_t p, i
    cdef double xa, ya, t_beta, num, acc_l, acc_i
    with nogil:
        for p in range(c):
            acc_l = 0.0
            acc_i = 0.0
            for i in range(m):
                xa = x[p, i]
                ya = y[p, i]
                t_beta = beta[i] * xa
                num = (alpha[i] * xa) - vol[i] * t_beta
                acc_l = acc_l + (num / ya) * dt
                acc_i = acc_i + (t_beta / ya) * dw[p, i]
            leb[p] = acc_l
            ito[p] = acc_i
    return leb_arr, ito_arr


def correction_noise_derivatives(double[:, ::1] x, double[:, ::1] y, double dt,
                                 double[::1] drift, double[::1] vol,
                                 double[::1] alpha, double[::1] beta,
                                 double[:, ::1] dw, double eps):
    """Suffix-resumed version of the bump sweep.

    The reference kernel re-simulates each bumped path from step 0; since
    the prefix before the bump coincides with the base path bitwise, this
    version resumes at the bump index with the stored prefix sums and
    produces the same doubles at half the work.
    """
    cdef Py_ssize_t c = dw.shape[0]
    cdef Py_ssize_t m = dw.shape[1]
    leb_arr = np.empty(c)
    ito_arr = np.empty(c)
    dsu_arr = np.empty((c, m))
    pref_l_arr = np.empty(m + 1)
    pref_i_arr = np.empty(m + 1)
    cdef double[::1] leb = leb_arr
    cdef double[::1] ito = ito_arr
    cdef double[:, ::1] dsu = dsu_arr
    cdef double[::1] pref_l = pref_l_arr
    cdef double[::1] pref_i = pref_i_arr
    cdef Py_ssize_t p, i, s
    cdef double xa, ya, w, t_beta, num, acc_l, acc_i, u_base
    with nogil:
        for p in range(c):
            pref_l[0] = 0.0
            pref_i[0] = 0.0
            acc_l = 0.0
            acc_i = 0.0
            for i in range(m):
                xa = x[p, i]
                ya = y[p, i]
                t_beta = beta[i] * xa
                num = (alpha[i] * xa) - vol[i] * t_beta
                acc_l = acc_l + (num / ya) * dt
                acc_i = acc_i + (t_beta / ya) * dw[p, i]
                pref_l[i + 1] = acc_l
                pref_i[i + 1] = acc_i
            leb[p] = acc_l
            ito[p] = acc_i
            u_base = (1.0 + acc_l) + acc_i
            for s in range(m):
                acc_l = pref_l[s]
                acc_i = pref_i[s]
                xa = x[p, s]
                ya = y[p, s]
                for i in range(s, m):
                    w = dw[p, i]
                    if i == s:
                        w = w + eps
                    t_beta = beta[i] * xa
                    num = (alpha[i] * xa) - vol[i] * t_beta
                    acc_l = acc_l + (num / ya) * dt
                    acc_i = acc_i + (t_beta / ya) * w
                    xa = (xa + (drift[i] * xa) * dt) + (vol[i] * xa) * w
                    ya = (ya + (drift[i] * ya) * dt) + (vol[i] * ya) * w
                dsu[p, s] = (((1.0 + acc_l) + acc_i) - u_base) / eps
    return leb_arr, ito_arr, dsu_arr
