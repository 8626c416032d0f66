# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels; see _kernels_py.py for the reference version.

Operation order matches the pure-Python twin so results agree to rounding.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline double _horner8(const double* cs, double tau) nogil:
    cdef double r = 0.0
    cdef int k
    for k in range(7, -1, -1):
        r = r * tau + cs[k]
    return r


def rk4_protocol(double[::1] starts, double[::1] lengths, double[:, ::1] q0_coeffs,
                 double omega0, long[::1] seg_steps):
    """Segment-aligned RK4 for qc'' = omega0^2 (q0(t) - qc); see reference."""
    cdef double w2 = omega0 * omega0
    cdef Py_ssize_t nseg = starts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nseg + 1, 2))
    cdef double x1 = 0.0, x2 = 0.0, c1 = 0.0, c2 = 0.0
    cdef double h, tau, q0a, q0b, q0c
    cdef double k1_1, k1_2, k2_1, k2_2, k3_1, k3_2, k4_1, k4_2
    cdef double d1, d2, y1, t1, y2, t2
    cdef Py_ssize_t s, i
    cdef long n
    out[0, 0] = x1
    out[0, 1] = x2
    for s in range(nseg):
        n = seg_steps[s]
        h = lengths[s] / n
        for i in range(n):
            tau = i * h
            q0a = _horner8(&q0_coeffs[s, 0], tau)
            q0b = _horner8(&q0_coeffs[s, 0], tau + 0.5 * h)
            q0c = _horner8(&q0_coeffs[s, 0], tau + h)
            k1_1 = x2
            k1_2 = w2 * (q0a - x1)
            k2_1 = x2 + 0.5 * h * k1_2
            k2_2 = w2 * (q0b - (x1 + 0.5 * h * k1_1))
            k3_1 = x2 + 0.5 * h * k2_2
            k3_2 = w2 * (q0b - (x1 + 0.5 * h * k2_1))
            k4_1 = x2 + h * k3_2
            k4_2 = w2 * (q0c - (x1 + h * k3_1))
            d1 = (h / 6.0) * (k1_1 + 2.0 * k2_1 + 2.0 * k3_1 + k4_1)
            d2 = (h / 6.0) * (k1_2 + 2.0 * k2_2 + 2.0 * k3_2 + k4_2)
            y1 = d1 - c1
            t1 = x1 + y1
            c1 = (t1 - x1) - y1
            x1 = t1
            y2 = d2 - c2
            t2 = x2 + y2
            c2 = (t2 - x2) - y2
            x2 = t2
        out[s + 1, 0] = x1
        out[s + 1, 1] = x2
    return out


def transcribe_terminal(double[::1] u_nodes, double t_f, double omega0, int substeps):
    """Terminal (qc, qc_dot) for piecewise-linear u; see reference."""
    cdef double w2 = omega0 * omega0
    cdef Py_ssize_t n_nodes = u_nodes.shape[0]
    cdef Py_ssize_t seg = n_nodes - 1
    cdef int m = substeps - 1
    cdef double L = t_f / seg
    cdef double h = L / m
    cdef double x1 = 0.0, x2 = 0.0
    cdef double ua, du, ut, ub, um
    cdef double k1_1, k1_2, k2_1, k2_2, k3_1, k3_2, k4_1, k4_2
    cdef Py_ssize_t i
    cdef int j
    for i in range(seg):
        ua = u_nodes[i]
        du = u_nodes[i + 1] - ua
        for j in range(m):
            ut = ua + du * (j / <double>m)
            ub = ua + du * ((j + 1) / <double>m)
            um = ua + du * ((j + 0.5) / <double>m)
            k1_1 = x2
            k1_2 = -w2 * ut
            k2_1 = x2 + 0.5 * h * k1_2
            k2_2 = -w2 * um
            k3_1 = x2 + 0.5 * h * k2_2
            k3_2 = -w2 * um
            k4_1 = x2 + h * k3_2
            k4_2 = -w2 * ub
            x1 = x1 + (h / 6.0) * (k1_1 + 2.0 * k2_1 + 2.0 * k3_1 + k4_1)
            x2 = x2 + (h / 6.0) * (k1_2 + 2.0 * k2_2 + 2.0 * k3_2 + k4_2)
    return x1, x2


def transcribe_adjoint(Py_ssize_t n_nodes, double t_f, double omega0, int substeps,
                       double w1, double w2):
    """Exact gradient of a terminal functional w.r.t. u nodes; see reference."""
    cdef double ww = omega0 * omega0
    cdef Py_ssize_t seg = n_nodes - 1
    cdef int m = substeps - 1
    cdef double L = t_f / seg
    cdef double h = L / m
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.zeros(n_nodes)
    cdef double p1 = w1, p2 = w2
    cdef double at, ab, am, ct, cm, cb
    cdef Py_ssize_t i
    cdef int j
    for i in range(seg - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            at = j / <double>m
            ab = (j + 1) / <double>m
            am = (j + 0.5) / <double>m
            ct = -p1 * ww * h * h / 6.0 - p2 * ww * h / 6.0
            cm = -p1 * ww * h * h / 3.0 - p2 * ww * h * (4.0 / 6.0)
            cb = -p2 * ww * h / 6.0
            g[i] += (1.0 - at) * ct + (1.0 - am) * cm + (1.0 - ab) * cb
            g[i + 1] += at * ct + am * cm + ab * cb
            p2 = p1 * h + p2
    return g
