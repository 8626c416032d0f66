"""Pure-Python reference implementation of the numeric kernels.

Mirrors _kernels.pyx operation for operation; the compiled module is a
drop-in accelerator. Keep the arithmetic order identical in both so the
backends agree to rounding.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def rk4_protocol(starts, lengths, q0_coeffs, omega0, seg_steps):
    """Integrate qc'' = omega0^2 (q0(t) - qc) across polynomial segments.

    Fixed-step RK4 with steps aligned to segment boundaries; q0_coeffs is
    a (segments x 8) matrix of local-time coefficients. State accumulation
    is compensated so the roundoff floor stays flat at large step counts.
    Returns an (segments+1) x 2 array of (qc, qc_dot) at segment boundaries.
    """
    w2 = omega0 * omega0
    nseg = len(starts)
    out = np.empty((nseg + 1, 2))
    x1 = 0.0
    x2 = 0.0
    c1 = 0.0  # compensation terms
    c2 = 0.0
    out[0, 0] = x1
    out[0, 1] = x2
    for s in range(nseg):
        cs = q0_coeffs[s]
        n = int(seg_steps[s])
        h = lengths[s] / n
        for i in range(n):
            tau = i * h
            q0a = _horner8(cs, tau)
            q0b = _horner8(cs, tau + 0.5 * h)
            q0c = _horner8(cs, tau + h)
            # classical four-stage update
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
            # Kahan-compensated accumulation
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


def _horner8(cs, tau):
    r = 0.0
    for k in range(7, -1, -1):
        r = r * tau + cs[k]
    return r


def transcribe_terminal(u_nodes, t_f, omega0, substeps):
    """Terminal (qc, qc_dot) for piecewise-linear u under qc'' = -omega0^2 u.

    N-1 node intervals, each integrated with substeps-1 RK4 steps; stage
    controls are sampled from the linear interpolant.
    """
    w2 = omega0 * omega0
    n_nodes = len(u_nodes)
    seg = n_nodes - 1
    m = substeps - 1
    L = t_f / seg
    h = L / m
    x1 = 0.0
    x2 = 0.0
    for i in range(seg):
        ua = u_nodes[i]
        du = u_nodes[i + 1] - ua
        for j in range(m):
            ut = ua + du * (j / m)
            ub = ua + du * ((j + 1) / m)
            um = ua + du * ((j + 0.5) / m)
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


def transcribe_adjoint(n_nodes, t_f, omega0, substeps, w1, w2):
    """Gradient of w1*qc(t_f) + w2*qc_dot(t_f) with respect to the u nodes.

    Backward sweep of the exact per-step sensitivities of the RK4 update:
    for one step, d x1 = -(omega0^2 h^2/6)(ut + 2 um) and
    d x2 = -(omega0^2 h/6)(ut + 4 um + ub), with stage controls linear in
    the two bracketing nodes. The dynamics are affine in u, so this is the
    exact gradient, not an approximation.
    """
    ww = omega0 * omega0
    seg = n_nodes - 1
    m = substeps - 1
    L = t_f / seg
    h = L / m
    g = np.zeros(n_nodes)
    p1 = w1
    p2 = w2
    for i in range(seg - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            at = j / m
            ab = (j + 1) / m
            am = (j + 0.5) / m
            ct = -p1 * ww * h * h / 6.0 - p2 * ww * h / 6.0
            cm = -p1 * ww * h * h / 3.0 - p2 * ww * h * (4.0 / 6.0)
            cb = -p2 * ww * h / 6.0
            g[i] += (1.0 - at) * ct + (1.0 - am) * cm + (1.0 - ab) * cb
            g[i + 1] += at * ct + am * cm + ab * cb
            # pull the costate back through the state transition [[1,h],[0,1]]
            p2 = p1 * h + p2
    return g
