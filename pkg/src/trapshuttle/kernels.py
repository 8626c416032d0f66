"""Numeric kernel backend selection.

Imports the compiled extension when available, otherwise the pure-Python
reference implementation. Set TRAPSHUTTLE_PURE=1 to force the fallback
(used by the benchmark and for debugging).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels  # type: ignore[attr-defined]
    COMPILED_AVAILABLE = True
except ImportError:
    _kernels = None
    COMPILED_AVAILABLE = False

if os.environ.get("TRAPSHUTTLE_PURE"):
    _impl = _kernels_py
elif COMPILED_AVAILABLE:
    _impl = _kernels
else:
    _impl = _kernels_py

BACKEND = _impl.BACKEND


def rk4_protocol(starts, lengths, q0_coeffs, omega0, seg_steps):
    return _impl.rk4_protocol(
        np.ascontiguousarray(starts, dtype=np.float64),
        np.ascontiguousarray(lengths, dtype=np.float64),
        np.ascontiguousarray(q0_coeffs, dtype=np.float64),
        float(omega0),
        np.ascontiguousarray(seg_steps, dtype=np.int64),
    )


def transcribe_terminal(u_nodes, t_f, omega0, substeps):
    return _impl.transcribe_terminal(
        np.ascontiguousarray(u_nodes, dtype=np.float64),
        float(t_f), float(omega0), int(substeps),
    )


def transcribe_adjoint(n_nodes, t_f, omega0, substeps, w1, w2):
    return _impl.transcribe_adjoint(
        int(n_nodes), float(t_f), float(omega0), int(substeps), float(w1), float(w2)
    )
