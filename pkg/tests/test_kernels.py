"""Backend selection and compiled/pure kernel agreement."""

import numpy as np
import pytest

from trapshuttle import _kernels_py, kernels, protocols
from trapshuttle.dynamics import _allocate_steps, _segment_arrays

if kernels.COMPILED_AVAILABLE:
    from trapshuttle import _kernels
else:
    _kernels = None

needs_compiled = pytest.mark.skipif(
    not kernels.COMPILED_AVAILABLE, reason="compiled extension not built"
)


def _protocol_inputs(spec):
    d, w = spec.distance, spec.omega0
    p = protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2)
    starts, lengths, q0 = _segment_arrays(p)
    seg_steps = _allocate_steps(lengths, 10_000)
    return starts, lengths, q0, seg_steps


class TestBackendSelection:
    def test_backend_name_is_known(self):
        assert kernels.BACKEND in ("compiled", "python")

    def test_compiled_preferred_when_built(self, monkeypatch):
        monkeypatch.delenv("TRAPSHUTTLE_PURE", raising=False)
        if kernels.COMPILED_AVAILABLE:
            assert kernels.BACKEND == "compiled"
        else:
            assert kernels.BACKEND == "python"

    def test_pure_module_always_importable(self):
        assert _kernels_py.BACKEND == "python"


class TestBackendAgreement:
    """The compiled module must be a drop-in for the reference code."""

    @needs_compiled
    def test_rk4_protocol_matches(self, spec):
        starts, lengths, q0, seg_steps = _protocol_inputs(spec)
        a = _kernels.rk4_protocol(starts, lengths, q0, spec.omega0, seg_steps)
        b = _kernels_py.rk4_protocol(starts, lengths, q0, spec.omega0, seg_steps)
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-18)

    @needs_compiled
    def test_transcribe_terminal_matches(self, spec):
        rng = np.random.default_rng(7)
        u = rng.normal(scale=1e-3, size=100)
        a = _kernels.transcribe_terminal(u, 0.06, spec.omega0, 10)
        b = _kernels_py.transcribe_terminal(u, 0.06, spec.omega0, 10)
        assert a[0] == pytest.approx(b[0], rel=1e-13, abs=1e-20)
        assert a[1] == pytest.approx(b[1], rel=1e-13, abs=1e-20)

    @needs_compiled
    def test_transcribe_adjoint_matches(self, spec):
        a = _kernels.transcribe_adjoint(100, 0.06, spec.omega0, 10, 1.0, 0.5)
        b = _kernels_py.transcribe_adjoint(100, 0.06, spec.omega0, 10, 1.0, 0.5)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=0.0)


class TestKernelCorrectness:
    """Checks that hold for whichever backend is active."""

    def test_rk4_protocol_zero_forcing(self, spec):
        starts = np.array([0.0])
        lengths = np.array([0.05])
        q0 = np.zeros((1, 8))
        out = kernels.rk4_protocol(starts, lengths, q0, spec.omega0, np.array([500]))
        assert out.shape == (2, 2)
        assert np.all(out == 0.0)

    def test_terminal_constant_control_closed_form(self, spec):
        # double integrator qc'' = -w^2 u0 from rest: qc = -w^2 u0 t^2 / 2
        w = spec.omega0
        u0 = 1e-3
        t_f = 0.06
        x1, x2 = kernels.transcribe_terminal(np.full(5, u0), t_f, w, 401)
        assert x1 == pytest.approx(-0.5 * w**2 * u0 * t_f**2, rel=1e-12)
        assert x2 == pytest.approx(-(w**2) * u0 * t_f, rel=1e-12)

    def test_terminal_exact_for_linear_control(self, spec):
        # RK4 reproduces polynomial solutions up to degree four exactly, so
        # a linear-in-t control gives the same answer at any substep count
        w = spec.omega0
        u = np.linspace(0.0, 2e-3, 6)
        coarse = np.array(kernels.transcribe_terminal(u, 0.06, w, 2))
        fine = np.array(kernels.transcribe_terminal(u, 0.06, w, 500))
        np.testing.assert_allclose(coarse, fine, rtol=1e-11)

    def test_terminal_is_linear_in_control(self, spec):
        rng = np.random.default_rng(11)
        u = rng.normal(scale=1e-3, size=40)
        v = rng.normal(scale=1e-3, size=40)
        w = spec.omega0
        fu = np.array(kernels.transcribe_terminal(u, 0.06, w, 10))
        fv = np.array(kernels.transcribe_terminal(v, 0.06, w, 10))
        fc = np.array(kernels.transcribe_terminal(2.0 * u - 3.0 * v, 0.06, w, 10))
        np.testing.assert_allclose(fc, 2.0 * fu - 3.0 * fv, rtol=1e-10, atol=1e-18)

    def test_adjoint_matches_directional_derivative(self, spec):
        # terminal map is affine in u, so a finite difference is exact
        rng = np.random.default_rng(13)
        n = 30
        u = rng.normal(scale=1e-3, size=n)
        w = spec.omega0
        w1, w2 = 0.7, -0.3
        g = kernels.transcribe_adjoint(n, 0.06, w, 10, w1, w2)
        assert g.shape == (n,)
        direction = rng.normal(size=n)
        step = 1e-3
        def phi(vec):
            x1, x2 = kernels.transcribe_terminal(vec, 0.06, w, 10)
            return w1 * x1 + w2 * x2
        fd = (phi(u + step * direction) - phi(u - step * direction)) / (2.0 * step)
        assert float(g @ direction) == pytest.approx(fd, rel=1e-8)

    def test_adjoint_gradient_independent_of_u(self, spec):
        # affine dynamics: the gradient depends only on the grid geometry
        g1 = kernels.transcribe_adjoint(20, 0.05, spec.omega0, 8, 1.0, 0.0)
        g2 = kernels.transcribe_adjoint(20, 0.05, spec.omega0, 8, 1.0, 0.0)
        np.testing.assert_array_equal(g1, g2)
