import numpy as np
import pytest

from implicit_forge.adam import Adam, OptimizerError
from implicit_forge.autodiff import Tensor


def param(value, grad=None):
    t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
    if grad is not None:
        t.grad = np.asarray(grad, dtype=np.float64)
    return t


class TestStep:
    def test_first_step_magnitude(self):
        # bias correction makes the first update lr * g / (|g| + eps)
        p = param([2.0], grad=[1.0])
        Adam().step({"w": p}, lr=0.001)
        assert p.data[0] == pytest.approx(2.0 - 0.001, abs=1e-9)

    def test_step_opposes_gradient_sign(self):
        p = param([0.0, 0.0], grad=[3.0, -0.5])
        Adam().step({"w": p}, lr=0.01)
        assert p.data[0] < 0.0
        assert p.data[1] > 0.0

    def test_none_grad_untouched(self):
        p = param([1.5])
        q = param([2.5], grad=[1.0])
        opt = Adam()
        opt.step({"p": p, "q": q}, lr=0.1)
        assert p.data[0] == 1.5
        assert q.data[0] != 2.5
        assert opt.step_count == 1

    def test_moments_accumulate(self):
        p = param([0.0], grad=[1.0])
        opt = Adam()
        opt.step({"w": p}, lr=0.001)
        first = p.data[0]
        p.grad = np.array([1.0])
        opt.step({"w": p}, lr=0.001)
        # constant gradient keeps the bias-corrected update near -lr
        assert p.data[0] == pytest.approx(first - 0.001, rel=1e-3)

    def test_matches_reference_updates(self):
        # straight transcription of the update equations, scalar case
        rng = np.random.default_rng(17)
        grads = rng.normal(size=8)
        p = param([0.3])
        opt = Adam()
        m = v = 0.0
        ref = 0.3
        for t, g in enumerate(grads, start=1):
            p.grad = np.array([g])
            opt.step({"w": p}, lr=0.01)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh = m / (1 - 0.9**t)
            vh = v / (1 - 0.999**t)
            ref -= 0.01 * mh / (np.sqrt(vh) + 1e-8)
            assert p.data[0] == pytest.approx(ref, abs=1e-12)

    def test_non_finite_grad_names_param(self):
        p = param([1.0], grad=[np.nan])
        with pytest.raises(OptimizerError, match="head_weight"):
            Adam().step({"head_weight": p}, lr=0.01)

    def test_shape_mismatch_names_param(self):
        p = param([1.0, 2.0], grad=[1.0, 2.0, 3.0])
        with pytest.raises(OptimizerError, match="conv1"):
            Adam().step({"conv1": p}, lr=0.01)


class TestQuadraticDescent:
    def test_converges_on_quadratic(self):
        p = param([5.0])
        opt = Adam()
        for _ in range(400):
            p.grad = 2.0 * p.data  # d/dx of x^2
            opt.step({"x": p}, lr=0.05)
        assert abs(p.data[0]) < 1e-3
