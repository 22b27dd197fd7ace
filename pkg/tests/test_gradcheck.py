import numpy as np

from asmagan import engine as E
from asmagan.engine import Tensor
from asmagan.engine.gradcheck import GradCheckStats, check_gradients, numerical_grad, relative_error


def test_numerical_grad_of_cubic(f64):
    x = Tensor(np.array([0.3, -1.2]), requires_grad=True)
    g = numerical_grad(lambda: (x * x * x).sum(), x, 1e-5)
    np.testing.assert_allclose(g, 3 * x.data**2, rtol=1e-9)


def test_probe_straddling_a_kink_is_flagged(f64):
    x = Tensor(np.array([2e-6, 0.5]), requires_grad=True)
    f = lambda: E.leaky_relu(x, 0.2).sum()
    raw = numerical_grad(f, x, 1e-5)
    flagged = numerical_grad(f, x, 1e-5, skip_kinks=True)
    assert not np.isclose(raw[0], 1.0) and np.isnan(flagged[0])
    assert flagged[1] == raw[1]


def test_check_gradients_resamples_kink_probes(f64, rng):
    a = rng.uniform(-1, 1, 200)
    a[:20] = rng.uniform(-1e-6, 1e-6, 20)  # near the kink
    x = Tensor(a, requires_grad=True)
    f = lambda: (x.abs() * 3.0).sum()
    stats = GradCheckStats()
    err = check_gradients(f, [x], max_probes=60, rng=rng, skip_kinks=True, stats=stats)
    assert err < 1e-8 and stats.probes == 60
    assert check_gradients(f, [x], skip_kinks=False) > 1e-2


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-9]), floor=1e-6) == 1e-3
    assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0
