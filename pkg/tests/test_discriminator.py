import numpy as np
import pytest

from asmagan import engine as E
from asmagan.config import DiscConfig
from asmagan.discriminator import Discriminator, power_iteration_step, spectral_normalize
from asmagan.engine import ConfigurationError, DimensionError, StyleLabel, Tensor
from asmagan.engine.gradcheck import check_gradients
from asmagan.engine.reference import conv2d_naive

SMALL = dict(channels=[3, 4, 5, 6, 6, 7], num_styles=3, sn_warmup_iters=30)


def make(seed=0, **kw):
    with E.precision("float64"):
        return Discriminator(DiscConfig(**{**SMALL, **kw}), np.random.default_rng(seed))


def true_norm(m):
    return float(np.linalg.svd(m.reshape(m.shape[0], -1), compute_uv=False)[0])


# spectral normalization ------------------------------------------------------


def test_diag_power_iteration():
    w = np.diag([3.0, 1.0])
    u = np.array([0.6, 0.8])
    wn, u, sigma = spectral_normalize(w, u, iterations=20)
    assert abs(sigma - 3.0) < 1e-3
    assert abs(true_norm(wn) - 1.0) < 1e-3


def test_identity_unchanged():
    wn, _, sigma = spectral_normalize(np.eye(4), np.full(4, 0.5), iterations=1)
    assert sigma == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(wn, np.eye(4), atol=1e-12)


def test_random_matrix_matches_brute_force():
    checked = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(8, 8))
        eig = np.linalg.eigvalsh(w.T @ w)
        top = np.sqrt(eig[-1])
        if (np.sqrt(eig[-2]) / top) ** 100 > 1e-6:
            continue  # top singular values too close for 50 iterations to separate
        _, _, sigma = spectral_normalize(w, rng.normal(size=8), iterations=50)
        assert abs(sigma - top) < 1e-4
        checked += 1
    assert checked >= 7


def test_zero_weight_sigma_clamped():
    wn, _, sigma = spectral_normalize(np.zeros((3, 4)), np.ones(3) / np.sqrt(3), iterations=1)
    assert sigma == 1e-12 and np.all(wn == 0)


def test_eval_mode_is_pure(f64, rng):
    D = make().eval()
    before = {k: v.copy() for k, v in D.u_state.items()}
    x = Tensor(rng.uniform(-1, 1, (2, 3, 32, 32)))
    a = D.project_score(x, StyleLabel(1, 3)).data
    b = D.project_score(x, StyleLabel(1, 3)).data
    assert a.tobytes() == b.tobytes()
    assert all(np.array_equal(before[k], D.u_state[k]) for k in before)
    D.train().spectral_weights()
    assert any(not np.array_equal(before[k], D.u_state[k]) for k in before)


def test_normalized_weights_have_unit_norm_at_init(f64):
    D = make()
    for name, w in D.spectral_weights(update=True).items():
        if name in D.u_state:
            assert 0.99 < true_norm(w.data) < 1.01, name


# backbone and heads ----------------------------------------------------------


def test_tap_shapes_64(f64, rng):
    D = make()
    feats = D.backbone(Tensor(rng.uniform(-1, 1, (1, 3, 64, 64))))
    assert [f.shape[2:] for f in feats] == [(16, 16), (4, 4), (1, 1)]
    assert [f.shape[1] for f in feats] == [4, 6, 7]


def test_undersized_input(f64):
    with pytest.raises(DimensionError):
        make().backbone(Tensor(np.zeros((1, 3, 16, 16))))


def test_zero_embedding_is_label_blind(f64, rng):
    D = make().eval()
    for name, p in D.named_parameters():
        if name.endswith("embed"):
            p.data[...] = 0.0
            D.u_state[name] = np.ones(p.shape[0]) / np.sqrt(p.shape[0])
    x = Tensor(rng.uniform(-1, 1, (2, 3, 32, 32)))
    a = D.project_score(x, StyleLabel(0, 3)).data
    b = D.project_score(x, StyleLabel(2, 3)).data
    np.testing.assert_array_equal(a, b)


def test_affine_in_label_vector(f64, rng):
    D = make(scale_weights=[0.5, 1.5, 2.0]).eval()
    x = Tensor(rng.uniform(-1, 1, (3, 3, 32, 32)))
    c1, c2 = StyleLabel(0, 3).one_hot(), StyleLabel(2, 3).one_hot()
    zero = np.zeros(3)
    for a, b in [(0.3, 0.9), (-1.7, 2.2), (4.0, -0.5)]:
        lhs = D.project_score(x, a * c1 + b * c2).data
        rhs = a * D.project_score(x, c1).data + b * D.project_score(x, c2).data + (1 - a - b) * D.project_score(x, zero).data
        assert np.max(np.abs(lhs - rhs) / np.abs(lhs)) < 1e-10


def _eq2_reference(D, x, k):
    """Single-head projection score written out directly.

    Operands are passed to BLAS contiguously, as the engine does, so that a
    bitwise comparison measures the formula rather than the kernel choice.
    """
    w = D.spectral_weights(update=False)
    y = x
    for i in range(1, D.config.n_blocks + 1):
        y = E.leaky_relu(E.conv2d(y, w[f"block{i}.weight"], w[f"block{i}.bias"], 2, 2, "zero"), 0.2)
    phi = y.data.mean(axis=(2, 3))
    tap = D.config.scale_taps[0]
    proj = (phi @ np.ascontiguousarray(w[f"head{tap}.embed"].data.T))[:, k]
    psi = (phi @ np.ascontiguousarray(w[f"head{tap}.psi.weight"].data.T)).reshape(-1) + w[f"head{tap}.psi.bias"].data
    return proj + psi


def test_single_scale_equals_direct_formula_bitwise(f64, rng):
    D = make(scale_taps=[6], scale_weights=[1.0]).eval()
    x = Tensor(rng.uniform(-1, 1, (1, 3, 64, 64)))
    for k in range(3):
        got = D.project_score(x, StyleLabel(k, 3)).data
        assert got.tobytes() == _eq2_reference(D, x, k).tobytes()


def test_single_scale_matches_naive_conv_reference(f64, rng):
    D = make(scale_taps=[6], scale_weights=[1.0]).eval()
    x = rng.uniform(-1, 1, (1, 3, 64, 64))
    w = D.spectral_weights(update=False)
    y = x
    for i in range(1, 7):
        y = conv2d_naive(y, w[f"block{i}.weight"].data, w[f"block{i}.bias"].data, 2, 2, "zero")
        y = np.where(y > 0, y, 0.2 * y)
    phi = y.mean(axis=(2, 3))[0]
    want = w["head6.embed"].data[1] @ phi + w["head6.psi.weight"].data[0] @ phi + w["head6.psi.bias"].data[0]
    got = D.project_score(Tensor(x), StyleLabel(1, 3)).data[0]
    assert abs(got - want) <= 1e-10 * abs(want)


def test_label_validation(f64, rng):
    D = make()
    with pytest.raises(ConfigurationError):
        D.project_score(Tensor(np.zeros((1, 3, 32, 32))), StyleLabel(0, 2))


def test_backbone_gradient(f64, rng):
    D = make(channels=[2, 3, 3, 4, 4, 4]).eval()
    x = Tensor(rng.uniform(-1, 1, (1, 3, 64, 64)), requires_grad=True)
    probe = [Tensor(rng.normal(size=s)) for s in [(1, 3, 16, 16), (1, 4, 4, 4), (1, 4, 1, 1)]]
    f = lambda: sum(((t * p).sum() for t, p in zip(D.backbone(x), probe)), Tensor(np.zeros(())))
    params = [p for n, p in D.named_parameters() if n.startswith("block")][:3]
    assert check_gradients(f, [x] + params, max_probes=6, rng=rng, skip_kinks=True) < 1e-3


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DiscConfig(scale_taps=[4, 2])
    with pytest.raises(ConfigurationError):
        DiscConfig(scale_taps=[2, 7], scale_weights=[1, 1])
    with pytest.raises(ConfigurationError):
        DiscConfig(scale_weights=[1.0])


def test_power_iteration_step_is_normalized(rng):
    u = power_iteration_step(rng.normal(size=(5, 7)), rng.normal(size=5))
    assert abs(np.linalg.norm(u) - 1) < 1e-12
