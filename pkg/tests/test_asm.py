import numpy as np
import pytest

from asmagan import engine as E
from asmagan.asm import AnisotropicStrokeModule, SpatialGate
from asmagan.config import GeneratorConfig
from asmagan.engine import DimensionError, StyleLabel, Tensor
from asmagan.engine.gradcheck import check_gradients
from asmagan.generator import Generator


def make(stage=2, seed=0, **flags):
    with E.precision("float64"):
        return AnisotropicStrokeModule(np.random.default_rng(seed), 6, 4, 3, stage, 4, **flags)


def inputs(rng, stage=2, n=2, hw=2):
    side = hw * 2 ** (4 - stage)
    return Tensor(rng.normal(size=(n, 4, side, side))), Tensor(rng.normal(size=(n, 6, hw, hw)))


def test_lift_stride_arithmetic(f64, rng):
    asm = make(stage=2)
    assert asm.lift_stride == 4
    h = Tensor(rng.normal(size=(1, 6, 3, 3)))
    assert asm.lift_hidden(h, StyleLabel(0, 3)).shape == (1, 4, 12, 12)


def test_lift_zero_h_depends_on_label_slice(f64):
    asm = make()
    h = Tensor(np.zeros((1, 6, 2, 2)))
    a = asm.lift_hidden(h, StyleLabel(0, 3)).data
    b = asm.lift_hidden(h, StyleLabel(2, 3)).data
    w = asm.lift_weight.data
    tile = np.tile(w[6 + 2] - w[6 + 0], (2, 2))  # kernel == stride, so the slices tile the map
    np.testing.assert_allclose(b - a, tile[None], atol=1e-14)


def test_lift_gradients(f64, rng):
    asm = make()
    h = Tensor(rng.uniform(-1, 1, (1, 6, 2, 2)), requires_grad=True)
    probe = Tensor(rng.normal(size=(1, 4, 8, 8)))
    f = lambda: (asm.lift_hidden(h, StyleLabel(1, 3)) * probe).sum()
    assert check_gradients(f, [h, asm.lift_weight, asm.lift_bias]) < 1e-4


def test_gate_half_with_zero_weights(f64, rng):
    gate = SpatialGate(rng)
    gate.weight.data[...] = 0.0
    a, b = Tensor(rng.normal(size=(1, 3, 8, 8))), Tensor(rng.normal(size=(1, 3, 8, 8)))
    np.testing.assert_array_equal(gate(a, b).data, 0.5)


def test_gate_in_open_interval(f64, rng):
    gate = SpatialGate(rng)
    m = gate(Tensor(rng.normal(0, 3, (2, 3, 8, 8))), Tensor(rng.normal(0, 3, (2, 3, 8, 8)))).data
    assert m.shape == (2, 1, 8, 8) and np.all((m > 0) & (m < 1))
    with pytest.raises(DimensionError):
        gate(Tensor(np.zeros((1, 3, 8, 8))), Tensor(np.zeros((1, 2, 8, 8))))


@pytest.mark.parametrize("bias,which", [(1000.0, "h_tilde"), (-1000.0, "h_hat")])
def test_endpoint_identities_exact(f64, rng, bias, which):
    asm = make()
    asm.gate_z.bias.data[...] = bias
    x, h = inputs(rng)
    out = asm.forward(x, h, StyleLabel(1, 3))
    np.testing.assert_array_equal(out.z.data, 1.0 if bias > 0 else 0.0)
    np.testing.assert_array_equal(out.x_hat.data, getattr(out, which).data)


@pytest.mark.parametrize("bias,which", [(20.0, "h_tilde"), (-20.0, "h_hat")])
def test_endpoints_under_moderate_saturation(f64, rng, bias, which):
    asm = make()
    asm.gate_z.bias.data[...] = bias
    x, h = inputs(rng)
    out = asm.forward(x, h, StyleLabel(1, 3))
    assert np.abs(out.x_hat.data - getattr(out, which).data).max() < 1e-7


def test_convex_combination_bound(f64):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        stage = 1 + seed % 3
        asm = make(stage=stage, seed=seed)
        x, h = inputs(rng, stage=stage)
        out = asm.forward(x, h, StyleLabel(seed % 3, 3))
        lo = np.minimum(out.h_tilde.data, out.h_hat.data)
        hi = np.maximum(out.h_tilde.data, out.h_hat.data)
        assert np.all(lo <= out.x_hat.data) and np.all(out.x_hat.data <= hi)
        assert np.all(np.abs(out.h_tilde.data) < 1)
        for g in (out.r.data, out.z.data):
            assert np.all((g > 0) & (g < 1))


def test_shapes_shared_after_lift(f64, rng):
    asm = make(stage=3)
    x, h = inputs(rng, stage=3)
    out = asm.forward(x, h, StyleLabel(0, 3))
    assert out.h_hat.shape == out.h_tilde.shape == out.x_hat.shape == x.shape
    with pytest.raises(DimensionError):
        asm.forward(Tensor(np.zeros((2, 4, 6, 6))), h, StyleLabel(0, 3))


@pytest.mark.parametrize("flag", ["disable_reset_gate", "disable_update_gate"])
def test_ablation_changes_output(f64, rng, flag):
    full = make(seed=4)
    ablated = make(seed=4, **{flag: True})
    x, h = inputs(rng)
    a = full.fuse(x, h, StyleLabel(1, 3)).data
    b = ablated.fuse(x, h, StyleLabel(1, 3)).data
    assert np.abs(a - b).max() > 1e-3


def test_update_gate_ablation_means_z_one(f64, rng):
    asm = make(disable_update_gate=True)
    x, h = inputs(rng)
    out = asm.forward(x, h, StyleLabel(0, 3))
    np.testing.assert_array_equal(out.x_hat.data, out.h_tilde.data)


def test_stage_out_of_range():
    with pytest.raises(DimensionError):
        AnisotropicStrokeModule(np.random.default_rng(0), 6, 4, 3, 5, 4)


def test_placements_are_distinct_models(f64, rng):
    x = Tensor(rng.uniform(-1, 1, (1, 3, 32, 32)))
    outs = {}
    for placement in ("none", "ASM1", "ASM2", "ASM3"):
        cfg = GeneratorConfig(base_channels=4, channel_cap=16, n_resblocks=1, asm_placement=placement)
        G = Generator(cfg, np.random.default_rng(0))
        outs[placement] = G.generate(x, StyleLabel(0, 2)).data
    keys = list(outs)
    for i, a in enumerate(keys):
        for b in keys[i + 1 :]:
            assert not np.array_equal(outs[a], outs[b])
