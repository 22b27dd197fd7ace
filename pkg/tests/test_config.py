import pytest

from asmagan.config import DiscConfig, GeneratorConfig, LossWeights, TrainConfig, build_config, load_config, toy_config
from asmagan.engine import ConfigurationError


def test_published_hyperparameters():
    cfg = TrainConfig()
    assert cfg.lr == 1e-4 and (cfg.adam_beta1, cfg.adam_beta2) == (0.5, 0.999)
    assert cfg.d_steps_per_g == 3
    assert cfg.losses.lambda_C == 90 and cfg.losses.lambda_T == 100
    assert cfg.discriminator.n_blocks == 6 and cfg.discriminator.kernel == 5
    assert cfg.generator.downsample_stages == 4 and cfg.generator.n_resblocks == 5
    assert cfg.generator.asm_placement == "ASM2"


def test_yaml_flat_and_sectioned_keys(tmp_path):
    flat = tmp_path / "flat.yaml"
    flat.write_text("lr: 0.0002\nbase_channels: 8\nchannels: [8, 8, 8, 8, 8, 8]\nlambda_T: 50\nnum_styles: 3\n")
    sec = tmp_path / "sec.yaml"
    sec.write_text(
        "train:\n  lr: 0.0002\ngenerator:\n  base_channels: 8\n  num_styles: 3\n"
        "discriminator:\n  channels: [8, 8, 8, 8, 8, 8]\n  num_styles: 3\nlosses:\n  lambda_T: 50\n"
    )
    a, b = load_config(flat), load_config(sec)
    assert a == b and a.lr == 2e-4 and a.losses.lambda_T == 50 and a.discriminator.num_styles == 3
    assert a.config_hash() == b.config_hash() != TrainConfig().config_hash()


def test_round_trip_through_dict():
    cfg = toy_config(seed=5, resolution_schedule=[[32, 2]])
    assert build_config(cfg.to_dict()) == cfg


def test_overrides_and_num_styles(tmp_path):
    cfg = load_config(None, num_styles=4, seed=9, lr=None)
    assert cfg.seed == 9 and cfg.lr == 1e-4
    assert cfg.generator.num_styles == cfg.discriminator.num_styles == 4


def test_rejections(tmp_path):
    with pytest.raises(ConfigurationError, match="unknown"):
        build_config({"learning_rate": 1})
    with pytest.raises(ConfigurationError, match="unknown"):
        build_config({"generator": {"lr": 1}})
    p = tmp_path / "list.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        load_config(p)
    with pytest.raises(ConfigurationError):
        GeneratorConfig(asm_placement="ASM4")
    with pytest.raises(ConfigurationError):
        DiscConfig(channels=[8, 8])
    with pytest.raises(ConfigurationError):
        LossWeights(lambda_C=-1)
    with pytest.raises(ConfigurationError):
        TrainConfig(generator=GeneratorConfig(num_styles=3))
