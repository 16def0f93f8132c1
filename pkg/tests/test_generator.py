import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import probe_radius
from lvcnet.checks import TINY_GENERATOR, check_generator_tiny
from lvcnet.generator import (
    GeneratorConfig,
    PWGConfig,
    count_params,
    generator_forward,
    init_params,
    lvcnet_block,
    lvcnet_config,
    param_breakdown,
    pwg_config,
    pwg_forward,
    receptive_field,
)
from lvcnet.numerics import Tensor

SMALL = GeneratorConfig(blocks=2, layers_per_block=3, residual_channels=3, cond_channels=6, hop=16, predictor_hidden=8)


def inputs(cfg, frames, seed=0):
    rng = np.random.default_rng(seed)
    m = frames + cfg.context_frames
    mel = rng.standard_normal((1, cfg.cond_channels, m))
    noise = rng.standard_normal((1, 1, frames * cfg.hop))
    return noise, mel


def test_alignment_twenty_frames_gives_4096_samples():
    cfg = lvcnet_config(4, cond_channels=8, predictor_hidden=8)
    noise, mel = inputs(cfg, 16)
    assert mel.shape[-1] == 20
    y = generator_forward(noise, mel, init_params(cfg, 0).bind(), cfg)
    assert y.shape == (1, 1, 4096)


def test_alignment_violation():
    noise, mel = inputs(SMALL, 4)
    with pytest.raises(ValueError, match="alignment"):
        generator_forward(noise[..., :-1], mel, init_params(SMALL).bind(), SMALL)
    with pytest.raises(ValueError, match="at least"):
        generator_forward(noise[..., :0], mel[..., :4], init_params(SMALL).bind(), SMALL)


def test_non_finite_input_rejected():
    noise, mel = inputs(SMALL, 4)
    mel[0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        generator_forward(noise, mel, init_params(SMALL).bind(), SMALL)


def test_output_in_tanh_range():
    noise, mel = inputs(SMALL, 6)
    params = init_params(SMALL, 3)
    params["exit.g"] = params["exit.g"] * 50  # push deep into saturation
    y = generator_forward(noise * 10, mel, params.bind(), SMALL).data
    assert np.all(np.abs(y) <= 1.0)


def test_fixed_seed_is_bit_identical():
    noise, mel = inputs(SMALL, 5, seed=9)
    a = generator_forward(noise, mel, init_params(SMALL, 4).bind(), SMALL).data
    b = generator_forward(noise, mel, init_params(SMALL, 4).bind(), SMALL).data
    assert a.tobytes() == b.tobytes()


def _zero_block(params, b):
    for name in params.names():
        if name.startswith(f"block{b}."):
            params[name] = np.zeros_like(params[name])


@pytest.mark.parametrize("block_idx", [0, 1])
def test_zero_block_identity_or_zero(block_idx):
    params = init_params(SMALL, 0)
    _zero_block(params, block_idx)
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((1, SMALL.residual_channels, 4 * SMALL.hop)))
    h = Tensor(rng.standard_normal((1, SMALL.cond_channels, 4 + SMALL.context_frames)))
    y = lvcnet_block(x, h, params.bind(), block_idx, SMALL).data
    if block_idx == 0:
        assert not np.any(y)
    else:
        np.testing.assert_array_equal(y, x.data)


def test_first_block_residual_flag():
    cfg = GeneratorConfig(**{**SMALL.__dict__, "first_block_residual": True})
    params = init_params(cfg, 0)
    _zero_block(params, 0)
    x = Tensor(np.ones((1, cfg.residual_channels, 2 * cfg.hop)))
    h = Tensor(np.ones((1, cfg.cond_channels, 2 + cfg.context_frames)))
    np.testing.assert_array_equal(lvcnet_block(x, h, params.bind(), 0, cfg).data, x.data)


def test_block_shape_mismatch():
    x = Tensor(np.zeros((1, SMALL.residual_channels, 3 * SMALL.hop)))
    h = Tensor(np.zeros((1, SMALL.cond_channels, 4 + SMALL.context_frames)))
    with pytest.raises(ValueError, match="kernels cover"):
        lvcnet_block(x, h, init_params(SMALL).bind(), 0, SMALL)


# -- receptive field -----------------------------------------------------------
def measured_radius(cfg, seed=0):
    r = receptive_field(cfg)
    frames = (2 * r + 2) // cfg.hop + 2
    noise, mel = inputs(cfg, frames, seed)
    T = frames * cfg.hop
    params = init_params(cfg, seed).bind()
    return probe_radius(lambda n: generator_forward(n, mel, params, cfg), T, T // 2, seed)


def test_one_block_dilations_1_2_4_radius_seven():
    cfg = GeneratorConfig(blocks=1, layers_per_block=3, residual_channels=2, cond_channels=3, hop=8, predictor_hidden=4)
    assert cfg.dilations == [1, 2, 4]
    assert receptive_field(cfg) == 7 == measured_radius(cfg)


def test_pointwise_network_radius_zero():
    cfg = GeneratorConfig(blocks=2, layers_per_block=3, kernel_size=1, residual_channels=2, cond_channels=3, hop=4, predictor_hidden=4)
    assert receptive_field(cfg) == 0 == measured_radius(cfg)


def test_full_config_radius_closed_form():
    assert receptive_field(GeneratorConfig()) == 3 * 1023 == 3069


@settings(max_examples=12)
@given(
    st.integers(1, 3),
    st.integers(1, 4),
    st.sampled_from([1, 3, 5]),
    st.integers(2, 3),
    st.integers(0, 1000),
)
def test_receptive_field_matches_delta_probe(blocks, layers, k, base, seed):
    cfg = GeneratorConfig(
        blocks=blocks,
        layers_per_block=layers,
        kernel_size=k,
        dilation_base=base,
        residual_channels=2,
        cond_channels=3,
        hop=8,
        predictor_hidden=4,
    )
    assert measured_radius(cfg, seed) == receptive_field(cfg)


# -- parameter accounting ------------------------------------------------------
@pytest.mark.parametrize("cfg", [lvcnet_config(w) for w in (4, 6, 8)] + [pwg_config(w) for w in (32, 48, 64)] + [SMALL])
def test_count_params_equals_store_enumeration(cfg):
    store = init_params(cfg, 0)
    assert count_params(cfg) == store.count()


@pytest.mark.parametrize("cfg", [lvcnet_config(8), pwg_config(64)])
def test_breakdown_matches_store_groups(cfg):
    assert param_breakdown(cfg) == init_params(cfg, 0).breakdown(depth=1)


def test_store_names_unique_and_ordered():
    a = init_params(lvcnet_config(4), 0).names()
    assert len(a) == len(set(a))
    assert a == init_params(lvcnet_config(4), 1).names()
    assert a[0].startswith("entry") and a[-1].startswith("exit")


def test_doubling_channels_quadruples_predictor_targets():
    def target_width(C):
        return lvcnet_config(C).predictor_config().output_channels

    def enumerated(C):
        return init_params(lvcnet_config(C), 0)["block0.pred.out.b"].size

    for C in (4, 8):
        assert enumerated(C) == target_width(C)
        ratio = enumerated(2 * C) / enumerated(C)
        assert 3.5 < ratio < 4.0


# -- baseline generator --------------------------------------------------------
TINY_PWG = PWGConfig(residual_channels=4, layers=6, stacks=2, cond_channels=5, hop=16, upsample_scales=(4, 4))


def test_pwg_length_matches_noise():
    rng = np.random.default_rng(0)
    m = 7
    mel = rng.standard_normal((1, 5, m))
    noise = rng.standard_normal((1, 1, (m - TINY_PWG.context_frames) * TINY_PWG.hop))
    y = pwg_forward(noise, mel, init_params(TINY_PWG, 0).bind(), TINY_PWG)
    assert y.shape == noise.shape


def test_pwg_zero_params_zero_output():
    rng = np.random.default_rng(0)
    mel = rng.standard_normal((1, 5, 6))
    noise = rng.standard_normal((1, 1, 2 * TINY_PWG.hop))
    y = pwg_forward(noise, mel, init_params(TINY_PWG, 0).zeros_like().bind(), TINY_PWG)
    assert not np.any(y.data)


def test_pwg_length_mismatch():
    rng = np.random.default_rng(0)
    mel = rng.standard_normal((1, 5, 6))
    with pytest.raises(ValueError, match="noise length"):
        pwg_forward(rng.standard_normal((1, 1, 31)), mel, init_params(TINY_PWG, 0).bind(), TINY_PWG)


def test_pwg_dilation_cycles():
    assert pwg_config(64).dilations == [2**j for j in range(10)] * 3


def test_tiny_generator_grad_check():
    assert TINY_GENERATOR.residual_channels == 2 and TINY_GENERATOR.layers_per_block == 3
    assert check_generator_tiny() < 1e-4
