import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import naive_conv1d, naive_lvc
from lvcnet.checks import check_lvc, check_predictor
from lvcnet.lvc import (
    KernelPredictorConfig,
    KernelSet,
    lvc_forward,
    predict_kernels,
    predictor_param_shapes,
    split_intervals,
)
from lvcnet.numerics import Tensor, backward, tsum


def random_kernels(rng, B, F, Co, Ci, K, dtype=np.float64, scale=0.3):
    def w():
        return (scale * rng.standard_normal((B, F, Co, Ci, K))).astype(dtype)

    def b():
        return (scale * rng.standard_normal((B, F, Co))).astype(dtype)

    return w(), w(), b(), b()


def as_set(arrays):
    return KernelSet(*(Tensor(a) for a in arrays))


# -- split_intervals ---------------------------------------------------------
def test_split_twelve_into_three():
    x = np.arange(12.0)[None, None]
    parts = split_intervals(x, 3, 4)
    assert [p[0, 0].tolist() for p in parts] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11]]


def test_split_single_frame_is_identity():
    x = np.arange(7.0)[None, None]
    (only,) = split_intervals(x, 1, 7)
    np.testing.assert_array_equal(only, x)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 1000))
def test_split_then_concat_is_identity(frames, hop, seed):
    x = np.random.default_rng(seed).standard_normal((2, 3, frames * hop))
    np.testing.assert_array_equal(np.concatenate(split_intervals(x, frames, hop), axis=-1), x)


def test_split_rejects_bad_length():
    with pytest.raises(ValueError):
        split_intervals(np.zeros((1, 1, 10)), 3, 4)


# -- kernel predictor ----------------------------------------------------------
def predictor_params(cfg, rng, zero=False):
    out = {}
    for name, shape in predictor_param_shapes(cfg, "pred"):
        a = np.zeros(shape) if zero else rng.standard_normal(shape)
        if name.endswith(".g") and not zero:
            a = np.abs(a) + 0.5
        out[name] = Tensor(a)
    return out


def test_predictor_trims_four_frames():
    cfg = KernelPredictorConfig(cond_channels=6, hidden_channels=4, targets=[(2, 2, 3)] * 3)
    rng = np.random.default_rng(0)
    sets = predict_kernels(Tensor(rng.standard_normal((1, 6, 20))), cfg, predictor_params(cfg, rng))
    assert len(sets) == 3
    for ks in sets:
        assert ks.wf.shape == (1, 16, 2, 2, 3)
        assert ks.bg.shape == (1, 16, 2)


def test_predictor_rejects_short_conditioning():
    cfg = KernelPredictorConfig(cond_channels=2, hidden_channels=2, targets=[(1, 1, 3)])
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="shorter"):
        predict_kernels(Tensor(np.zeros((1, 2, 4))), cfg, predictor_params(cfg, rng))


def test_zero_predictor_gives_zero_output():
    cfg = KernelPredictorConfig(cond_channels=5, hidden_channels=4, targets=[(3, 3, 3)])
    rng = np.random.default_rng(1)
    (ks,) = predict_kernels(Tensor(rng.standard_normal((1, 5, 9))), cfg, predictor_params(cfg, rng, zero=True))
    for t in (ks.wf, ks.wg, ks.bf, ks.bg):
        assert not np.any(t.data)
    y = lvc_forward(rng.standard_normal((1, 3, 5 * 4)), ks, dilation=1, hop=4)
    assert not np.any(y.data)


def _count_output_channels(targets):
    # independent tally: walk every scalar the carving consumes
    n = 0
    for o, i, k in targets:
        for _path in ("filter", "gate"):
            for _ in range(o):
                for _ in range(i):
                    n += k
        n += o  # filter bias
        n += o  # gate bias
    return n


def test_output_width_for_one_target():
    cfg = KernelPredictorConfig(targets=[(8, 8, 3)])
    assert cfg.output_channels == _count_output_channels(cfg.targets) == 400


@given(st.lists(st.tuples(st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 3, 5])), min_size=1, max_size=5))
def test_output_width_formula(targets):
    assert KernelPredictorConfig(targets=targets).output_channels == _count_output_channels(targets)


def test_predictor_carving_order():
    """With an identity-like output stage the carved pieces must appear as wf, wg, bf, bg."""
    o, i, k = 1, 1, 3
    cfg = KernelPredictorConfig(cond_channels=1, hidden_channels=1, layers=0, entry_kernel=1, targets=[(o, i, k)])
    width = cfg.output_channels  # 8
    params = {
        "pred.entry.v": Tensor(np.ones((1, 1, 1))),
        "pred.entry.g": Tensor(np.ones(1)),
        "pred.entry.b": Tensor(np.zeros(1)),
        "pred.out.v": Tensor(np.ones((width, 1, 1))),
        "pred.out.g": Tensor(np.arange(1.0, width + 1)),
        "pred.out.b": Tensor(np.zeros(width)),
    }
    (ks,) = predict_kernels(Tensor(np.ones((1, 1, 2))), cfg, params)
    np.testing.assert_array_equal(ks.wf.data[0, 0, 0, 0], [1, 2, 3])
    np.testing.assert_array_equal(ks.wg.data[0, 0, 0, 0], [4, 5, 6])
    assert ks.bf.data[0, 0, 0] == 7 and ks.bg.data[0, 0, 0] == 8


# -- lvc_forward ---------------------------------------------------------------
def gated_conv(x, wf, wg, bf, bg, d):
    a = naive_conv1d(x, wf, bf, d)
    g = naive_conv1d(x, wg, bg, d)
    return np.tanh(a) / (1.0 + np.exp(-g))


lvc_cases = st.tuples(
    st.integers(1, 2),  # batch
    st.integers(1, 3),  # in
    st.integers(1, 3),  # out
    st.sampled_from([1, 3, 5]),
    st.integers(1, 6),  # dilation
    st.integers(1, 4),  # frames
    st.integers(1, 6),  # hop
    st.integers(0, 2**31 - 1),
)


@settings(max_examples=100)
@given(lvc_cases)
def test_lvc_matches_brute_force_oracle_32bit(case):
    B, Ci, Co, K, d, F, hop, seed = case
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((B, Ci, F * hop)).astype(np.float32)
    arrays = random_kernels(rng, B, F, Co, Ci, K, np.float32)
    got = lvc_forward(Tensor(x), as_set(arrays), d, hop).data
    assert got.dtype == np.float32
    np.testing.assert_allclose(got, naive_lvc(x, *arrays, d, hop), rtol=0, atol=1e-6)


@settings(max_examples=100)
@given(lvc_cases)
def test_identical_kernels_collapse_to_gated_conv(case):
    B, Ci, Co, K, d, F, hop, seed = case
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((B, Ci, F * hop)).astype(np.float32)
    wf, wg, bf, bg = random_kernels(rng, 1, 1, Co, Ci, K, np.float32)
    tiled = [np.broadcast_to(a, (B, F) + a.shape[2:]).copy() for a in (wf, wg, bf, bg)]
    got = lvc_forward(Tensor(x), as_set(tiled), d, hop).data
    ref = gated_conv(x, wf[0, 0], wg[0, 0], bf[0, 0], bg[0, 0], d)
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-6)


def test_output_length_equals_input_length():
    rng = np.random.default_rng(0)
    y = lvc_forward(rng.standard_normal((1, 2, 24)), as_set(random_kernels(rng, 1, 3, 4, 2, 3)), 8, 8)
    assert y.shape == (1, 4, 24)


def test_lvc_errors():
    rng = np.random.default_rng(0)
    ks = as_set(random_kernels(rng, 1, 3, 2, 2, 3))
    with pytest.raises(ValueError, match="frames"):
        lvc_forward(np.zeros((1, 2, 10)), ks, 1, 4)
    with pytest.raises(ValueError, match="odd"):
        lvc_forward(np.zeros((1, 2, 12)), as_set(random_kernels(rng, 1, 3, 2, 2, 2)), 1, 4)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_kernel_locality(seed, dilation):
    rng = np.random.default_rng(seed)
    F, hop = 5, 6
    x = rng.standard_normal((1, 2, F * hop))
    arrays = random_kernels(rng, 1, F, 2, 2, 3)
    base = lvc_forward(x, as_set(arrays), dilation, hop).data
    i = int(rng.integers(F))
    bumped = [a.copy() for a in arrays]
    for a in bumped:
        a[:, i] += 0.7
    out = lvc_forward(x, as_set(bumped), dilation, hop).data
    changed = np.any(out != base, axis=(0, 1))
    assert not changed[: i * hop].any() and not changed[(i + 1) * hop :].any()
    assert changed[i * hop : (i + 1) * hop].any()


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 4), st.sampled_from([3, 5]))
def test_input_locality_from_gradient(seed, dilation, K):
    rng = np.random.default_rng(seed)
    F, hop = 4, 8
    T = F * hop
    x = Tensor(rng.standard_normal((1, 2, T)), requires_grad=True)
    t = int(rng.integers(T))
    y = lvc_forward(x, as_set(random_kernels(rng, 1, F, 2, 2, K)), dilation, hop)
    mask = np.zeros(y.shape)
    mask[..., t] = 1.0
    backward(tsum(y * mask))
    radius = (K - 1) * dilation // 2
    far = np.abs(np.arange(T) - t) > radius
    assert not np.any(x.grad[..., far])


def test_lvc_is_deterministic():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 3, 40))
    ks = as_set(random_kernels(rng, 1, 5, 3, 3, 3))
    assert np.array_equal(lvc_forward(x, ks, 2, 8).data, lvc_forward(x, ks, 2, 8).data)


def test_grad_checks():
    assert check_lvc() < 1e-4
    assert check_predictor() < 1e-4
