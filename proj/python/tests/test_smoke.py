import math

import numpy as np
import pytest

import toprokit as tk


def softmax_entropy_reference(q, k, scale):
    s = q @ k.T * scale
    s = s - s.max(axis=1, keepdims=True)
    p = np.exp(s)
    p /= p.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=1)


@pytest.fixture
def qkv():
    rng = np.random.default_rng(7)
    q = rng.standard_normal((50, 16))
    k = rng.standard_normal((70, 16))
    v = rng.standard_normal((70, 16))
    return q, k, v


def test_naive_matches_numpy_reference(qkv):
    q, k, v = qkv
    scale = 1.0 / math.sqrt(16)
    o, entropy = tk.naive_attention_entropy(q, k, v)
    ref = softmax_entropy_reference(q, k, scale)
    np.testing.assert_allclose(entropy, ref, atol=1e-12)
    s = q @ k.T * scale
    p = np.exp(s - s.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(o, p @ v, atol=1e-12)


def test_streaming_matches_naive(qkv):
    q, k, v = qkv
    o_n, e_n = tk.naive_attention_entropy(q, k, v)
    o_f, e_f = tk.flash_attention_entropy(q, k, v, b_r=16, b_c=24, precision="f64")
    np.testing.assert_allclose(e_f, e_n, atol=1e-10)
    np.testing.assert_allclose(o_f, o_n, atol=1e-10)
    np.testing.assert_allclose(tk.flash_attention(q, k, v, b_r=8, b_c=8), o_n, atol=1e-10)


def test_uniform_and_single_key_anchors():
    q = np.zeros((3, 4))
    k = np.ones((5, 4))
    v = np.ones((5, 2))
    _, entropy = tk.flash_attention_entropy(q, k, v)
    np.testing.assert_allclose(entropy, math.log(5), atol=1e-9)
    _, single = tk.naive_attention_entropy(q[:, :1], np.ones((1, 1)), np.ones((1, 3)))
    np.testing.assert_allclose(single, 0.0, atol=1e-12)


def test_policy_formula_anchors():
    assert tk.low_entropy_ratio([1.0, 2.0, 3.0, 4.0]) == 0.5
    np.testing.assert_allclose(tk.normalize_entropy([2.0, 2.0, 4.0]), [0.25, 0.25, 0.5])
    ratio, score = tk.layer_score(3.0, 1.0, beta=1.0)
    assert ratio == pytest.approx(3.0)
    assert score == pytest.approx(math.exp(-2.0))
    assert tk.scale_depth([0.1, 0.2, 0.45, 0.5], tau=0.4) == 3
    assert tk.scale_depth([0.0, 0.0], tau=0.4) is None

    q = tk.token_tendency(10, 10, 1.0, [0.5, 0.5])
    p = tk.keep_probability(q, scale=10, depth=5, alpha_min=0.2, alpha_max=1.0)
    np.testing.assert_allclose(p, 0.4, atol=1e-12)
    p_below = tk.keep_probability(q, scale=3, depth=5, alpha_min=0.2, alpha_max=1.0)
    np.testing.assert_allclose(p_below, 1.0)


def test_ssim_anchors():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 6))
    assert tk.ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    a, b, c1 = 0.5, 0.25, 1e-4
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    assert tk.ssim(np.full((3, 3), a), np.full((3, 3), b)) == pytest.approx(expected)


def test_tprv_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    arr = rng.standard_normal((9, 5))
    path = str(tmp_path / "t.tprv")
    tk.write_tprv(arr, path)
    np.testing.assert_array_equal(tk.read_tprv(path), arr)
    with pytest.raises(Exception):
        tk.read_tprv(str(tmp_path / "missing.tprv"))


def test_row_reduce_xlogx():
    out = tk.row_reduce_xlogx(np.array([[1.0, 1.0], [0.0, math.e], [0.5, 0.5]]))
    np.testing.assert_allclose(out, [0.0, math.e, -math.log(2)], atol=1e-12)
