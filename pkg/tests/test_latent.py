import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from overfit_codec.latent import (
    LatentPyramid,
    QuantMode,
    init_pyramid,
    level_shapes,
    quantize_round,
    relax_noise,
    ste_eps_forward_backward,
)


def test_level_shapes_dyadic():
    assert level_shapes(256, 256, 7) == [(256, 256), (128, 128), (64, 64), (32, 32), (16, 16), (8, 8), (4, 4)]


def test_level_shapes_odd_sizes_round_up():
    assert level_shapes(5, 3, 4) == [(5, 3), (3, 2), (2, 1), (1, 1)]


@pytest.mark.parametrize("args", [(0, 4, 2), (4, 4, 0), (-1, 3, 1)])
def test_level_shapes_rejects_bad_geometry(args):
    with pytest.raises(ValueError):
        level_shapes(*args)


def test_init_pyramid_is_zero():
    p = init_pyramid(10, 7, 3)
    assert p.shapes == [(10, 7), (5, 4), (3, 2)]
    assert p.height == 10 and p.width == 7 and p.n_levels == 3
    assert all(not lv.any() for lv in p.levels)
    assert p.is_integer()


def test_round_ties_away_from_zero():
    y = np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 0.49999, -0.50001])
    np.testing.assert_array_equal(quantize_round(y), [-3, -2, -1, 1, 2, 3, 0, -1])
    assert quantize_round(2.5) == 3 and isinstance(quantize_round(2.5), int)
    assert quantize_round(-0.4) == 0


def test_round_has_no_negative_zero():
    out = quantize_round(np.array([-0.2, -0.0]))
    assert not np.any(np.signbit(out))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e6, 1e6)))
def test_round_is_nearest_integer(y):
    q = quantize_round(y)
    assert np.all(np.abs(q - y) <= 0.5)
    np.testing.assert_array_equal(q, np.round(q))


def test_relax_noise_bounds(rng):
    y = np.zeros(20000)
    n = relax_noise(y, rng)
    assert n.min() >= -0.5 and n.max() < 0.5
    assert abs(n.mean()) < 0.01
    assert abs(n.var() - 1 / 12) < 0.005


def test_ste_eps_forward_and_backward():
    y = np.array([0.3, 1.7, -2.5])
    q, back = ste_eps_forward_backward(y, 0.01)
    np.testing.assert_array_equal(q, [0, 2, -3])
    np.testing.assert_allclose(back(np.array([1.0, -2.0, 4.0])), [0.01, -0.02, 0.04])
    _, plain = ste_eps_forward_backward(y, 1.0)
    np.testing.assert_array_equal(plain(np.ones(3)), np.ones(3))
    with pytest.raises(ValueError):
        ste_eps_forward_backward(y, 0.0)


def test_quant_modes(rng):
    y = np.array([0.2, -1.6])
    q, s = QuantMode("none").apply(y)
    np.testing.assert_array_equal(q, [0, -2])
    assert s == 0.0
    q, s = QuantMode("ste_eps", 0.05).apply(y)
    np.testing.assert_array_equal(q, [0, -2])
    assert s == 0.05
    q, s = QuantMode("noise").apply(y, rng)
    assert s == 1.0 and np.all(np.abs(q - y) <= 0.5)
    with pytest.raises(ValueError):
        QuantMode("noise").apply(y)
    with pytest.raises(ValueError):
        QuantMode("floor")


def test_pyramid_round_copy_equality():
    p = LatentPyramid([np.array([[0.4, 1.6]]), np.array([[-0.5]])])
    r = p.rounded()
    assert r.is_integer() and not p.is_integer()
    np.testing.assert_array_equal(r.levels[0], [[0, 2]])
    c = r.copy()
    assert c == r
    c.levels[1][0, 0] = 5
    assert c != r
