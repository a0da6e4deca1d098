"""The jitted kernels and their numpy twins must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from iccl import _accel, kernels


def _boxes(rng, b):
    lo = rng.uniform(0, 50, (b, 3))
    return lo, lo + rng.uniform(1, 30, (b, 3))


def test_segment_box_lengths_twins(rng):
    lo, hi = _boxes(rng, 6)
    p0 = rng.uniform(-10, 90, (500, 3))
    p1 = rng.uniform(-10, 90, (500, 3))
    np.testing.assert_allclose(
        kernels.segment_box_lengths_nb(p0, p1, lo, hi), kernels.segment_box_lengths_np(p0, p1, lo, hi),
        rtol=0, atol=1e-12,
    )


def test_segment_box_lengths_axis_parallel(rng):
    lo = np.array([[0.0, 0.0, 0.0]])
    hi = np.array([[10.0, 10.0, 10.0]])
    p0 = np.array([[-5.0, 5.0, 5.0], [-5.0, 0.0, 5.0], [5.0, 5.0, 5.0], [-5.0, 11.0, 5.0]])
    p1 = np.array([[15.0, 5.0, 5.0], [15.0, 0.0, 5.0], [5.0, 5.0, 5.0], [15.0, 11.0, 5.0]])
    for fn in (kernels.segment_box_lengths_nb, kernels.segment_box_lengths_np):
        np.testing.assert_array_equal(fn(p0, p1, lo, hi)[:, 0], [10.0, 0.0, 0.0, 0.0])


def test_shadowing_twins(rng, city):
    lo, hi, att = city.box_arrays()
    nodes = np.column_stack([rng.uniform(0, 100, 40), rng.uniform(0, 80, 40), np.zeros(40)])
    wp = np.column_stack([rng.uniform(0, 100, 16), rng.uniform(0, 80, 16), np.full(16, 40.0)])
    np.testing.assert_allclose(
        kernels.shadowing_loss_db_nb(nodes, wp, lo, hi, att), kernels.shadowing_loss_db_np(nodes, wp, lo, hi, att),
        rtol=1e-12, atol=1e-12,
    )


def test_shadowing_empty_scene():
    z = np.zeros((0, 3))
    nodes = np.zeros((3, 3))
    wp = np.ones((2, 3))
    for fn in (kernels.shadowing_loss_db_nb, kernels.shadowing_loss_db_np):
        np.testing.assert_array_equal(fn(nodes, wp, z, z, np.zeros(0)), np.zeros((3, 2)))


@pytest.mark.parametrize("k", [1, 3])
def test_im2col_col2im_twins(rng, k):
    x = rng.standard_normal((4, 11, 3))
    cols_nb = kernels.im2col_nb(x, k)
    np.testing.assert_array_equal(cols_nb, kernels.im2col_np(x, k))
    assert cols_nb.shape == (4, 11 - k + 1, k * 3)
    np.testing.assert_array_equal(cols_nb[:, 2, :3], x[:, 2, :])
    g = rng.standard_normal(cols_nb.shape)
    np.testing.assert_allclose(kernels.col2im_nb(g, k, 11), kernels.col2im_np(g, k, 11), atol=1e-14)


def test_col2im_is_adjoint_of_im2col(rng):
    x = rng.standard_normal((2, 9, 2))
    g = rng.standard_normal((2, 7, 6))
    lhs = np.sum(kernels.im2col(x, 3) * g)
    rhs = np.sum(x * kernels.col2im(g, 3, 9))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("length", [8, 9])
def test_maxpool_twins(rng, length):
    x = rng.standard_normal((3, length, 5))
    out_nb, arg_nb = kernels.maxpool_forward_nb(x, 2)
    out_np, arg_np = kernels.maxpool_forward_np(x, 2)
    np.testing.assert_array_equal(out_nb, out_np)
    np.testing.assert_array_equal(arg_nb, arg_np)
    assert out_nb.shape == (3, length // 2, 5)
    np.testing.assert_array_equal(out_nb, np.maximum(x[:, 0:2 * (length // 2):2], x[:, 1:2 * (length // 2):2]))
    d = rng.standard_normal(out_nb.shape)
    back = kernels.maxpool_backward_nb(d, arg_nb, length, 2)
    np.testing.assert_array_equal(back, kernels.maxpool_backward_np(d, arg_np, length, 2))
    assert np.sum(back * x) == pytest.approx(np.sum(d * out_nb))


def test_nearest_rows_twins_and_ties(rng):
    store = rng.standard_normal((50, 8))
    q = rng.standard_normal((30, 8))
    np.testing.assert_array_equal(kernels.nearest_rows_nb(store, q), kernels.nearest_rows_np(store, q))
    brute = np.argmin(((q[:, None] - store[None]) ** 2).sum(-1), axis=1)
    np.testing.assert_array_equal(kernels.nearest_rows(store, q), brute)
    dup = np.vstack([store[:1], store[:1]])
    for fn in (kernels.nearest_rows_nb, kernels.nearest_rows_np):
        assert fn(dup, store[:1])[0] == 0


def test_env_flag_selects_numpy_path():
    code = "from iccl import _accel, kernels; print(_accel.NUMBA_ENABLED, kernels.im2col.__name__)"
    env = dict(os.environ, ICCL_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "im2col_np"]
    env["ICCL_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["True", "im2col_nb"]


def test_public_names_follow_flag():
    expect = "_nb" if _accel.NUMBA_ENABLED else "_np"
    assert kernels.segment_box_lengths.__name__.endswith(expect)
