"""The numba kernels and their numpy fallbacks must agree bit for bit."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisoeval import kernels
from anisoeval._accel import NUMBA_AVAILABLE

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def test_mix64_reference_values():
    # splitmix64 outputs for state increments from 0
    # mix64 adds the golden-ratio increment itself
    z = np.array([0, 0x9E3779B97F4A7C15], dtype=np.uint64)
    out = kernels.mix64(z)
    assert int(out[0]) == 0xE220A8397B1DCDAF
    assert int(out[1]) == 0x6E789E6AA1B965F4


def test_hash_uniform_range(rng):
    keys = rng.integers(0, 2**63, size=10_000, dtype=np.uint64)
    u = kernels.hash_uniform(keys, np.uint64(17))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


@needs_numba
def test_hash_uniform_parity(rng):
    keys = rng.integers(0, 2**63, size=5000, dtype=np.uint64)
    k = np.uint64(0xDEADBEEF)
    assert np.array_equal(kernels.hash_uniform_jit(keys, k), kernels.hash_uniform_np(keys, k))


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=2, max_size=30), st.integers(1, 60), st.integers(0, 2**64 - 1))
def test_bootstrap_parity(vals, iters, seed):
    a = np.array(vals, dtype=np.float64)
    b = a[::-1].copy() * 0.5
    jit = kernels.bootstrap_means_jit(a, b, iters, np.uint64(seed))
    ref = kernels.bootstrap_means_np(a, b, iters, np.uint64(seed))
    for x, y in zip(jit, ref):
        assert np.array_equal(x, y)


@needs_numba
@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40), st.lists(st.floats(-5, 5), min_size=1, max_size=40))
def test_ks_parity(xs, ys):
    x = np.sort(np.array(xs))
    y = np.sort(np.array(ys))
    assert kernels.ks_d_jit(x, y) == kernels.ks_d_np(x, y)


@needs_numba
@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2**64 - 1), max_size=40), st.integers(1, 15))
def test_window_hash_parity(tokens, n):
    t = np.array(tokens, dtype=np.uint64)
    assert np.array_equal(kernels.window_hashes_jit(t, n), kernels.window_hashes_np(t, n))


def test_window_hashes_equal_for_equal_windows():
    t = np.array([5, 6, 7, 8, 5, 6, 7], dtype=np.uint64)
    h = kernels.window_hashes(t, 3)
    assert h.shape == (5,)
    assert h[0] == h[4]
    assert len(set(h[:4].tolist())) == 4
    assert kernels.window_hashes(t, 8).shape == (0,)


def test_bootstrap_means_deterministic():
    a = np.arange(10, dtype=np.float64)
    r1 = kernels.bootstrap_means(a, a, 50, np.uint64(3))
    r2 = kernels.bootstrap_means(a, a, 50, np.uint64(3))
    assert all(np.array_equal(x, y) for x, y in zip(r1, r2))
    assert np.all(r1[2] == 0.0)


def test_env_flag_selects_numpy_path():
    import os
    import subprocess
    import sys

    code = ("import numpy as np; from anisoeval import kernels, _accel; "
            "from anisoeval.analytics import paired_bootstrap; "
            "print(_accel.NUMBA_ENABLED, kernels.hash_uniform is kernels.hash_uniform_np, "
            "paired_bootstrap(np.arange(9.0), np.arange(9.0)[::-1], 200, 5).to_dict())")
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, ANISOEVAL_DISABLE_NUMBA=flag)
        outs[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                    check=True).stdout.split(" ", 2)
    assert outs["1"][:2] == ["False", "True"]
    if NUMBA_AVAILABLE:
        assert outs["0"][:2] == ["True", "False"]
    assert outs["0"][2] == outs["1"][2]
