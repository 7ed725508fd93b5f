"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba (``*_jit``) and
a vectorised numpy version (``*_np``). Both produce bit-identical results; the
public name is bound to one of them at import time according to
:data:`anisoeval._accel.NUMBA_ENABLED`.

All hashing is done in wrapping uint64 arithmetic (splitmix64 finaliser), so
the draws are counter-based: a value depends only on its key, never on call
order or on which worker computed it.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_POLY = np.uint64(0x100000001B3)


# --- splitmix64 -------------------------------------------------------------

@njit
def _mix_jit(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def mix64(z):
    """splitmix64 finaliser; accepts a Python int, np.uint64 or uint64 array."""
    scalar = np.isscalar(z) or isinstance(z, int)
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> _S30)) * _MUL1
        z = (z ^ (z >> _S27)) * _MUL2
        z = z ^ (z >> _S31)
    return np.uint64(z) if scalar else z


def stream_key(seed, stream):
    """Fold a seed and a stream index into one 64-bit key."""
    return mix64(mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.uint64(stream))


# --- hash -> uniform(0, 1) ---------------------------------------------------

@njit
def hash_uniform_jit(keys, key):
    out = np.empty(keys.shape[0], dtype=np.float64)
    for i in range(keys.shape[0]):
        z = _mix_jit(keys[i] ^ key)
        out[i] = np.float64(z >> _S11) * _INV53
    return out


def hash_uniform_np(keys, key):
    z = mix64(np.asarray(keys, dtype=np.uint64) ^ np.uint64(key))
    return (z >> _S11).astype(np.float64) * _INV53


# --- paired bootstrap --------------------------------------------------------

@njit
def bootstrap_means_jit(a, b, iters, seed):
    n = a.shape[0]
    nn = np.uint64(n)
    mean_a = np.empty(iters, dtype=np.float64)
    mean_b = np.empty(iters, dtype=np.float64)
    mean_d = np.empty(iters, dtype=np.float64)
    for it in range(iters):
        s = _mix_jit(seed + np.uint64(it))
        sa = 0.0
        sb = 0.0
        sd = 0.0
        for j in range(n):
            k = _mix_jit(s ^ _mix_jit(np.uint64(j))) % nn
            sa += a[k]
            sb += b[k]
            sd += a[k] - b[k]
        mean_a[it] = sa / n
        mean_b[it] = sb / n
        mean_d[it] = sd / n
    return mean_a, mean_b, mean_d


def bootstrap_means_np(a, b, iters, seed):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    with np.errstate(over="ignore"):
        s = mix64(np.uint64(seed) + np.arange(iters, dtype=np.uint64))
    jmix = mix64(np.arange(n, dtype=np.uint64))
    idx = (mix64(s[:, None] ^ jmix[None, :]) % np.uint64(n)).astype(np.int64)
    # cumsum keeps left-to-right summation order, matching the compiled loop
    sa = np.cumsum(a[idx], axis=1)[:, -1]
    sb = np.cumsum(b[idx], axis=1)[:, -1]
    sd = np.cumsum((a - b)[idx], axis=1)[:, -1]
    return sa / n, sb / n, sd / n


# --- two-sample KS statistic over sorted inputs ------------------------------

@njit
def ks_d_jit(xs, ys):
    nx = xs.shape[0]
    ny = ys.shape[0]
    i = 0
    j = 0
    d = 0.0
    while i < nx or j < ny:
        if j >= ny or (i < nx and xs[i] <= ys[j]):
            v = xs[i]
        else:
            v = ys[j]
        while i < nx and xs[i] <= v:
            i += 1
        while j < ny and ys[j] <= v:
            j += 1
        diff = abs(i / nx - j / ny)
        if diff > d:
            d = diff
    return d


def ks_d_np(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    pooled = np.concatenate([xs, ys])
    fx = np.searchsorted(xs, pooled, side="right") / xs.shape[0]
    fy = np.searchsorted(ys, pooled, side="right") / ys.shape[0]
    return float(np.max(np.abs(fx - fy)))


# --- polynomial window hashes over token ids ---------------------------------

@njit
def window_hashes_jit(tokens, n):
    m = tokens.shape[0] - n + 1
    if m <= 0:
        return np.empty(0, dtype=np.uint64)
    out = np.empty(m, dtype=np.uint64)
    top = np.uint64(1)
    for _ in range(n - 1):
        top = top * _POLY
    h = np.uint64(0)
    for k in range(n):
        h = h * _POLY + tokens[k]
    out[0] = h
    for i in range(1, m):
        h = (h - tokens[i - 1] * top) * _POLY + tokens[i + n - 1]
        out[i] = h
    return out


def window_hashes_np(tokens, n):
    tokens = np.asarray(tokens, dtype=np.uint64)
    m = tokens.shape[0] - n + 1
    if m <= 0:
        return np.empty(0, dtype=np.uint64)
    windows = np.lib.stride_tricks.sliding_window_view(tokens, n)
    h = np.zeros(m, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for k in range(n):
            h = h * _POLY + windows[:, k]
    return h


if NUMBA_ENABLED:
    hash_uniform = hash_uniform_jit
    bootstrap_means = bootstrap_means_jit
    ks_d = ks_d_jit
    window_hashes = window_hashes_jit
else:
    hash_uniform = hash_uniform_np
    bootstrap_means = bootstrap_means_np
    ks_d = ks_d_np
    window_hashes = window_hashes_np

__all__ = [
    "NUMBA_ENABLED",
    "bootstrap_means",
    "hash_uniform",
    "ks_d",
    "mix64",
    "stream_key",
    "window_hashes",
]
