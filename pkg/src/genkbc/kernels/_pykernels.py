"""Pure-numpy kernels: the fallback backend.

Implements the same direct (quadratic) circular correlation /
convolution semantics as the compiled extension, vectorized through a
cached gather-index table per dimension.
"""

from __future__ import annotations

import numpy as np

_CORR_IDX: dict[int, np.ndarray] = {}
_CONV_IDX: dict[int, np.ndarray] = {}


def _as_vec(x, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must be non-empty")
    return arr


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    av, bv = _as_vec(a, "a"), _as_vec(b, "b")
    if av.shape[0] != bv.shape[0]:
        raise ValueError(f"length mismatch: {av.shape[0]} vs {bv.shape[0]}")
    return av, bv


def _corr_idx(d: int) -> np.ndarray:
    idx = _CORR_IDX.get(d)
    if idx is None:
        k = np.arange(d)
        idx = (k[:, None] + k[None, :]) % d  # idx[k, i] = (k + i) mod d
        _CORR_IDX[d] = idx
    return idx


def _conv_idx(d: int) -> np.ndarray:
    idx = _CONV_IDX.get(d)
    if idx is None:
        k = np.arange(d)
        idx = (k[:, None] - k[None, :]) % d  # idx[k, i] = (k - i) mod d
        _CONV_IDX[d] = idx
    return idx


def circular_correlation(a, b) -> np.ndarray:
    """out[k] = sum_i a[i] * b[(i + k) mod d]."""
    av, bv = _check_pair(a, b)
    return bv[_corr_idx(av.shape[0])] @ av


def circular_convolution(a, b) -> np.ndarray:
    """out[k] = sum_i a[i] * b[(k - i) mod d]."""
    av, bv = _check_pair(a, b)
    return bv[_conv_idx(av.shape[0])] @ av


def score_and_grads(h_r, h_s, h_t) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Triple score f = h_r . (h_s o h_t) and its gradients.

    Returns (f, df/dh_r, df/dh_s, df/dh_t) where
        df/dh_r = h_s o h_t
        df/dh_s = h_r o h_t
        df/dh_t = h_s * h_r   (circular convolution)
    """
    rv, sv = _check_pair(h_r, h_s)
    tv = _as_vec(h_t, "h_t")
    if tv.shape[0] != rv.shape[0]:
        raise ValueError(f"length mismatch: {rv.shape[0]} vs {tv.shape[0]}")
    g_r = circular_correlation(sv, tv)
    f = float(rv @ g_r)
    g_s = circular_correlation(rv, tv)
    g_t = circular_convolution(sv, rv)
    return f, g_r, g_s, g_t


def fft_circular_correlation(a, b) -> np.ndarray:
    """Transform-based O(d log d) path; must agree with the direct one."""
    av, bv = _check_pair(a, b)
    return np.fft.ifft(np.conj(np.fft.fft(av)) * np.fft.fft(bv)).real


def fft_circular_convolution(a, b) -> np.ndarray:
    av, bv = _check_pair(a, b)
    return np.fft.ifft(np.fft.fft(av) * np.fft.fft(bv)).real
