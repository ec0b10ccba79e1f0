"""Counter-based random numbers keyed by (seed, stream, i, j, draw).

Every random quantity in a sampled network is a pure function of its
coordinates, so results do not depend on evaluation order or thread count.
The generator is Philox4x32-10, evaluated on whole numpy arrays of counters.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

# stream tags
ROW_LATENT = 1
COL_LATENT = 2
ENTRY = 3

_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def philox4x32(c0, c1, c2, c3, k0: int, k1: int, rounds: int = 10):
    """Philox4x32 bijection on broadcastable uint32 counter words.

    Returns the four output words as uint64 arrays holding 32-bit values.
    """
    x0, x1, x2, x3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in (c0, c1, c2, c3))
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for _ in range(rounds):
        p0 = x0 * _M0
        p1 = x2 * _M1
        hi0, lo0 = p0 >> _S32, p0 & _MASK
        hi1, lo1 = p1 >> _S32, p1 & _MASK
        x0, x1, x2, x3 = hi1 ^ x1 ^ np.uint64(k0), lo1, hi0 ^ x3 ^ np.uint64(k1), lo0
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return x0, x1, x2, x3


def _to_unit(a, b):
    # 53 random bits mapped into the open interval (0, 1)
    bits = ((a >> np.uint64(5)) << np.uint64(26)) | (b >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * _INV53


def uniform_pair(seed: int, stream: int, i, j, draw):
    """Two independent U(0,1) arrays for each (i, j, draw) coordinate."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    x0, x1, x2, x3 = philox4x32(stream, i, j, draw, seed & 0xFFFFFFFF, seed >> 32)
    return _to_unit(x0, x1), _to_unit(x2, x3)


def uniforms(seed: int, stream: int, i, j=0, draw=0) -> np.ndarray:
    return uniform_pair(seed, stream, i, j, draw)[0]


def derive_seed(base: int, *labels) -> int:
    """Mix a base seed with arbitrary labels into a new 64-bit seed."""
    text = repr((int(base),) + tuple(labels)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def bernoulli_field(p: np.ndarray, seed: int, i, j) -> np.ndarray:
    u = uniforms(seed, ENTRY, i, j, 0)
    return (u < p).astype(np.float64)


def _poisson_inversion(lam, u):
    k = np.zeros(lam.shape, dtype=np.float64)
    prob = np.exp(-lam)
    cdf = prob.copy()
    active = u > cdf
    it = 0
    while active.any() and it < 400:
        it += 1
        idx = np.nonzero(active)
        k[idx] += 1.0
        prob[idx] *= lam[idx] / k[idx]
        cdf[idx] += prob[idx]
        # stop once the remaining mass underflows; guards u rounding above cdf
        active = (u > cdf) & (prob > 0)
    return k


def _poisson_ptrs(lam, seed, i, j):
    # Transformed rejection with squeeze (Hoermann 1993); attempt t consumes
    # draw index t of the entry's substream.
    out = np.full(lam.shape, -1.0)
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    pending = np.arange(lam.size)
    ii = np.broadcast_to(i, lam.shape).ravel()
    jj = np.broadcast_to(j, lam.shape).ravel()
    lam_f, b_f, a_f, inv_f, vr_f, log_f = (x.ravel() for x in (lam, b, a, invalpha, vr, loglam))
    out_f = out.ravel()
    attempt = 0
    while pending.size:
        u, v = uniform_pair(seed, ENTRY, ii[pending], jj[pending], attempt)
        u = u - 0.5
        us = 0.5 - np.abs(u)
        lb, la = b_f[pending], a_f[pending]
        k = np.floor((2 * la / us + lb) * u + lam_f[pending] + 0.43)
        accept = (us >= 0.07) & (v <= vr_f[pending])
        maybe = ~accept & (k >= 0) & ~((us < 0.013) & (v > us))
        if maybe.any():
            kk = np.where(maybe, k, 0.0)
            lhs = np.log(v) + np.log(inv_f[pending]) - np.log(la / (us * us) + lb)
            lgam = np.array([math.lgamma(x + 1.0) for x in kk])
            rhs = -lam_f[pending] + kk * log_f[pending] - lgam
            accept |= maybe & (lhs <= rhs)
        out_f[pending[accept]] = k[accept]
        pending = pending[~accept]
        attempt += 1
    return out_f.reshape(lam.shape)


def poisson_field(lam: np.ndarray, seed: int, i, j, switch: float = 10.0) -> np.ndarray:
    """Poisson draws with means ``lam``; entry (i, j) uses its own substream.

    Means below ``switch`` use CDF inversion on one uniform, larger means
    use PTRS rejection.
    """
    lam = np.asarray(lam, dtype=np.float64)
    i = np.broadcast_to(i, lam.shape)
    j = np.broadcast_to(j, lam.shape)
    out = np.zeros(lam.shape, dtype=np.float64)
    small = lam < switch
    if small.any():
        u = uniforms(seed, ENTRY, i[small], j[small], 0)
        out[small] = _poisson_inversion(lam[small], u)
    big = ~small
    if big.any():
        out[big] = _poisson_ptrs(lam[big], seed, i[big], j[big])
    return out
