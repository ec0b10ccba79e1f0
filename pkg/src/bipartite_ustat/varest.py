"""Variance and covariance estimators for bipartite U-statistics.

The asymptotic variance of sqrt(N) * U combines the variance of the
kernel's one-row projection (v10) and one-column projection (v01):
``V = p^2/rho * v10 + q^2/(1-rho) * v01`` with ``rho`` the row share of N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels as K
from . import rng as rng_mod
from . import ustat as U
from .core import as_array, binom_exact, subset_array
from .errors import SizeError, ValidationError

DEGENERACY_RTOL = 1e-12
ALGO_A_EXHAUSTIVE_MAX_N = 24
ALGO_A_PAIR_BUDGET = 10**6
_ALGO_A_MAX_SETS = 20000


def resolve_rho(rho, m: int, n: int) -> float:
    """``"empirical"`` (or None) gives m/(m+n); a number is used as given."""
    if rho is None or rho == "empirical":
        return m / (m + n)
    value = float(rho)
    if not 0 < value < 1:
        raise ValidationError(f"rho must lie in (0,1), got {value}")
    return value


def combine(v10: float, v01: float, p: int, q: int, rho: float) -> float:
    return p * p / rho * v10 + q * q / (1 - rho) * v01


@dataclass(frozen=True)
class VarianceEstimate:
    v10: float
    v01: float
    V: float
    rho: float
    method: str
    value: float = math.nan
    m: int = 0
    n: int = 0
    p: int = 1
    q: int = 1
    degenerate: bool = False
    scale: float = 0.0

    @property
    def N(self) -> int:
        return self.m + self.n


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    kernel_ids: tuple[str, ...]
    sigma: np.ndarray
    rho: float
    values: np.ndarray
    c10: np.ndarray
    c01: np.ndarray
    m: int = 0
    n: int = 0
    metadata: Mapping[str, str] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.m + self.n


def conditional_means(base: U.UStatResult, m: int | None = None, n: int | None = None,
                      p: int | None = None, q: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Average kernel value over the blocks containing each row / each column."""
    for name, given in (("m", m), ("n", n), ("p", p), ("q", q)):
        if given is not None and given != getattr(base, name):
            raise ValidationError(f"{name}={given} does not match the U-statistic result ({getattr(base, name)})")
    mu = base.row_sums / (binom_exact(base.m - 1, base.p - 1) * binom_exact(base.n, base.q))
    nu = base.col_sums / (binom_exact(base.m, base.p) * binom_exact(base.n - 1, base.q - 1))
    return mu, nu


def v_hats(mu_hat, nu_hat) -> tuple[float, float]:
    """Unbiased sample variances of the row and column conditional means.

    Equal to the average of half squared differences over all pairs.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    nu_hat = np.asarray(nu_hat, dtype=float)
    if mu_hat.size < 2 or nu_hat.size < 2:
        raise SizeError("need at least two rows and two columns to estimate a variance")
    return float(np.var(mu_hat, ddof=1)), float(np.var(nu_hat, ddof=1))


def is_degenerate(V: float, scale: float) -> bool:
    return not V > DEGENERACY_RTOL * scale * scale


def _direct(Y, h, fast, force, threads):
    base = U.u_statistic(Y, h, fast=fast, force=force, threads=threads)
    mu, nu = conditional_means(base)
    v10, v01 = v_hats(mu, nu)
    scale = max(abs(base.value), float(np.max(np.abs(mu - base.value))), float(np.max(np.abs(nu - base.value))))
    return base.value, v10, v01, scale


def _loo_vectors(Y, h, fast, force, threads):
    if fast and h.fast_path in ("h1", "hC", "hD", "h2") and h.id in U.FAST_IDS:
        value = U.u_fast(Y, h.id)
        return value, U.u_fast_leave_one_out(Y, h.id, "row"), U.u_fast_leave_one_out(Y, h.id, "col")
    base = U.u_statistic(Y, h, fast=fast, force=force, threads=threads)
    return base.value, U.u_leave_one_out_all(base, "row"), U.u_leave_one_out_all(base, "col")


def _leave_one_out(Y, h, fast, force, threads):
    m, n = Y.shape
    value, loo_r, loo_c = _loo_vectors(Y, h, fast, force, threads)
    dr = value - loo_r
    dc = value - loo_c
    p, q = h.p, h.q
    v10 = (m - p) ** 2 / (p * p * (m - 1)) * math.fsum(dr * dr)
    v01 = (n - q) ** 2 / (q * q * (n - 1)) * math.fsum(dc * dc)
    # U - U(-i) = p/(m-p) * (mu_i - U), so this is the same scale as the direct form
    scale = max(abs(value), float(np.max(np.abs(dr))) * (m - p) / p, float(np.max(np.abs(dc))) * (n - q) / q)
    return value, v10, v01, scale


def variance_estimate(Y, h, rho="empirical", method: str = "direct", fast: bool = True,
                      force: bool = False, threads: int | None = None) -> VarianceEstimate:
    """Estimate v10, v01 and V for the U-statistic of ``h`` on ``Y``.

    ``method="direct"`` uses the conditional means; ``"leave_one_out"``
    combines U-statistics of the matrix with one row or column removed.
    The two are algebraically identical.
    """
    if method in ("loo", "leave-one-out"):
        method = "leave_one_out"
    if method in ("algoA", "algorithm_A", "A"):
        return algorithm_A_variance(Y, h, rho=rho)
    if method not in ("direct", "leave_one_out"):
        raise ValidationError(f"unknown method {method!r} (expected direct, leave_one_out or algorithm_A)")
    h = K.resolve(h)
    arr = as_array(Y)
    m, n = arr.shape
    if m <= h.p or n <= h.q:
        raise SizeError(f"variance estimation for a {h.p}x{h.q} kernel needs more than {h.p} rows "
                        f"and {h.q} columns, got {m}x{n}")
    r = resolve_rho(rho, m, n)
    runner = _direct if method == "direct" else _leave_one_out
    value, v10, v01, scale = runner(arr, h, fast, force, threads)
    V = combine(v10, v01, h.p, h.q, r)
    return VarianceEstimate(v10, v01, V, r, method, value, m, n, h.p, h.q, is_degenerate(V, scale), scale)


def covariance_estimate(Y, kernels: Sequence, rho="empirical", fast: bool = True,
                        force: bool = False, threads: int | None = None) -> CovarianceEstimate:
    """Joint asymptotic covariance of several U-statistics on the same matrix.

    Entry (k, l) is ``p_k p_l/rho * c10 + q_k q_l/(1-rho) * c01`` where c10
    and c01 are sample covariances of the kernels' row and column
    conditional means. The diagonal reproduces ``variance_estimate``.
    """
    hs = [K.resolve(k) for k in kernels]
    if not hs:
        raise ValidationError("need at least one kernel")
    arr = as_array(Y)
    m, n = arr.shape
    for h in hs:
        if m <= h.p or n <= h.q:
            raise SizeError(f"kernel {h.id} ({h.p}x{h.q}) is too large for a {m}x{n} matrix")
    r = resolve_rho(rho, m, n)
    mus, nus, values = [], [], []
    for h in hs:
        base = U.u_statistic(arr, h, fast=fast, force=force, threads=threads)
        mu, nu = conditional_means(base)
        mus.append(mu)
        nus.append(nu)
        values.append(base.value)
    c10 = np.atleast_2d(np.cov(np.vstack(mus), ddof=1))
    c01 = np.atleast_2d(np.cov(np.vstack(nus), ddof=1))
    c10 = (c10 + c10.T) / 2
    c01 = (c01 + c01.T) / 2
    p = np.array([h.p for h in hs], dtype=float)
    q = np.array([h.q for h in hs], dtype=float)
    sigma = np.outer(p, p) / r * c10 + np.outer(q, q) / (1 - r) * c01
    sizes = {(h.p, h.q) for h in hs}
    meta = {"cross_size_weighting": "per-kernel p_k*p_l and q_k*q_l" if len(sizes) > 1 else "common size"}
    return CovarianceEstimate(tuple(h.id for h in hs), sigma, r, np.array(values), c10, c01, m, n, meta)


# ---------------------------------------------------------------------------
# Empirical-covariance baseline
# ---------------------------------------------------------------------------

def _overlap_counts(sets: np.ndarray, dim: int) -> np.ndarray:
    ind = np.zeros((sets.shape[0], dim))
    np.put_along_axis(ind, sets, 1.0, axis=1)
    return ind @ ind.T


def _gamma_exhaustive(X, row_ov, col_ov, shared_rows, shared_cols):
    # mean of X_a X_b over ordered pairs with the given overlaps, minus the
    # same mean over fully disjoint pairs
    def pair_mean(Mr, Mc):
        count = Mr.sum() * Mc.sum()
        return float(np.sum(X * (Mr @ X @ Mc.T))) / count

    Mr0 = (row_ov == 0).astype(float)
    Mc0 = (col_ov == 0).astype(float)
    Mr = (row_ov == shared_rows).astype(float)
    Mc = (col_ov == shared_cols).astype(float)
    return pair_mean(Mr, Mc) - pair_mean(Mr0, Mc0)


def _draw_pairs(gen, dim, k, shared, count):
    # rows for block a and block b, sharing exactly ``shared`` indices
    keys = gen.random((count, dim))
    order = np.argsort(keys, axis=1)[:, : 2 * k - shared]
    a = order[:, :k]
    b = np.concatenate([order[:, :shared], order[:, k:2 * k - shared]], axis=1)
    return a, b


def _gamma_random(Y, h, gen, shared_rows, shared_cols, budget, chunk=1 << 14):
    m, n = Y.shape
    prod_shared = []
    prod_disjoint = []
    for start in range(0, budget, chunk):
        cnt = min(chunk, budget - start)
        for shared, out in (((shared_rows, shared_cols), prod_shared), ((0, 0), prod_disjoint)):
            ra, rb = _draw_pairs(gen, m, h.p, shared[0], cnt)
            ca, cb = _draw_pairs(gen, n, h.q, shared[1], cnt)
            xa = h.eval(Y[ra[:, :, None], ca[:, None, :]])
            xb = h.eval(Y[rb[:, :, None], cb[:, None, :]])
            out.append(math.fsum(xa * xb))
    return (math.fsum(prod_shared) - math.fsum(prod_disjoint)) / budget


def algorithm_A_variance(Y, h, rho="empirical", exhaustive_max_N: int = ALGO_A_EXHAUSTIVE_MAX_N,
                         budget: int = ALGO_A_PAIR_BUDGET, seed: int = 0) -> VarianceEstimate:
    """Variance from empirical covariances between kernel terms.

    gamma10 is the mean product of kernel values over block pairs sharing
    exactly one row and no column, minus the mean product over fully
    disjoint pairs; gamma01 likewise for one shared column. Both are unbiased
    for the projection variances, but the estimate can be negative.

    Exhaustive pairing is used up to ``exhaustive_max_N``; above it a seeded
    random sample of ``budget`` pairs per mean is drawn.
    """
    h = K.resolve(h)
    arr = as_array(Y)
    m, n = arr.shape
    if m < 2 * h.p or n < 2 * h.q:
        raise SizeError(f"empirical covariances for a {h.p}x{h.q} kernel need at least "
                        f"{2 * h.p}x{2 * h.q} (disjoint block pairs), got {m}x{n}")
    r = resolve_rho(rho, m, n)
    n_rows, n_cols = binom_exact(m, h.p), binom_exact(n, h.q)
    if m + n <= exhaustive_max_N and max(n_rows, n_cols) <= _ALGO_A_MAX_SETS:
        rows = subset_array(m, h.p)
        cols = subset_array(n, h.q)
        X = np.asarray(h.eval(arr[rows[:, None, :, None], cols[None, :, None, :]]), dtype=float)
        row_ov = _overlap_counts(rows, m)
        col_ov = _overlap_counts(cols, n)
        g10 = _gamma_exhaustive(X, row_ov, col_ov, 1, 0)
        g01 = _gamma_exhaustive(X, row_ov, col_ov, 0, 1)
        value = float(X.mean())
    else:
        key = rng_mod.derive_seed(seed, "algorithm_A", h.id, m, n)
        gen = np.random.Generator(np.random.Philox(key=key))
        g10 = _gamma_random(arr, h, gen, 1, 0, budget)
        g01 = _gamma_random(arr, h, gen, 0, 1, budget)
        value = U.u_statistic(arr, h).value
    g10, g01 = float(g10), float(g01)
    V = combine(g10, g01, h.p, h.q, r)
    scale = abs(value)
    return VarianceEstimate(g10, g01, V, r, "algorithm_A", value, m, n, h.p, h.q,
                            is_degenerate(V, scale), scale)
