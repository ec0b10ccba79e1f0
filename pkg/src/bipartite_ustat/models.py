"""Generative models for exchangeable bipartite networks and truth oracles.

A model is a graphon ``w`` on [0,1]^2 plus an emission law. Rows and
columns get i.i.d. uniform latents; entry (i, j) is Bernoulli or Poisson
with mean ``w(xi_i, eta_j)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from . import kernels as K
from . import rng
from .core import BipartiteMatrix
from .errors import SamplingError, ValidationError

EMISSIONS = ("bernoulli", "poisson")
_GRID = 256


# ---------------------------------------------------------------------------
# Marginals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepMarginal:
    """Piecewise-constant density on [0,1].

    ``values[k]`` applies on ``[breakpoints[k-1], breakpoints[k])`` with the
    outer edges at 0 and 1.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(bp) + 1:
            raise ValidationError(f"step marginal needs {len(bp) + 1} values, got {len(vals)}")
        edges = (0.0,) + bp + (1.0,)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValidationError(f"breakpoints must increase strictly inside (0,1): {bp}")
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValidationError("step values must be finite and nonnegative")

    @property
    def widths(self) -> np.ndarray:
        return np.diff((0.0,) + self.breakpoints + (1.0,))

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        return np.asarray(self.values)[idx]

    def moment(self, k: float) -> float:
        """Integral of the k-th power over [0,1]."""
        return float(np.dot(self.widths, np.asarray(self.values) ** k))

    @property
    def sup(self) -> float:
        return max(self.values)


@dataclass(frozen=True)
class PowerLawMarginal:
    """Density (alpha+1) x^alpha on [0,1]; alpha=0 is the flat density."""

    alpha: float

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValidationError(f"power-law exponent must be finite and >= 0, got {self.alpha}")

    @classmethod
    def from_second_moment(cls, F2: float) -> "PowerLawMarginal":
        """Exponent whose second moment (a+1)^2/(2a+1) equals ``F2`` (F2 >= 1)."""
        if not F2 >= 1:
            raise ValidationError(f"second moment of a density on [0,1] is >= 1, got {F2}")
        return cls((F2 - 1) + math.sqrt((F2 - 1) * F2))

    def __call__(self, x):
        return (self.alpha + 1) * np.power(x, self.alpha)

    def moment(self, k: float) -> float:
        return (self.alpha + 1) ** k / (k * self.alpha + 1)

    @property
    def sup(self) -> float:
        return self.alpha + 1


Marginal = StepMarginal | PowerLawMarginal
UNIFORM = PowerLawMarginal(0.0)


def marginal_from_json(doc) -> Marginal:
    if doc in (None, "uniform"):
        return UNIFORM
    kind = doc.get("type")
    if kind == "power":
        if "F2" in doc:
            return PowerLawMarginal.from_second_moment(float(doc["F2"]))
        return PowerLawMarginal(float(doc["alpha"]))
    if kind == "step":
        return StepMarginal(tuple(doc["breakpoints"]), tuple(doc["values"]))
    if kind == "uniform":
        return UNIFORM
    raise ValidationError(f"unknown marginal type {kind!r} (expected power, step or uniform)")


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeddParams:
    lam: float
    f: Marginal
    g: Marginal


@dataclass(frozen=True)
class LbmParams:
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    pi: tuple[tuple[float, ...], ...]

    @property
    def pi_array(self) -> np.ndarray:
        return np.array(self.pi, dtype=float)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A graphon, an emission law and a table of known truths.

    ``analytic`` maps kernel ids (expected kernel value) and statistic ids
    (``F2``, ``G2``, ``d``, ``lambda``) to exact values. ``structure`` keeps
    the BEDD or LBM parameters so exact oracles can use them.
    """

    graphon: Callable[[np.ndarray, np.ndarray], np.ndarray]
    emission: str
    description: str = ""
    analytic: Mapping[str, float] = field(default_factory=dict)
    structure: BeddParams | LbmParams | None = None
    validate: bool = True

    def __post_init__(self):
        if self.emission not in EMISSIONS:
            raise ValidationError(f"emission must be one of {EMISSIONS}, got {self.emission!r}")
        object.__setattr__(self, "analytic", MappingProxyType(dict(self.analytic)))
        if self.validate:
            grid = np.linspace(0.0, 1.0, _GRID)
            W = np.asarray(self.graphon(grid[:, None], grid[None, :]), dtype=float)
            if not np.all(np.isfinite(W)) or np.any(W < 0):
                raise ValidationError("graphon must be finite and nonnegative on [0,1]^2")
            if self.emission == "bernoulli" and W.max() > 1 + 1e-9:
                raise ValidationError(f"Bernoulli emission needs w <= 1, grid sup is {W.max():.6g}")

    def __repr__(self):
        return f"ModelSpec({self.description or 'custom'}, {self.emission})"


def _check_emission(emission):
    if emission not in EMISSIONS:
        raise ValidationError(f"emission must be one of {EMISSIONS}, got {emission!r}")


def bedd(lam: float, f: Marginal = UNIFORM, g: Marginal = UNIFORM, emission: str = "poisson",
         description: str | None = None) -> ModelSpec:
    """Product graphon ``lam * f(xi) * g(eta)``."""
    _check_emission(emission)
    if not (lam > 0 and math.isfinite(lam)):
        raise ValidationError(f"lambda must be positive, got {lam}")
    for name, marg in (("f", f), ("g", g)):
        total = marg.moment(1)
        if abs(total - 1) > 1e-9:
            raise ValidationError(f"marginal {name} integrates to {total:.12g}, not 1")
    sup = lam * f.sup * g.sup
    if emission == "bernoulli" and sup > 1 + 1e-12:
        raise ValidationError(f"Bernoulli emission needs w <= 1, but sup w = {sup:.6g}")
    F2, G2 = f.moment(2), g.moment(2)
    table = {
        "hD": lam, "hB": lam**2 * F2, "h1": lam**2 * F2, "hC": lam**2 * G2, "h2": lam**2,
        "hA2": lam**3 * F2 * G2,
        "F2": F2, "G2": G2, "d": 0.0, "lambda": lam,
    }
    if emission == "poisson":
        table.update(hA1=lam**3 * F2 * G2, hA=-(lam**3) * F2 * G2)
    else:
        table.update(hA1=0.0, hA=-2 * lam**3 * F2 * G2)

    def w(xi, eta):
        return lam * f(xi) * g(eta)

    return ModelSpec(w, emission, description or f"BEDD(lambda={lam:g})", table,
                     BeddParams(lam, f, g), validate=False)


def _prob_vector(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size < 1 or np.any(arr < 0) or abs(arr.sum() - 1) > 1e-12:
        raise ValidationError(f"{name} must be a probability vector, got {list(arr)} (sum {arr.sum():.12g})")
    return arr


def lbm_moments(alpha, beta, pi) -> dict[str, float]:
    """Block-model truths: lambda, marginals F2/G2, d and kernel expectations."""
    alpha, beta, pi = np.asarray(alpha, float), np.asarray(beta, float), np.asarray(pi, float)
    lam = float(alpha @ pi @ beta)
    wbar = pi / lam
    fk = wbar @ beta
    gl = alpha @ wbar
    F2 = float(alpha @ fk**2)
    G2 = float(beta @ gl**2)
    weights = np.outer(alpha, beta)
    d = float(np.sum(weights * (wbar - np.outer(fk, gl)) ** 2))
    ew2 = float(np.sum(weights * wbar**2))
    cross = float(np.sum(weights * wbar * np.outer(fk, gl)))
    return {
        "lambda": lam, "F2": F2, "G2": G2, "d": d,
        "hD": lam, "hB": lam**2 * F2, "h1": lam**2 * F2, "hC": lam**2 * G2, "h2": lam**2,
        "hA2": lam**3 * cross, "_Ew2": ew2,
    }


def lbm(alpha, beta, pi, emission: str = "bernoulli", description: str | None = None,
        extra: Mapping[str, float] | None = None) -> ModelSpec:
    """Latent block model with row groups ``alpha``, column groups ``beta``."""
    _check_emission(emission)
    a = _prob_vector(alpha, "alpha")
    b = _prob_vector(beta, "beta")
    P = np.asarray(pi, dtype=float)
    if P.shape != (a.size, b.size):
        raise ValidationError(f"pi must be {a.size}x{b.size}, got {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise ValidationError("pi entries must be finite and nonnegative")
    if emission == "bernoulli" and P.max() > 1:
        raise ValidationError(f"Bernoulli emission needs pi <= 1, got max {P.max():g}")
    row_cut = np.cumsum(a)[:-1]
    col_cut = np.cumsum(b)[:-1]

    def w(xi, eta):
        s = np.searchsorted(row_cut, xi, side="right")
        t = np.searchsorted(col_cut, eta, side="right")
        return P[s, t]

    table = {}
    if P.sum() > 0:
        mom = lbm_moments(a, b, P)
        lam = mom["lambda"]
        ew2 = mom.pop("_Ew2")
        table.update(mom)
        if emission == "poisson":
            table["hA1"] = lam**3 * ew2
            table["hA"] = lam**3 * ew2 - 2 * table["hA2"]
        else:
            table["hA1"] = 0.0
            table["hA"] = -2 * table["hA2"]
    if extra:
        table.update(extra)
    params = LbmParams(tuple(a), tuple(b), tuple(tuple(r) for r in P))
    return ModelSpec(w, emission, description or f"LBM({a.size}x{b.size})", table, params, validate=False)


def d_true(epsilon: float) -> float:
    """Distance from product form of the perturbed block model, as a function of epsilon."""
    if epsilon < 0:
        raise ValidationError(f"epsilon must be >= 0, got {epsilon}")
    e = float(epsilon)
    return 64 * e**2 * (5 + 2 * e) ** 2 / (9 + 4 * e) ** 4


_PI0 = np.array([[4.0, 2.0], [2.0, 1.0]])
_TAU = np.array([[2.0, 0.0], [0.0, 2.0]])
_LAM_II = 9.0 / 4.0


def named_model(which: str, epsilon: float = 0.0, F2: float = 3.0, G2: float = 2.0,
                lam: float = 1.0) -> ModelSpec:
    """The three reference simulation models.

    ``I``: Bernoulli two-by-two block model, all blocks 0.5 except 0.95 top-left.
    ``II``: Poisson block model drifting from product form as ``epsilon`` grows.
    ``III``: Poisson BEDD with power-law marginals of second moments F2, G2.
    """
    key = str(which).upper().replace("MODEL", "").strip()
    if key == "I":
        return lbm((0.5, 0.5), (0.5, 0.5), [[0.95, 0.5], [0.5, 0.5]], "bernoulli", "Model I")
    if key.startswith("II") and not key.startswith("III"):
        if not (epsilon >= 0 and math.isfinite(epsilon)):
            raise ValidationError(f"epsilon must be finite and >= 0, got {epsilon}")
        pi = _LAM_II / (_LAM_II + epsilon) * (_PI0 + epsilon * _TAU)
        return lbm((0.5, 0.5), (0.5, 0.5), pi, "poisson", f"Model II({epsilon:g})",
                   extra={"d": d_true(epsilon)})
    if key == "III":
        if not lam > 0:
            raise ValidationError(f"lambda must be positive, got {lam}")
        return bedd(lam, PowerLawMarginal.from_second_moment(F2), PowerLawMarginal.from_second_moment(G2),
                    "poisson", f"Model III(F2={F2:g}, G2={G2:g}, lambda={lam:g})")
    raise ValidationError(f"unknown reference model {which!r} (expected I, II or III)")


def model_from_json(doc) -> ModelSpec:
    """Model from ``{"type": "bedd"|"lbm"|"named", "emission": ..., ...}``."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc.get("type")
    try:
        if kind == "named":
            return named_model(doc["which"], epsilon=float(doc.get("epsilon", 0.0)),
                               F2=float(doc.get("F2", 3.0)), G2=float(doc.get("G2", 2.0)),
                               lam=float(doc.get("lambda", 1.0)))
        if kind == "bedd":
            return bedd(float(doc.get("lambda", 1.0)), marginal_from_json(doc.get("f")),
                        marginal_from_json(doc.get("g")), doc.get("emission", "poisson"))
        if kind == "lbm":
            return lbm(doc["alpha"], doc["beta"], doc["pi"], doc.get("emission", "bernoulli"))
    except KeyError as exc:
        raise ValidationError(f"model JSON missing field {exc}") from None
    raise ValidationError(f"unknown model type {kind!r} (expected bedd, lbm or named)")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleWithLatents:
    matrix: BipartiteMatrix
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        if self.xi.shape != (self.matrix.m,) or self.eta.shape != (self.matrix.n,):
            raise ValidationError("latent vector lengths must match the matrix dimensions")
        for arr in (self.xi, self.eta):
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ValidationError("latents must lie in [0,1]")


def _emit(model: ModelSpec, W: np.ndarray, seed: int, i, j) -> np.ndarray:
    if model.emission == "bernoulli":
        if np.any(W > 1 + 1e-12):
            raise SamplingError(f"Bernoulli mean {W.max():.6g} > 1 at a sampled point")
        return rng.bernoulli_field(W, seed, i, j)
    return rng.poisson_field(W, seed, i, j)


def sample(model: ModelSpec, m: int, n: int, seed: int) -> SampleWithLatents:
    """Draw an m x n network; entry (i, j) depends only on (seed, i, j).

    A smaller sample with the same seed is the leading sub-block of a
    larger one.
    """
    if m < 1 or n < 1:
        raise ValidationError(f"dimensions must be positive, got {m}x{n}")
    xi = rng.uniforms(seed, rng.ROW_LATENT, np.arange(m))
    eta = rng.uniforms(seed, rng.COL_LATENT, np.arange(n))
    W = np.asarray(model.graphon(xi[:, None], eta[None, :]), dtype=float)
    W = np.broadcast_to(W, (m, n))
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    Y = _emit(model, W, seed, ii, jj)
    return SampleWithLatents(BipartiteMatrix(Y), xi, eta)


def sample_matrix(model: ModelSpec, m: int, n: int, seed: int) -> np.ndarray:
    return sample(model, m, n, seed).matrix.values


# ---------------------------------------------------------------------------
# Truth oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Truth:
    value: float
    se: float
    method: str


def _blocks(model, seed, count, p, q, start=0, fixed_row=None, fixed_col=None):
    """``count`` independent p x q blocks; block b draws from counter range b."""
    b = np.arange(start, start + count)
    xi = rng.uniforms(seed, rng.ROW_LATENT, b[:, None], np.arange(p)[None, :])
    eta = rng.uniforms(seed, rng.COL_LATENT, b[:, None], np.arange(q)[None, :])
    if fixed_row is not None:
        xi[:, 0] = fixed_row
    if fixed_col is not None:
        eta[:, 0] = fixed_col
    W = np.asarray(model.graphon(xi[:, :, None], eta[:, None, :]), dtype=float)
    W = np.broadcast_to(W, (count, p, q))
    pos = np.arange(p * q).reshape(p, q)
    return _emit(model, W, seed, np.broadcast_to(b[:, None, None], W.shape), np.broadcast_to(pos, W.shape))


def true_expectation(model: ModelSpec, kernel, mc_budget: int = 10**6, seed: int = 20240601,
                     chunk: int = 1 << 17) -> Truth:
    """Expected kernel value: from the analytic table when known, else Monte Carlo."""
    h = K.resolve(kernel)
    if h.id in model.analytic:
        return Truth(float(model.analytic[h.id]), 0.0, "analytic")
    if mc_budget < 2:
        raise ValidationError("Monte Carlo budget must be at least 2")
    s = rng.derive_seed(seed, "expectation", h.id)
    total = 0.0
    total_sq = 0.0
    for start in range(0, mc_budget, chunk):
        cnt = min(chunk, mc_budget - start)
        vals = h.eval(_blocks(model, s, cnt, h.p, h.q, start))
        total += math.fsum(vals)
        total_sq += math.fsum(vals * vals)
    mean = total / mc_budget
    var = max(total_sq / mc_budget - mean * mean, 0.0) * mc_budget / (mc_budget - 1)
    return Truth(mean, math.sqrt(var / mc_budget), "monte_carlo")


def oracle_conditional_variance(model: ModelSpec, kernel, axis: str = "row", n_outer: int = 2000,
                                n_inner: int = 200, seed: int = 7) -> Truth:
    """Monte Carlo estimate of the variance of the kernel's one-row (or one-column) projection.

    For each outer draw the first row latent (or column latent) is held
    fixed while ``n_inner`` blocks are drawn around it. The between-draw
    variance of the inner means is corrected for inner noise.
    """
    if n_outer < 2 or n_inner < 2:
        raise ValidationError("n_outer and n_inner must both be at least 2")
    if axis not in ("row", "col"):
        raise ValidationError(f"axis must be 'row' or 'col', got {axis!r}")
    h = K.resolve(kernel)
    s = rng.derive_seed(seed, "conditional", h.id, axis)
    anchor = rng.uniforms(s, rng.ENTRY + 100, np.arange(n_outer))
    means = np.empty(n_outer)
    inner_var = np.empty(n_outer)
    per = max(1, (1 << 18) // n_inner)
    for o0 in range(0, n_outer, per):
        o1 = min(n_outer, o0 + per)
        fixed = np.repeat(anchor[o0:o1], n_inner)
        kw = {"fixed_row": fixed} if axis == "row" else {"fixed_col": fixed}
        vals = h.eval(_blocks(model, s, (o1 - o0) * n_inner, h.p, h.q, o0 * n_inner, **kw))
        vals = np.asarray(vals, dtype=float).reshape(o1 - o0, n_inner)
        means[o0:o1] = vals.mean(axis=1)
        inner_var[o0:o1] = vals.var(axis=1, ddof=1)
    centred = (means - means.mean()) ** 2 * n_outer / (n_outer - 1)
    contrib = centred - inner_var / n_inner
    return Truth(float(contrib.mean()), float(contrib.std(ddof=1) / math.sqrt(n_outer)), "monte_carlo")


# ---------------------------------------------------------------------------
# Exact oracles for structured models
# ---------------------------------------------------------------------------

def lbm_exact_expectation(model: ModelSpec, kernel) -> float:
    """Expected kernel value under a block model by summing over block labels.

    Exact for kernels that are polynomials of degree at most one in each
    entry (motif indicators, products of distinct entries), because entries
    are conditionally independent given the labels.
    """
    if not isinstance(model.structure, LbmParams):
        raise ValidationError("exact expectation needs a block-model structure")
    h = K.resolve(kernel)
    a = np.asarray(model.structure.alpha)
    b = np.asarray(model.structure.beta)
    P = model.structure.pi_array
    total = 0.0
    for rows in itertools.product(range(a.size), repeat=h.p):
        wr = np.prod(a[list(rows)])
        for cols in itertools.product(range(b.size), repeat=h.q):
            weight = wr * np.prod(b[list(cols)])
            if weight == 0:
                continue
            means = P[np.ix_(rows, cols)]
            total += weight * _multilinear_mean(h, means)
    return float(total)


def _multilinear_mean(h: K.Kernel, means: np.ndarray) -> float:
    # A kernel that is affine in each entry has expectation equal to its
    # value at the entry means when the entries are independent.
    return float(h.eval(means))


_PSI_ROW = {"hD": (1, "lam", 1), "h1": (2, "lam2", 2), "hB": (2, "lam2", 2),
            "hC": (1, "lam2G2", 1), "h2": (1, "lam2", 1)}
_PSI_COL = {"hD": (1, "lam", 1), "h1": (1, "lam2F2", 1), "hB": (1, "lam2F2", 1),
            "hC": (2, "lam2", 2), "h2": (1, "lam2", 1)}


def bedd_projection_covariances(model: ModelSpec, kernel_ids) -> tuple[np.ndarray, np.ndarray]:
    """Exact covariances of the one-row and one-column projections under BEDD.

    Each supported kernel's row projection is ``c * f(xi)**b``, so its
    covariances reduce to marginal moments.
    """
    if not isinstance(model.structure, BeddParams):
        raise ValidationError("projection covariances need a BEDD structure")
    lam, f, g = model.structure.lam, model.structure.f, model.structure.g
    consts = {"lam": lam, "lam2": lam**2, "lam2G2": lam**2 * g.moment(2), "lam2F2": lam**2 * f.moment(2)}

    def cov(table, marg):
        D = len(kernel_ids)
        out = np.empty((D, D))
        for a, ka in enumerate(kernel_ids):
            for b, kb in enumerate(kernel_ids):
                try:
                    _, ca, ea = table[ka]
                    _, cb, eb = table[kb]
                except KeyError as exc:
                    raise ValidationError(f"no closed-form projection for kernel {exc}") from None
                out[a, b] = consts[ca] * consts[cb] * (marg.moment(ea + eb) - marg.moment(ea) * marg.moment(eb))
        return out

    return cov(_PSI_ROW, f), cov(_PSI_COL, g)


def bedd_asymptotic_sigma(model: ModelSpec, kernel_ids, rho: float) -> np.ndarray:
    """Asymptotic covariance of sqrt(N) times the U-statistic vector under BEDD."""
    c10, c01 = bedd_projection_covariances(model, kernel_ids)
    sizes = [(K.builtin(k).p, K.builtin(k).q) for k in kernel_ids]
    p = np.array([s[0] for s in sizes], dtype=float)
    q = np.array([s[1] for s in sizes], dtype=float)
    return np.outer(p, p) / rho * c10 + np.outer(q, q) / (1 - rho) * c01
