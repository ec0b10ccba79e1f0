"""Studentized statistics, confidence intervals and delta-method estimates."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import Callable, Mapping

import numpy as np

from . import kernels as K
from . import varest
from .core import as_matrix
from .ustat import u_statistic
from .errors import DegeneracyError, DomainError, NumericError, SizeError, ValidationError

_STD_NORMAL = NormalDist()
SIDES = ("two-sided", "greater", "less")


def normal_cdf(x: float) -> float:
    return _STD_NORMAL.cdf(x)


def normal_quantile(p: float) -> float:
    if not 0 < p < 1:
        raise ValidationError(f"quantile level must lie in (0,1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def p_value(z: float, sided: str = "two-sided") -> float:
    if sided == "two-sided":
        return min(1.0, math.erfc(abs(z) / math.sqrt(2)))
    if sided == "greater":
        return 0.5 * math.erfc(z / math.sqrt(2))
    if sided == "less":
        return 0.5 * math.erfc(-z / math.sqrt(2))
    raise ValidationError(f"sided must be one of {SIDES}, got {sided!r}")


def confidence_interval(estimate: float, V: float, N: int, alpha: float = 0.05) -> tuple[float, float]:
    """Interval ``estimate +- z_{1-alpha/2} sqrt(V/N)``; zero width when V is 0."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}")
    if N < 1:
        raise ValidationError(f"N must be positive, got {N}")
    if V < 0 or not math.isfinite(V):
        raise ValidationError(f"variance must be finite and nonnegative, got {V}")
    half = normal_quantile(1 - alpha / 2) * math.sqrt(V / N)
    return estimate - half, estimate + half


@dataclass(frozen=True)
class EstimateReport:
    statistic_id: str
    estimate: float
    variance: float
    N: int
    ci: tuple[float, float]
    alpha: float = 0.05
    z: float | None = None
    p_value: float | None = None
    null_value: float | None = None
    degenerate: bool = False
    warnings: tuple[str, ...] = ()
    metadata: Mapping[str, object] = field(default_factory=dict)

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.N)

    def covers(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci"] = list(self.ci)
        out["warnings"] = list(self.warnings)
        out["metadata"] = dict(self.metadata)
        return out


def build_report(statistic_id, estimate, variance, N, alpha, null_value, degenerate, sided="two-sided",
            notes=(), metadata=None) -> EstimateReport:
    variance = max(float(variance), 0.0) if degenerate else float(variance)
    ci = confidence_interval(estimate, variance, N, alpha)
    z = p = None
    if null_value is not None and not degenerate:
        z = math.sqrt(N / variance) * (estimate - null_value)
        p = p_value(z, sided)
    if degenerate:
        notes = tuple(notes) + ("estimated asymptotic variance is zero; interval has zero width",)
    return EstimateReport(statistic_id, float(estimate), variance, N, ci, alpha, z, p, null_value,
                          degenerate, tuple(notes), dict(metadata or {}))


def studentized(Y, h, null_value: float, rho="empirical", alpha: float = 0.05,
                method: str = "direct", sided: str = "two-sided") -> EstimateReport:
    """z = sqrt(N / V) (U - null_value) with the plug-in variance estimate."""
    h = K.resolve(h)
    est = varest.variance_estimate(Y, h, rho=rho, method=method)
    if est.degenerate:
        raise DegeneracyError(
            f"variance estimate for kernel {h.id} is degenerate (V={est.V:.3g}); "
            "studentizing is meaningless, try a different kernel or statistic"
        )
    return build_report(h.id, est.value, est.V, est.N, alpha, null_value, False, sided,
                   metadata={"kernel": h.id, "rho": est.rho, "method": est.method})


# ---------------------------------------------------------------------------
# Delta method
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSpec:
    kernel_ids: tuple
    g: Callable[[np.ndarray], float]
    grad_g: Callable[[np.ndarray], np.ndarray]
    statistic_id: str = "delta"


def kappa(u):
    return u[0] / u[1]


def grad_kappa(u):
    return np.array([1.0 / u[1], -u[0] / u[1] ** 2])


def t_stat(u):
    A, B, C, D = u
    return A / D**3 + B * C / D**4


def grad_t(u):
    A, B, C, D = u
    return np.array([1.0 / D**3, C / D**4, B / D**4, -3.0 * A / D**4 - 4.0 * B * C / D**5])


def _delta(cov: varest.CovarianceEstimate, spec: DeltaSpec):
    u = cov.values
    estimate = float(spec.g(u))
    grad = np.asarray(spec.grad_g(u), dtype=float)
    variance = float(grad @ cov.sigma @ grad)
    scale = float(np.sum(np.abs(grad) * np.maximum(np.abs(u), np.sqrt(np.clip(np.diag(cov.sigma), 0, None)))))
    degenerate = varest.is_degenerate(variance, scale)
    return estimate, variance, degenerate


def delta_estimate(Y, spec: DeltaSpec, rho="empirical", alpha: float = 0.05, null_value: float | None = None,
                   sided: str = "two-sided", strict: bool = True, notes=()) -> EstimateReport:
    """Plug-in estimate g(U_1..U_D) with variance grad' Sigma grad.

    With ``strict`` a degenerate variance raises; otherwise the report is
    returned with its degenerate flag set.
    """
    cov = varest.covariance_estimate(Y, list(spec.kernel_ids), rho=rho)
    estimate, variance, degenerate = _delta(cov, spec)
    if not math.isfinite(estimate):
        raise NumericError(f"{spec.statistic_id} is not finite at the observed U-statistics")
    if degenerate and strict:
        raise DegeneracyError(
            f"delta-method variance for {spec.statistic_id} is degenerate ({variance:.3g}); "
            "the statistic carries no first-order fluctuation on this input"
        )
    meta = {"kernels": list(cov.kernel_ids), "rho": cov.rho, "u": [float(x) for x in cov.values]}
    meta.update(cov.metadata)
    return build_report(spec.statistic_id, estimate, variance, cov.N, alpha, null_value, degenerate, sided,
                   notes, meta)


F2_SPEC = DeltaSpec(("h1", "h2"), kappa, grad_kappa, "F2")
G2_SPEC = DeltaSpec(("hC", "h2"), kappa, grad_kappa, "G2")
D_SPEC = DeltaSpec(("hA", "hB", "hC", "hD"), t_stat, grad_t, "d")


def f2_report(Y, axis: str = "row", rho="empirical", alpha: float = 0.05, null_value: float | None = None,
              strict: bool = False) -> EstimateReport:
    """Ratio estimate of the second moment of the row (or column) degree profile."""
    if axis not in ("row", "col"):
        raise ValidationError(f"axis must be 'row' or 'col', got {axis!r}")
    Ym = as_matrix(Y)
    if Ym.m < 2 or Ym.n < 2:
        raise SizeError("F2/G2 need at least 2 rows and 2 columns")
    spec = F2_SPEC if axis == "row" else G2_SPEC
    if not u_statistic(Ym, "h2").value > 0:
        raise NumericError(f"{spec.statistic_id} is undefined: the h2 U-statistic is not positive (empty network?)")
    return delta_estimate(Ym, spec, rho, alpha, null_value, strict=strict)


def d_report(Y, rho="empirical", alpha: float = 0.05, null_value: float | None = None,
             strict: bool = False) -> EstimateReport:
    """Estimate of the distance between the normalized graphon and its product form."""
    Ym = as_matrix(Y)
    if not u_statistic(Ym, "hD").value > 0:
        raise NumericError("d is undefined: the network has no positive entries")
    notes = ()
    if Ym.is_binary:
        msg = ("binary input: the hA factorial-moment term targets count (Poisson) data, "
               "so d is not estimated consistently here")
        warnings.warn(msg, stacklevel=2)
        notes = (msg,)
    return delta_estimate(Ym, D_SPEC, rho, alpha, null_value, strict=strict, notes=notes)


MOTIF_KERNELS = {6: "h6", 14: "h14"}


def motif_report(Y, motif: int, null_value: float | None = None, rho="empirical", alpha: float = 0.05,
                 force: bool = False) -> EstimateReport:
    """Frequency of a bipartite motif with its variance and interval."""
    try:
        kid = MOTIF_KERNELS[int(str(motif).replace("motif", ""))]
    except (KeyError, ValueError):
        raise ValidationError(f"unsupported motif {motif!r} (expected 6 or 14)") from None
    Ym = as_matrix(Y)
    if not Ym.is_binary:
        raise DomainError("motif frequencies need binary (0/1) data; the matrix has other values")
    est = varest.variance_estimate(Ym, kid, rho=rho, force=force)
    return build_report(f"motif{kid[1:]}", est.value, est.V, est.N, alpha, null_value, est.degenerate,
                   metadata={"kernel": kid, "rho": est.rho})


STATISTICS = ("motif6", "motif14", "f2", "g2", "d")


def statistic_report(Y, statistic: str, rho="empirical", alpha: float = 0.05,
                     null_value: float | None = None) -> EstimateReport:
    if statistic == "f2":
        return f2_report(Y, "row", rho, alpha, null_value)
    if statistic == "g2":
        return f2_report(Y, "col", rho, alpha, null_value)
    if statistic == "d":
        return d_report(Y, rho, alpha, null_value)
    if statistic in ("motif6", "motif14"):
        return motif_report(Y, int(statistic[5:]), null_value, rho, alpha)
    raise ValidationError(f"unknown statistic {statistic!r} (expected one of {', '.join(STATISTICS)})")


def compare_networks(YA, YB, statistic: str, rho="empirical", alpha: float = 0.05,
                     sided: str = "two-sided") -> EstimateReport:
    """Test equality of a statistic between two independent networks.

    The squared standard error of the difference is V_A/N_A + V_B/N_B.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ra = statistic_report(YA, statistic, rho, alpha)
        rb = statistic_report(YB, statistic, rho, alpha)
    for label, r in (("A", ra), ("B", rb)):
        if r.degenerate:
            raise DegeneracyError(f"network {label}: variance of {statistic} is degenerate; cannot compare")
    delta = ra.estimate - rb.estimate
    se2 = ra.variance / ra.N + rb.variance / rb.N
    se = math.sqrt(se2)
    z = delta / se
    half = normal_quantile(1 - alpha / 2) * se
    N = min(ra.N, rb.N)
    meta = {
        "statistic": statistic, "estimate_a": ra.estimate, "estimate_b": rb.estimate,
        "N_a": ra.N, "N_b": rb.N, "variance_a": ra.variance, "variance_b": rb.variance,
        "scaling": "se^2 = V_a/N_a + V_b/N_b" + ("" if ra.N == rb.N else " (unequal sizes)"),
        "assumption": "networks are independent",
    }
    return EstimateReport(f"{statistic}_diff", delta, se2 * N, N, (delta - half, delta + half), alpha,
                          z, p_value(z, sided), 0.0, False, tuple(ra.warnings) + tuple(rb.warnings), meta)
