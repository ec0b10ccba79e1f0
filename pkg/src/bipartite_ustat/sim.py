"""Simulation harness: Q-Q samples, coverage tables and timing benchmarks.

Every replicate is seeded from (seed, experiment, cell, replicate), so the
output files do not depend on how replicates are scheduled across threads.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import inference as inf
from . import kernels as K
from . import models as M
from . import rng
from . import varest
from .errors import UStatError, ValidationError
from .ustat import default_threads

EXPERIMENTS = ("qq", "coverage", "bench")
ALGORITHMS = ("A", "B", "C")
DEFAULT_CAPS = {"A": 24}
_STAT_TRUTH_KEYS = {"f2": "F2", "g2": "G2", "d": "d"}
_MOTIFS = {"motif6": "h6", "motif14": "h14"}


@dataclass
class ExperimentConfig:
    """Parameters of one simulation study.

    ``model`` is a model JSON document (see ``models.model_from_json``);
    when ``epsilon_list`` is given each value is substituted as the model's
    ``epsilon``. ``alpha`` is the nominal coverage level of the intervals.
    ``mode="gaussian"`` replaces sampled networks by exact normal draws
    around the truth, which checks the harness itself.
    """

    experiment: str
    model: dict
    statistic: str = "f2"
    N_list: list = field(default_factory=lambda: [128])
    rho_list: list = field(default_factory=lambda: [0.5])
    epsilon_list: list | None = None
    K: int = 200
    seed: int = 2024
    alpha: float = 0.95
    output_dir: str = "sim_out"
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    caps: dict = field(default_factory=lambda: dict(DEFAULT_CAPS))
    mode: str = "model"
    rho_policy: str = "empirical"
    threads: int | None = None
    warmup: int = 3
    mc_budget: int = 10**6

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if int(self.K) < 1:
            raise ValidationError(f"K must be >= 1, got {self.K}")
        self.K = int(self.K)
        self.N_list = [int(x) for x in self.N_list]
        self.rho_list = [float(x) for x in self.rho_list]
        if any(not 0 < r < 1 for r in self.rho_list):
            raise ValidationError(f"every rho must lie in (0,1), got {self.rho_list}")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.mode not in ("model", "gaussian"):
            raise ValidationError(f"mode must be 'model' or 'gaussian', got {self.mode!r}")
        if self.experiment == "bench":
            bad = set(self.algorithms) - set(ALGORITHMS)
            if bad:
                raise ValidationError(f"unknown algorithms {sorted(bad)}; choose from {ALGORITHMS}")
        for N in self.N_list:
            for rho in self.rho_list:
                m, n = split_size(N, rho)
                if m < 3 or n < 3:
                    raise ValidationError(f"N={N}, rho={rho} gives a {m}x{n} network, too small")

    @classmethod
    def from_json(cls, doc) -> "ExperimentConfig":
        if isinstance(doc, (str, Path)) and not str(doc).lstrip().startswith("{"):
            doc = Path(doc).read_text()
        if isinstance(doc, str):
            doc = json.loads(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in doc or "model" not in doc:
            raise ValidationError("config needs 'experiment' and 'model'")
        return cls(**doc)

    def params(self) -> list:
        return list(self.epsilon_list) if self.epsilon_list else [None]

    def model_for(self, param) -> M.ModelSpec:
        doc = dict(self.model)
        if param is not None:
            doc["epsilon"] = param
        return M.model_from_json(doc)


@dataclass(frozen=True)
class CoverageRow:
    N: int
    rho: float
    param: float | None
    covered_count: int
    K: int
    coverage: float
    band_lo: float
    band_hi: float
    truth: float
    truth_se: float
    degenerate_count: int


def split_size(N: int, rho: float) -> tuple[int, int]:
    m = int(math.floor(rho * N))
    return m, N - m


def binomial_band(K: int, alpha: float = 0.95) -> tuple[float, float]:
    """Normal-approximation 95% band for a binomial frequency with success rate alpha."""
    if K < 1:
        raise ValidationError(f"K must be >= 1, got {K}")
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}")
    half = inf.normal_quantile(0.975) * math.sqrt(alpha * (1 - alpha) / K)
    return alpha - half, alpha + half


def cell_name(N, rho, param) -> str:
    name = f"N{N}_rho{rho:g}"
    if param is not None:
        name += f"_eps{param:g}"
    return name


def replicate_seed(seed: int, experiment: str, N, rho, param, replicate: int) -> int:
    return rng.derive_seed(seed, experiment, N, float(rho), param, replicate)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _map(func, items, threads):
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------------------
# Per-replicate statistic evaluation
# ---------------------------------------------------------------------------

def truth_for(model: M.ModelSpec, statistic: str, mc_budget: int = 10**6, seed: int = 0) -> tuple[float, float]:
    """True value of a statistic under a model and its Monte Carlo standard error."""
    key = _STAT_TRUTH_KEYS.get(statistic)
    if key is not None:
        if key not in model.analytic:
            raise ValidationError(f"model {model.description} has no known value for {statistic}")
        return float(model.analytic[key]), 0.0
    kid = _MOTIFS.get(statistic, statistic)
    try:
        K.resolve(kid)
    except UStatError:
        raise ValidationError(f"no truth available for statistic {statistic!r}") from None
    t = M.true_expectation(model, kid, mc_budget=mc_budget, seed=seed)
    return t.value, t.se


def evaluate_statistic(Y, statistic: str, rho, level: float, truth: float) -> inf.EstimateReport:
    """Estimate, variance and interval for one replicate (degenerate replicates flagged)."""
    alpha = 1 - level
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if statistic in _STAT_TRUTH_KEYS or statistic in _MOTIFS:
            return inf.statistic_report(Y, statistic, rho, alpha, truth)
        est = varest.variance_estimate(Y, statistic, rho=rho)
        return inf.build_report(statistic, est.value, est.V, est.N, alpha, truth, est.degenerate)


def _gaussian_report(seed, N, truth, level):
    # exact normal estimator with unit asymptotic variance
    u = float(rng.uniforms(seed, rng.ENTRY, 0))
    est = truth + inf.normal_quantile(u) / math.sqrt(N)
    return inf.build_report("gaussian", est, 1.0, N, 1 - level, truth, False)


def _replicate(config, model, truth, N, rho, param, k):
    s = replicate_seed(config.seed, config.experiment, N, rho, param, k)
    if config.mode == "gaussian":
        return _gaussian_report(s, N, truth, config.alpha)
    m, n = split_size(N, rho)
    Y = M.sample_matrix(model, m, n, s)
    policy = rho if config.rho_policy == "fixed" else "empirical"
    try:
        return evaluate_statistic(Y, config.statistic, policy, config.alpha, truth)
    except UStatError:
        return None


def _cells(config):
    for param in config.params():
        model = None if config.mode == "gaussian" else config.model_for(param)
        for N in config.N_list:
            for rho in config.rho_list:
                yield param, model, N, rho


def _cell_truth(config, model):
    if config.mode == "gaussian":
        return 0.0, 0.0
    return truth_for(model, config.statistic, config.mc_budget, config.seed)


def _summary(config, out: Path, extra: dict) -> dict:
    import numpy
    doc = {
        "experiment": config.experiment,
        # run-location settings are left out so outputs compare byte-for-byte
        "config": {k: v for k, v in asdict(config).items() if k not in ("output_dir", "threads")},
        "versions": {"bipartite_ustat": __version__, "numpy": numpy.__version__,
                     "python": platform.python_version()},
    }
    doc.update(extra)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return doc


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def run_qq(config: ExperimentConfig) -> dict:
    """Studentized values per cell, sorted, paired with normal quantiles.

    Writes ``qq_<cell>.csv`` (replicate, z, theoretical_q); degenerate
    replicates appear as NaN rows at the end and are counted in the summary.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    degenerate = {}
    for param, model, N, rho in _cells(config):
        truth, _ = _cell_truth(config, model)
        reports = _map(lambda k: _replicate(config, model, truth, N, rho, param, k),
                       list(range(config.K)), config.threads)
        z = np.array([r.z if (r is not None and r.z is not None) else math.nan for r in reports])
        finite = np.isfinite(z)
        order = np.concatenate([np.nonzero(finite)[0][np.argsort(z[finite], kind="stable")],
                                np.nonzero(~finite)[0]])
        kv = int(finite.sum())
        theo = [inf.normal_quantile((i + 0.5) / kv) if i < kv else math.nan for i in range(config.K)]
        rows = [(int(k), float(z[k]), float(theo[i])) for i, k in enumerate(order)]
        name = cell_name(N, rho, param)
        _write_csv(out / f"qq_{name}.csv", ("replicate", "z", "theoretical_q"), rows)
        results[name] = z[order][:kv]
        degenerate[name] = config.K - kv
    _summary(config, out, {"degenerate_counts": degenerate, "seed": config.seed})
    return results


def run_coverage(config: ExperimentConfig) -> list[CoverageRow]:
    """Fraction of replicates whose interval covers the truth, per cell.

    Degenerate replicates count as not covering; the denominator stays K.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for param, model, N, rho in _cells(config):
        truth, truth_se = _cell_truth(config, model)
        reports = _map(lambda k: _replicate(config, model, truth, N, rho, param, k),
                       list(range(config.K)), config.threads)
        bad = sum(1 for r in reports if r is None or r.degenerate)
        covered = sum(1 for r in reports if r is not None and not r.degenerate and r.covers(truth))
        lo, hi = binomial_band(config.K, config.alpha)
        rows.append(CoverageRow(N, rho, param, covered, config.K, covered / config.K, lo, hi,
                                truth, truth_se, bad))
    header = [f for f in CoverageRow.__dataclass_fields__]
    _write_csv(out / "coverage.csv", header, [[getattr(r, f) for f in header] for r in rows])
    _summary(config, out, {"degenerate_counts": {cell_name(r.N, r.rho, r.param): r.degenerate_count
                                                 for r in rows}, "seed": config.seed})
    return rows


def _algorithm(name, kernel):
    if name == "A":
        return lambda Y: varest.algorithm_A_variance(Y, kernel).V
    if name == "B":
        return lambda Y: varest.variance_estimate(Y, kernel, method="direct", fast=False, threads=1).V
    return lambda Y: varest.variance_estimate(Y, kernel, method="leave_one_out", fast=True).V


@dataclass(frozen=True)
class BenchRow:
    N: int
    algorithm: str
    kernel: str
    mean_seconds: float
    sd_seconds: float
    estimate_mean: float
    estimate_sd: float
    runs: int
    skipped: str = ""


def run_bench(config: ExperimentConfig) -> tuple[list[BenchRow], list[dict]]:
    """Time the variance estimators A (empirical covariances), B (enumeration)
    and C (leave-one-out with matrix-operation U-statistics).

    Only the variance call is timed, single-threaded, after ``warmup``
    discarded runs. Algorithms whose N cap is exceeded are skipped with a
    reason. ``config.statistic`` names the kernel.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    kernel = K.resolve(config.statistic)
    model = config.model_for(config.params()[0])
    rows, runs = [], []
    for N in config.N_list:
        rho = config.rho_list[0]
        m, n = split_size(N, rho)
        mats = [M.sample_matrix(model, m, n, replicate_seed(config.seed, "bench", N, rho, None, k))
                for k in range(config.K)]
        for alg in config.algorithms:
            cap = config.caps.get(alg)
            if cap is not None and N > cap:
                rows.append(BenchRow(N, alg, kernel.id, math.nan, math.nan, math.nan, math.nan, 0,
                                     f"N={N} exceeds the cap {cap} for algorithm {alg}"))
                continue
            fn = _algorithm(alg, kernel)
            for _ in range(config.warmup):
                fn(mats[0])
            times, ests = [], []
            for k, Y in enumerate(mats):
                t0 = time.perf_counter()
                est = fn(Y)
                times.append(time.perf_counter() - t0)
                ests.append(float(est))
                runs.append({"N": N, "replicate": k, "algorithm": alg, "estimate": float(est),
                             "seconds": times[-1]})
            sd_t = statistics.stdev(times) if len(times) > 1 else 0.0
            sd_e = statistics.stdev(ests) if len(ests) > 1 else 0.0
            rows.append(BenchRow(N, alg, kernel.id, statistics.fmean(times), sd_t,
                                 statistics.fmean(ests), sd_e, len(times)))
    header = ["N", "algorithm", "kernel", "mean_seconds", "sd_seconds", "estimate_mean", "estimate_sd",
              "runs", "skipped"]
    _write_csv(out / "bench.csv", header, [[getattr(r, f) for f in header] for r in rows])
    _summary(config, out, {"seed": config.seed, "skipped": [r.skipped for r in rows if r.skipped]})
    return rows, runs


def run(config: ExperimentConfig):
    if config.experiment == "qq":
        return run_qq(config)
    if config.experiment == "coverage":
        return run_coverage(config)
    return run_bench(config)
