"""U-statistics and their variance estimators for exchangeable bipartite networks."""

__version__ = "0.1.0"

from .core import BipartiteMatrix, load_matrix, save_matrix  # noqa: E402
from .errors import (  # noqa: E402
    DegeneracyError,
    DomainError,
    NumericError,
    SizeError,
    UStatError,
    ValidationError,
)
from .kernels import Kernel, builtin, symmetrize  # noqa: E402
from .ustat import u_fast, u_naive, u_statistic  # noqa: E402
from .varest import covariance_estimate, variance_estimate  # noqa: E402
from .inference import compare_networks, d_report, f2_report, motif_report  # noqa: E402

__all__ = [
    "BipartiteMatrix", "load_matrix", "save_matrix",
    "UStatError", "ValidationError", "SizeError", "DomainError", "NumericError", "DegeneracyError",
    "Kernel", "builtin", "symmetrize",
    "u_naive", "u_fast", "u_statistic",
    "variance_estimate", "covariance_estimate",
    "f2_report", "d_report", "motif_report", "compare_networks",
]
