"""Submatrix kernels: construction, symmetrization, extension, built-ins.

A kernel's ``eval`` is vectorised: it maps an array of blocks with shape
``(..., p, q)`` to an array of shape ``(...)``. Row index ``a`` / column index
``b`` of a block correspond to ``Y[i_a, j_b]``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError, UnknownKernelError, ValidationError

MAX_PERMUTATIONS = 10**6
# Engine guard on kernel dimensions; raise it deliberately for bigger kernels.
MAX_KERNEL_DIM = 4


@dataclass(frozen=True, eq=False)
class Kernel:
    p: int
    q: int
    id: str
    eval: Callable[[np.ndarray], np.ndarray]
    is_symmetric: bool = False
    fast_path: str | None = None

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValidationError(f"kernel dimensions must be positive, got {self.p}x{self.q}")

    def __call__(self, blocks):
        return self.eval(np.asarray(blocks, dtype=np.float64))

    def __repr__(self):
        sym = "symmetric" if self.is_symmetric else "raw"
        return f"Kernel({self.id!r}, {self.p}x{self.q}, {sym})"


def evaluate(h: Kernel, block) -> float:
    """Evaluate a kernel on a single p x q block, with shape and finiteness checks."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (h.p, h.q):
        raise ValidationError(f"kernel {h.id} expects a {h.p}x{h.q} block, got {block.shape}")
    value = float(h.eval(block))
    if not math.isfinite(value):
        raise NumericError(f"kernel {h.id} returned a non-finite value")
    return value


def _permutation_arrays(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64)


def symmetrize(raw: Kernel) -> Kernel:
    """Average a kernel over all row and column permutations of its block."""
    if raw.is_symmetric:
        return raw
    count = math.factorial(raw.p) * math.factorial(raw.q)
    if count > MAX_PERMUTATIONS:
        raise ValidationError(f"symmetrizing {raw.p}x{raw.q} needs {count} permutations")
    row_perms = _permutation_arrays(raw.p)
    col_perms = _permutation_arrays(raw.q)
    f = raw.eval

    def sym_eval(B):
        total = 0.0
        for rp in row_perms:
            Br = B[..., rp, :]
            for cp in col_perms:
                total = total + f(Br[..., cp])
        return total / count

    return Kernel(raw.p, raw.q, f"sym({raw.id})", sym_eval, is_symmetric=True)


def extend(h: Kernel, p2: int, q2: int) -> Kernel:
    """Average ``h`` over every p x q sub-block of a p2 x q2 block.

    The result has the same U-statistic as ``h`` on any matrix large enough
    for both.
    """
    if p2 < h.p or q2 < h.q:
        raise ValidationError(f"cannot extend a {h.p}x{h.q} kernel to {p2}x{q2}")
    if (p2, q2) == (h.p, h.q):
        return h
    row_sets = [list(r) for r in itertools.combinations(range(p2), h.p)]
    col_sets = [list(c) for c in itertools.combinations(range(q2), h.q)]
    count = len(row_sets) * len(col_sets)
    f = h.eval

    def ext_eval(B):
        total = 0.0
        for r in row_sets:
            Br = B[..., r, :]
            for c in col_sets:
                total = total + f(Br[..., c])
        return total / count

    return Kernel(p2, q2, f"ext({h.id},{p2},{q2})", ext_eval, is_symmetric=h.is_symmetric)


def linear_combination(terms: list[tuple[float, Kernel]], id: str | None = None) -> Kernel:
    """Kernel ``sum(coef * h)`` over same-size kernels."""
    p, q = terms[0][1].p, terms[0][1].q
    if any((k.p, k.q) != (p, q) for _, k in terms):
        raise ValidationError("linear combination needs kernels of one size")
    coefs = [float(c) for c, _ in terms]
    funcs = [k.eval for _, k in terms]

    def comb_eval(B):
        return sum(c * f(B) for c, f in zip(coefs, funcs))

    if id is None:
        id = " + ".join(f"{c:g}*{k.id}" for c, k in terms)
    return Kernel(p, q, id, comb_eval, is_symmetric=all(k.is_symmetric for _, k in terms))


# ---------------------------------------------------------------------------
# Built-in kernels
# ---------------------------------------------------------------------------

def _h6(B):
    return B[..., 0, 0] * B[..., 0, 1] * B[..., 1, 0] * B[..., 1, 1]


def _h14_raw(B):
    return (B[..., 0, 0] * B[..., 0, 1] * B[..., 1, 1] * B[..., 1, 2]
            * (1 - B[..., 1, 0]) * (1 - B[..., 0, 2]))


def _h14(B):
    # The 12 permutations collapse to 6 distinct terms through the motif's
    # automorphism (swap both rows and the end columns).
    Y = lambda a, b: B[..., a, b]  # noqa: E731
    return (
        Y(0, 0) * Y(0, 1) * Y(1, 1) * Y(1, 2) * (1 - Y(1, 0)) * (1 - Y(0, 2))
        + Y(0, 1) * Y(0, 2) * Y(1, 2) * Y(1, 0) * (1 - Y(0, 0)) * (1 - Y(1, 1))
        + Y(0, 2) * Y(0, 0) * Y(1, 0) * Y(1, 1) * (1 - Y(0, 1)) * (1 - Y(1, 2))
        + Y(1, 0) * Y(1, 1) * Y(0, 1) * Y(0, 2) * (1 - Y(0, 0)) * (1 - Y(1, 2))
        + Y(1, 1) * Y(1, 2) * Y(0, 2) * Y(0, 0) * (1 - Y(1, 0)) * (1 - Y(0, 1))
        + Y(1, 2) * Y(1, 0) * Y(0, 0) * Y(0, 1) * (1 - Y(1, 1)) * (1 - Y(0, 2))
    ) / 6.0


def _hA1_raw(B):
    return B[..., 0, 0] * (B[..., 0, 0] - 1) * B[..., 1, 1]


def _hA2_raw(B):
    return B[..., 0, 0] * B[..., 0, 1] * B[..., 1, 1]


def _hA_raw(B):
    return _hA1_raw(B) - 2 * _hA2_raw(B)


def _pair_product_row(B):
    return B[..., 0, 0] * B[..., 0, 1]


def _pair_product_col(B):
    return B[..., 0, 0] * B[..., 1, 0]


def _single(B):
    return B[..., 0, 0]


def _h2_raw(B):
    return 0.5 * (B[..., 0, 0] * B[..., 1, 1] + B[..., 0, 1] * B[..., 1, 0])


# name -> (p, q, raw eval, already symmetric, fast-path tag)
_BUILTINS = {
    "h6": (2, 2, _h6, True, "h6"),
    "h14": (2, 3, _h14, True, None),
    "hA": (2, 2, _hA_raw, False, "hA"),
    "hA1": (2, 2, _hA1_raw, False, "hA1"),
    "hA2": (2, 2, _hA2_raw, False, "hA2"),
    "hB": (1, 2, _pair_product_row, True, "h1"),
    "hC": (2, 1, _pair_product_col, True, "hC"),
    "hD": (1, 1, _single, True, "hD"),
    "h1": (1, 2, _pair_product_row, True, "h1"),
    "h2": (2, 2, _h2_raw, True, "h2"),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def raw_builtin(name: str) -> Kernel:
    """The kernel as first written down, before symmetrization.

    For h14 this is the single motif-14 indicator term.
    """
    if name == "h14":
        return Kernel(2, 3, "h14_raw", _h14_raw)
    try:
        p, q, f, sym, _ = _BUILTINS[name]
    except KeyError:
        raise UnknownKernelError(
            f"unknown kernel {name!r}; valid names: {', '.join(BUILTIN_NAMES)}"
        ) from None
    return Kernel(p, q, f"{name}_raw", f, is_symmetric=sym)


def builtin(name: str) -> Kernel:
    """Return the symmetrized built-in kernel ``name``."""
    try:
        p, q, f, sym, fast = _BUILTINS[name]
    except KeyError:
        raise UnknownKernelError(
            f"unknown kernel {name!r}; valid names: {', '.join(BUILTIN_NAMES)}"
        ) from None
    h = symmetrize(Kernel(p, q, name, f, is_symmetric=sym))
    return Kernel(p, q, name, h.eval, is_symmetric=True, fast_path=fast)


def from_terms(p: int, q: int, terms: list[dict], id: str = "custom") -> Kernel:
    """Build a symmetrized polynomial kernel ``sum coef * prod Y[i,j]**power``.

    ``terms`` follows the JSON form ``{"coef": c, "factors": [[i, j, power], ...]}``
    with 1-based (i, j) positions inside the block.
    """
    if p > MAX_KERNEL_DIM or q > MAX_KERNEL_DIM:
        raise ValidationError(f"kernel size {p}x{q} exceeds the {MAX_KERNEL_DIM}x{MAX_KERNEL_DIM} guard")
    parsed = []
    for term in terms:
        coef = float(term.get("coef", 1.0))
        factors = []
        for fac in term.get("factors", []):
            if len(fac) == 2:
                fac = [fac[0], fac[1], 1]
            i, j, power = int(fac[0]), int(fac[1]), fac[2]
            if not (1 <= i <= p and 1 <= j <= q):
                raise ValidationError(f"factor position ({i},{j}) outside a {p}x{q} block")
            factors.append((i - 1, j - 1, float(power)))
        parsed.append((coef, factors))

    def poly_eval(B):
        total = 0.0
        for coef, factors in parsed:
            prod = coef
            for i, j, power in factors:
                prod = prod * (B[..., i, j] if power == 1 else B[..., i, j] ** power)
            total = total + prod * np.ones(B.shape[:-2])
        return total

    return symmetrize(Kernel(p, q, id, poly_eval))


def from_json(doc) -> Kernel:
    """Kernel from a JSON document (str, path-like text, or parsed dict)."""
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        return from_terms(int(doc["p"]), int(doc["q"]), doc["terms"], id=doc.get("id", "custom"))
    except KeyError as exc:
        raise ValidationError(f"kernel JSON missing field {exc}") from None


def resolve(spec) -> Kernel:
    """Accept a Kernel, a built-in name, or a JSON kernel document."""
    if isinstance(spec, Kernel):
        return spec
    if isinstance(spec, dict):
        return from_json(spec)
    if isinstance(spec, str) and spec.lstrip().startswith("{"):
        return from_json(spec)
    return builtin(spec)
