"""Dense tensors, a closed-set contraction engine, and exact operation counting.

The contraction engine deliberately supports only the handful of descriptor
patterns the rest of the library needs (matrix products, batched attention
contractions, outer-product state expansion). Values are computed with
np.einsum; operation counts are derived from the descriptor's axis sizes, so
a matrix product (MN,NK->MK) books exactly M*N*K multiply-adds.

Counting convention:
  - a contraction with at least one summed axis books prod(axis sizes) into
    ``mul_adds`` (one fused multiply-accumulate per product term);
  - a contraction with no summed axis (Hadamard, outer product) is pure
    multiplies and books into ``elementwise``.
Scalar recurrences (see the scan module) count their muls and adds
individually into ``mul_adds``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DimensionError",
    "ConfigurationError",
    "OpCounter",
    "Tensor",
    "SUPPORTED_DESCRIPTORS",
    "contract",
    "max_rel_err",
    "numerical_rank",
]


class DimensionError(ValueError):
    """Shape mismatch on a shared axis, or a malformed descriptor/operand."""


class ConfigurationError(ValueError):
    """Invalid run configuration, caught before any computation starts."""


@dataclass
class OpCounter:
    """Mutable tally of scalar work. Counts only ever increase."""

    mul_adds: int = 0
    elementwise: int = 0

    def add_mul_adds(self, n: int) -> None:
        if n < 0:
            raise ValueError("op counts are monotone; refusing negative increment")
        self.mul_adds += int(n)

    def add_elementwise(self, n: int) -> None:
        if n < 0:
            raise ValueError("op counts are monotone; refusing negative increment")
        self.elementwise += int(n)

    def total(self) -> int:
        return self.mul_adds + self.elementwise


@dataclass(frozen=True)
class Tensor:
    """A dense float array with optional single-letter axis names.

    ``data`` is row-major; ``axis_names`` (when given) must have one label per
    axis. Conventional labels: T/S (time), N (state), P (head channel),
    H (heads), G (groups), Q (chunk length).
    """

    data: np.ndarray
    axis_names: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype not in (np.float64, np.float32):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Tensor requires finite entries")
        object.__setattr__(self, "data", arr)
        if self.axis_names is not None:
            names = tuple(self.axis_names)
            if len(names) != arr.ndim:
                raise DimensionError(
                    f"{len(names)} axis names for a rank-{arr.ndim} tensor"
                )
            if not all(len(n) == 1 and n.isalpha() for n in names):
                raise DimensionError(f"axis names must be single letters, got {names}")
            object.__setattr__(self, "axis_names", names)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def flat(self) -> np.ndarray:
        # row-major stream; len(flat) == prod(shape) by construction
        return self.data.reshape(-1)


def as_array(x) -> np.ndarray:
    """Unwrap Tensor -> ndarray; pass ndarrays (and array-likes) through."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


# The exact descriptor set used by the library's equations. The 4-operand
# attention contraction (TN,SN,SP,TS->TP) is always composed from these
# pairwise steps and is intentionally absent.
SUPPORTED_DESCRIPTORS = frozenset(
    {
        "MN,NK->MK",
        "SP,SN->SPN",
        "TSN,SPN->TPN",
        "TN,TPN->TP",
        "TN,SN->TS",
        "TS,TS->TS",
        "TS,SP->TP",
        "TS,SPN->TPN",
        "QN,NP->QP",
    }
)


def _normalize_spec(spec: str) -> str:
    s = spec.replace(" ", "").replace("→", "->").upper()
    if s not in SUPPORTED_DESCRIPTORS:
        raise DimensionError(
            f"unsupported contraction descriptor {spec!r}; "
            f"supported: {sorted(SUPPORTED_DESCRIPTORS)}"
        )
    return s


def contract(spec: str, operands, counter: OpCounter | None = None):
    """Contract operands per a supported descriptor, e.g. ``"TN,SN->TS"``.

    Returns a Tensor when any operand is a Tensor (output axes named from the
    descriptor), else a plain ndarray. Books exact op counts into ``counter``.
    """
    s = _normalize_spec(spec)
    lhs, out = s.split("->")
    in_specs = lhs.split(",")
    if len(operands) != len(in_specs):
        raise DimensionError(
            f"{s} takes {len(in_specs)} operands, got {len(operands)}"
        )

    any_tensor = any(isinstance(op, Tensor) for op in operands)
    arrays = [as_array(op) for op in operands]

    dims: dict[str, int] = {}
    for axes, arr in zip(in_specs, arrays):
        if arr.ndim != len(axes):
            raise DimensionError(
                f"operand for {axes!r} has rank {arr.ndim}, expected {len(axes)}"
            )
        for name, size in zip(axes, arr.shape):
            if dims.setdefault(name, size) != size:
                raise DimensionError(
                    f"axis {name}: size {size} conflicts with {dims[name]}"
                )

    result = np.einsum(s, *arrays)

    if counter is not None:
        work = math.prod(dims[name] for name in dims)
        summed = set("".join(in_specs)) - set(out)
        if summed:
            counter.add_mul_adds(work)
        else:
            counter.add_elementwise(work)

    if any_tensor:
        return Tensor(result, axis_names=tuple(out))
    return result


def max_rel_err(x, y) -> float:
    """Largest absolute deviation of x from the reference y, scaled by y's magnitude.

    Scale-relative rather than pointwise-relative, so entries near zero do not
    blow the metric up; an all-zero reference falls back to absolute error.
    """
    x = as_array(x)
    y = as_array(y)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.size == 0:
        return 0.0
    scale = float(np.abs(y).max())
    diff = float(np.abs(x - y).max())
    return diff / scale if scale > 0.0 else diff


def numerical_rank(m, rel_tol: float = 1e-8, abs_floor: float = 0.0) -> int:
    """Rank of a small dense matrix via complete-pivoting Gaussian elimination.

    Pivots are accepted while |pivot| > rel_tol * |first pivot|, the first
    pivot under complete pivoting being the largest-magnitude entry of the
    matrix. ``abs_floor`` optionally raises the threshold to an absolute
    level; callers that rank submatrices of a larger computation pass a floor
    tied to the full matrix so noise-only blocks do not count as full rank.
    Intended for matrices up to ~64x64; no SVD involved.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    a = np.array(as_array(m), dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"numerical_rank expects a matrix, got rank {a.ndim}")
    if a.size == 0:
        return 0

    scale = np.abs(a).max()
    if scale <= abs_floor or scale == 0.0:
        return 0
    thresh = max(rel_tol * scale, abs_floor)

    n_rows, n_cols = a.shape
    rank = 0
    for r in range(min(n_rows, n_cols)):
        sub = a[r:, r:]
        flat = np.argmax(np.abs(sub))
        i, j = divmod(int(flat), sub.shape[1])
        pivot = sub[i, j]
        if abs(pivot) <= thresh:
            break
        if i != 0:
            a[[r, r + i], :] = a[[r + i, r], :]
        if j != 0:
            a[:, [r, r + j]] = a[:, [r + j, r]]
        a[r + 1 :, r:] -= np.outer(a[r + 1 :, r] / a[r, r], a[r, r:])
        rank += 1
    return rank
