"""Semiseparable matrices: 1-SS and order-N SSS forms, rank structure, closure.

An order-N semiseparable matrix is lower triangular with every on-or-below-
diagonal submatrix of rank <= N. The SSS parameterization stores it as
M[j, i] = C_j^T A_j ... A_{i+1} B_i with per-step A either a scalar, a
diagonal, or a dense N x N matrix. The order-1 case M[j, i] = a_j ... a_{i+1}
("1-SS") is the matrix form of the scalar recurrence h_t = a_t h_{t-1} + b_t.

This module materializes the dense forms, certifies rank profiles by
enumerating submatrices, exposes the explicit low-rank factorization of any
off-diagonal block, checks closure under sum/product/inverse, and constructs
the semiseparable transfer matrix of a scalar autoregressive process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DimensionError, OpCounter, as_array, numerical_rank

__all__ = [
    "SingularMatrixError",
    "OneSSCoeffs",
    "SSSRep",
    "BandedLower",
    "ArOrderCertificate",
    "UNDERFLOW_FLUSH",
    "materialize_1ss",
    "materialize_sss",
    "block_lowrank_factors",
    "lower_rank_profile",
    "closure_check",
    "ar_to_ssm",
]


class SingularMatrixError(ValueError):
    """Inverse requested for a matrix with a (numerically) zero diagonal."""


# materialized entries with magnitude below this are flushed to exact zero;
# keeps long decay products from leaving subnormal noise in dense forms
UNDERFLOW_FLUSH = 1e-300


@dataclass
class OneSSCoeffs:
    """Recurrence multipliers a_1..a_{T-1}; a[0] exists but is never read.

    ``bounded`` records whether every entry sits in [0, 1] (the regime the
    SSD layer assumes); arbitrary reals are legal for closure/AR tests.
    """

    a: np.ndarray
    bounded: bool = False

    def __post_init__(self):
        self.a = as_array(self.a)
        if self.a.ndim != 1:
            raise DimensionError(f"coefficients must be 1-D, got shape {self.a.shape}")
        self.bounded = bool(np.all((self.a >= 0.0) & (self.a <= 1.0)))

    def __len__(self) -> int:
        return self.a.shape[0]


def _coeffs(a) -> np.ndarray:
    if isinstance(a, OneSSCoeffs):
        return a.a
    arr = as_array(a)
    if arr.ndim != 1:
        raise DimensionError(f"coefficients must be 1-D, got shape {arr.shape}")
    return arr


@dataclass
class SSSRep:
    """Sequentially semiseparable representation (A, B, C).

    A: (T,) scalar, (T, N) diagonal, or (T, N, N) dense per-step transitions.
    B: (T, N) input maps.  C: (T, N) output maps.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.A = as_array(self.A)
        self.B = as_array(self.B)
        self.C = as_array(self.C)
        if self.B.ndim != 2 or self.C.ndim != 2:
            raise DimensionError("B and C must have shape (T, N)")
        if self.B.shape != self.C.shape:
            raise DimensionError(f"B {self.B.shape} and C {self.C.shape} disagree")
        T, N = self.B.shape
        if self.A.shape not in ((T,), (T, N), (T, N, N)):
            raise DimensionError(
                f"A shape {self.A.shape} incompatible with T={T}, N={N}; "
                "expected (T,), (T,N), or (T,N,N)"
            )

    @property
    def T(self) -> int:
        return self.B.shape[0]

    @property
    def order(self) -> int:
        return self.B.shape[1]

    @property
    def a_form(self) -> str:
        return {1: "scalar", 2: "diagonal", 3: "dense"}[self.A.ndim]


def materialize_1ss(
    a, counter: OpCounter | None = None, flush_tiny: bool = True
) -> np.ndarray:
    """Dense unit-lower-triangular matrix M[j, i] = a_j*...*a_{i+1} (empty = 1).

    Rows are filled with running products; with flush_tiny, magnitudes below
    UNDERFLOW_FLUSH become exact zeros.
    """
    a = _coeffs(a)
    T = a.shape[0]
    M = np.eye(T)
    muls = 0
    for j in range(1, T):
        # reversed cumulative products a_j, a_j*a_{j-1}, ..., a_j*...*a_1
        cp = np.cumprod(a[j:0:-1])
        M[j, :j] = cp[::-1]
        muls += j - 1
    if flush_tiny and T:
        tiny = np.abs(M) < UNDERFLOW_FLUSH
        tiny &= M != 0.0
        M[tiny] = 0.0
    if counter is not None:
        counter.add_elementwise(muls)
    return M


def _step_matrices(rep: SSSRep) -> np.ndarray:
    """Per-step A as dense (T, N, N), whatever the stored form."""
    T, N = rep.B.shape
    if rep.a_form == "dense":
        return rep.A
    eye = np.eye(N)
    if rep.a_form == "scalar":
        return rep.A[:, None, None] * eye
    return rep.A[:, :, None] * eye  # diagonal


def materialize_sss(rep: SSSRep, counter: OpCounter | None = None) -> np.ndarray:
    """Dense lower-triangular matrix of an SSS representation."""
    T, N = rep.B.shape
    if rep.a_form == "scalar":
        L = materialize_1ss(rep.A, counter=counter)
        G = np.einsum("tn,sn->ts", rep.C, rep.B)
        if counter is not None:
            counter.add_mul_adds(T * T * N)
            counter.add_elementwise(T * T)
        return L * G
    if rep.a_form == "diagonal":
        M = np.zeros((T, T))
        for n in range(N):
            L = materialize_1ss(rep.A[:, n], counter=counter)
            M += L * np.outer(rep.C[:, n], rep.B[:, n])
            if counter is not None:
                counter.add_elementwise(3 * T * T)
        return M
    # dense A: propagate each input column up the rows
    M = np.zeros((T, T))
    for i in range(T):
        v = rep.B[i]
        M[i, i] = rep.C[i] @ v
        for j in range(i + 1, T):
            v = rep.A[j] @ v
            M[j, i] = rep.C[j] @ v
        if counter is not None:
            counter.add_mul_adds((T - 1 - i) * (N * N + N) + N)
    return M


def block_lowrank_factors(
    rep: SSSRep, rows: tuple[int, int], cols: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Explicit rank-N factors (left, center, right) of an off-diagonal block.

    For rows [r0, r1) and cols [c0, c1) with c1 <= r0 (block strictly below
    the diagonal), returns left (rows, N), center (N, N), right (N, cols)
    with left @ center @ right equal to the materialized block:

        left[r]    = C_r^T A_r ... A_{r0+1}
        center     = A_{r0} ... A_{c1}
        right[:,s] = A_{c1-1} ... A_{s+1} B_s
    """
    r0, r1 = rows
    c0, c1 = cols
    T, N = rep.B.shape
    if not (0 <= c0 < c1 <= r0 < r1 <= T):
        raise ValueError(
            f"need 0 <= c0 < c1 <= r0 < r1 <= T, got rows={rows} cols={cols} T={T}"
        )
    A = _step_matrices(rep)

    left = np.empty((r1 - r0, N))
    P = np.eye(N)  # running product A_r ... A_{r0+1}
    for r in range(r0, r1):
        if r > r0:
            P = A[r] @ P
        left[r - r0] = rep.C[r] @ P

    center = np.eye(N)
    for u in range(r0, c1 - 1, -1):
        center = center @ A[u]

    right = np.empty((N, c1 - c0))
    for s in range(c0, c1):
        v = rep.B[s].copy()
        for u in range(s + 1, c1):
            v = A[u] @ v
        right[:, s - c0] = v
    return left, center, right


def lower_rank_profile(M, samples: int = 512, tol: float = 1e-8, seed: int = 0) -> int:
    """Max numerical rank over contiguous on-or-below-diagonal submatrices.

    Blocks are M[j:j', i':i] with j' > j >= i > i'. Enumeration is exhaustive
    for T <= 16 (with the exact prune rank <= min(rows, cols)); larger
    matrices are certified over ``samples`` index tuples drawn from a fixed
    seed, so the function stays deterministic.
    """
    M = as_array(M)
    if M.ndim != 2:
        raise DimensionError(f"expected a matrix, got rank {M.ndim}")
    T = M.shape[0]
    if T < 2:
        return 0

    # pivots are compared against the full matrix's scale as well as each
    # block's own; otherwise a block whose true content is zero plus
    # inversion round-off would count its noise as rank
    floor = tol * float(np.abs(M).max())

    # maximal blocks M[i:, :i] bound every other block's rank from above,
    # so scoring them first makes the min-dim prune bite early
    best = 0
    for i in range(1, T):
        best = max(best, numerical_rank(M[i:, :i], rel_tol=tol, abs_floor=floor))

    if T <= 16:
        for i2 in range(T - 1):
            for i in range(i2 + 1, T):
                for j in range(i, T):
                    rmax = T - j
                    if min(rmax, i - i2) <= best:
                        continue
                    for j2 in range(j + 1, T + 1):
                        if min(j2 - j, i - i2) <= best:
                            continue
                        best = max(
                            best,
                            numerical_rank(M[j:j2, i2:i], rel_tol=tol, abs_floor=floor),
                        )
        return best

    rng = np.random.default_rng(seed)
    for _ in range(samples):
        i = int(rng.integers(1, T))          # col end
        i2 = int(rng.integers(0, i))         # col start
        j = int(rng.integers(i, T))          # row start
        j2 = int(rng.integers(j + 1, T + 1))  # row end
        if min(j2 - j, i - i2) <= best:
            continue
        best = max(best, numerical_rank(M[j:j2, i2:i], rel_tol=tol, abs_floor=floor))
    return best


def _dense(x) -> np.ndarray:
    if isinstance(x, SSSRep):
        return materialize_sss(x)
    if isinstance(x, OneSSCoeffs):
        return materialize_1ss(x)
    arr = as_array(x)
    if arr.ndim == 1:
        return materialize_1ss(arr)
    return arr


def closure_check(op: str, lhs, rhs=None, tol: float = 1e-8) -> int:
    """Observed rank profile of lhs+rhs, lhs@rhs, or inv(lhs).

    Operands may be SSSRep, OneSSCoeffs / 1-D coefficient arrays, or dense
    matrices. Inverse requires a nonsingular (lower-triangular) operand.
    """
    A = _dense(lhs)
    if op == "sum":
        out = A + _dense(rhs)
    elif op == "product":
        out = A @ _dense(rhs)
    elif op == "inverse":
        diag = np.abs(np.diagonal(A))
        if A.shape[0] != A.shape[1] or np.any(diag <= tol * max(diag.max(), 1.0)):
            raise SingularMatrixError("inverse of a (numerically) singular matrix")
        out = np.linalg.inv(A)
    else:
        raise ValueError(f"op must be sum | product | inverse, got {op!r}")
    return lower_rank_profile(out, tol=tol)


@dataclass
class BandedLower:
    """Scalar AR(k) process y_t = mu_t x_t + sum_m coeffs[t, m-1] * y_{t-m}.

    coeffs: (T, k), entry [t, m-1] weighting y_{t-m}; rows with t < m ignore
    the out-of-range lags. mu: (T,) nonzero input gains.
    """

    coeffs: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_2d(as_array(self.coeffs))
        self.mu = as_array(self.mu)
        if self.mu.ndim != 1:
            raise DimensionError(f"mu must be 1-D, got {self.mu.shape}")
        T = self.mu.shape[0]
        if self.coeffs.shape[0] != T:
            raise DimensionError(
                f"coeffs rows {self.coeffs.shape[0]} != T {T}"
            )
        if self.k >= T and T > 0 and self.k > 0:
            raise DimensionError(f"band k={self.k} must be < T={T}")

    @property
    def k(self) -> int:
        return self.coeffs.shape[1]

    def folded_matrix(self) -> np.ndarray:
        """(k+1)-banded lower matrix D with D y = x, input gains folded in."""
        if np.any(self.mu == 0.0):
            raise SingularMatrixError("mu must be nonzero everywhere")
        T = self.mu.shape[0]
        D = np.diag(1.0 / self.mu)
        for m in range(1, self.k + 1):
            t = np.arange(m, T)
            D[t, t - m] = -self.coeffs[t, m - 1] / self.mu[t]
        return D


@dataclass(frozen=True)
class ArOrderCertificate:
    """Transfer matrix of an AR(k) process with its semiseparable order."""

    transform: np.ndarray  # dense L with y = L x
    profile: int           # observed lower rank profile
    bound: int             # guaranteed bound k+1


def ar_to_ssm(band: BandedLower, tol: float = 1e-8) -> ArOrderCertificate:
    """Invert the banded system of an AR(k) process into its transfer matrix.

    The recurrence rearranges to D y = x with D (k+1)-banded lower
    triangular, so y = D^{-1} x and the transfer matrix is semiseparable of
    order at most k+1.
    """
    D = band.folded_matrix()
    L = np.linalg.inv(D)
    return ArOrderCertificate(
        transform=L,
        profile=lower_rank_profile(L, tol=tol),
        bound=band.k + 1,
    )
