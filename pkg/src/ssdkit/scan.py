"""Five interchangeable algorithms for the scalar recurrence h_t = a_t*h_{t-1} + b_t.

The recurrence ("cumprodsum": cumsum at a=1, cumprod at b=0) is multiplication
by the unit-lower-triangular 1-SS matrix M[j,i] = a_j*...*a_{i+1}, and every
algorithm here is a different factorization of that matrix:

  1. Sequential         - the recurrence itself, 2(T-1) ops.
  2. AssociativeScan    - three-stage pair/half-scan/broadcast recursion on the
                          combine rule (a,b)(+)(a',b') = (a*a', a*b' + b).
  3. Dilated            - log2(T) factors with subdiagonal strides 1,2,4,...
  4. StatePassing       - chunked: run any inner algorithm per chunk, fold the
                          carried state into the next chunk's first input.
  5. BlockDecomposition - recurse on both halves independently, then add a
                          rank-1 correction (decay column times the left
                          half's final state) to the right half.

Convention: a[0] is never read by the recurrence itself. A nonzero initial
state enters as a virtual step, b[0] += a[0]*h_init, with a[0] supplied by
the caller for exactly that purpose. All algorithms count each scalar mul and
add as one mul_add, so Sequential books exactly 2(T-1) per channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import OpCounter, as_array

__all__ = [
    "Sequential",
    "AssociativeScan",
    "Dilated",
    "StatePassing",
    "BlockDecomposition",
    "ScanAlgorithm",
    "ScanState",
    "associative_combine",
    "cumprodsum",
    "dilated_factors",
    "associative_scan_factors",
    "scan_work",
]


@dataclass(frozen=True)
class Sequential:
    pass


@dataclass(frozen=True)
class AssociativeScan:
    pass


@dataclass(frozen=True)
class Dilated:
    pass


@dataclass(frozen=True)
class StatePassing:
    chunk: int = 64
    inner: "ScanAlgorithm" = field(default_factory=Sequential)

    def __post_init__(self):
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")


@dataclass(frozen=True)
class BlockDecomposition:
    cutoff: int = 32

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")


ScanAlgorithm = Sequential | AssociativeScan | Dilated | StatePassing | BlockDecomposition


@dataclass(frozen=True)
class ScanState:
    """Initial state h_{-1}; scalar or one value per channel."""

    h_init: float | np.ndarray = 0.0


def associative_combine(x, y):
    """Combine rule for scan elements, later element on the left.

    (a_t, b_t) (+) (a_s, b_s) = (a_t*a_s, a_t*b_s + b_t), the product of the
    2x2 systems [[a, b], [0, 1]]. Identity element (1, 0).
    """
    a_t, b_t = x
    a_s, b_s = y
    return (a_t * a_s, a_t * b_s + b_t)


# ---------------------------------------------------------------------------
# algorithm bodies: all take a (T,), b (T, C), zero initial state, and return
# h (T, C); h_init folding happens once in cumprodsum.
# ---------------------------------------------------------------------------


def _seq(a: np.ndarray, b: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    T, C = b.shape
    h = np.empty_like(b)
    if C == 1:
        # scalar fast path: python floats beat per-step numpy dispatch
        al = a.tolist()
        bl = b[:, 0].tolist()
        acc = bl[0]
        out = [acc]
        for t in range(1, T):
            acc = al[t] * acc + bl[t]
            out.append(acc)
        h[:, 0] = out
    else:
        h[0] = b[0]
        for t in range(1, T):
            h[t] = a[t] * h[t - 1] + b[t]
    if counter is not None:
        counter.add_mul_adds(2 * (T - 1) * C)
    return h


def _assoc(a: np.ndarray, b: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    T, C = b.shape
    if T == 1:
        return b.copy()
    if T % 2 == 1:
        h = np.empty_like(b)
        h[: T - 1] = _assoc(a[: T - 1], b[: T - 1], counter)
        h[T - 1] = a[T - 1] * h[T - 2] + b[T - 1]
        if counter is not None:
            counter.add_mul_adds(2 * C)
        return h
    half = T // 2
    ae = a[0::2]
    ao = a[1::2]
    # stage 1: each odd row picks up its even predecessor
    u_odd = ao[:, None] * b[0::2] + b[1::2]
    # stage 2: half-size self-similar scan over the odd rows; coefficient i is
    # a_{2i+1}*a_{2i} (index 0 unused downstream, matching the a[0] convention)
    a_pair = ao * ae
    if counter is not None:
        counter.add_mul_adds(2 * half * C + half)
    v_odd = _assoc(a_pair, u_odd, counter)
    # stage 3: even rows 2,4,... broadcast from the previous odd row
    h = np.empty_like(b)
    h[1::2] = v_odd
    h[0] = b[0]
    if half > 1:
        h[2::2] = a[2::2][:, None] * v_odd[:-1] + b[2::2]
        if counter is not None:
            counter.add_mul_adds(2 * (half - 1) * C)
    return h


def _dilated(a: np.ndarray, b: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    T, C = b.shape
    Tp = 1 << max(T - 1, 1).bit_length() if T & (T - 1) else T
    if Tp != T:
        # pad with absorbing steps (a=0, b=0); outputs past T are discarded
        a = np.concatenate([a, np.zeros(Tp - T)])
        b = np.concatenate([b, np.zeros((Tp - T, C))])
    h = b.copy()
    g = a.copy()  # g[t] holds the running product a_t*...*a_{t-d+1}
    g[0] = 1.0
    d = 1
    while d < Tp:
        h[d:] = h[d:] + g[d:, None] * h[:-d]
        g[d:] = g[d:] * g[:-d]
        if counter is not None:
            counter.add_mul_adds(2 * (Tp - d) * C + (Tp - d))
        d *= 2
    return h[:T]


def _state_passing(
    a: np.ndarray, b: np.ndarray, k: int, inner: ScanAlgorithm, counter: OpCounter | None
) -> np.ndarray:
    T, C = b.shape
    h = np.empty_like(b)
    carry = None
    for s in range(0, T, k):
        e = min(s + k, T)
        bb = b[s:e]
        if carry is not None:
            bb = bb.copy()
            bb[0] = a[s] * carry + bb[0]
            if counter is not None:
                counter.add_mul_adds(2 * C)
        h[s:e] = _dispatch(a[s:e], bb, inner, counter)
        carry = h[e - 1]
    return h


def _block_decomposition(
    a: np.ndarray, b: np.ndarray, cutoff: int, counter: OpCounter | None
) -> np.ndarray:
    T, C = b.shape
    if T <= cutoff:
        return _seq(a, b, counter)
    mid = T // 2
    h = np.empty_like(b)
    h[:mid] = _block_decomposition(a[:mid], b[:mid], cutoff, counter)
    h[mid:] = _block_decomposition(a[mid:], b[mid:], cutoff, counter)
    # rank-1 lower-left quadrant: column of decays a_{t:mid-1} scaling the
    # left half's final state
    w = np.cumprod(a[mid:])
    h[mid:] += w[:, None] * h[mid - 1]
    if counter is not None:
        counter.add_mul_adds((T - mid - 1) + 2 * (T - mid) * C)
    return h


def _dispatch(
    a: np.ndarray, b: np.ndarray, alg: ScanAlgorithm, counter: OpCounter | None
) -> np.ndarray:
    if isinstance(alg, Sequential):
        return _seq(a, b, counter)
    if isinstance(alg, AssociativeScan):
        return _assoc(a, b, counter)
    if isinstance(alg, Dilated):
        return _dilated(a, b, counter)
    if isinstance(alg, StatePassing):
        return _state_passing(a, b, alg.chunk, alg.inner, counter)
    if isinstance(alg, BlockDecomposition):
        return _block_decomposition(a, b, alg.cutoff, counter)
    raise TypeError(f"unknown scan algorithm {alg!r}")


def cumprodsum(
    a,
    b,
    alg: ScanAlgorithm = Sequential(),
    state: ScanState | float | np.ndarray = 0.0,
    counter: OpCounter | None = None,
):
    """Run h_t = a_t*h_{t-1} + b_t and return (h, final_state).

    a: (T,) multipliers, a[0] read only to fold a nonzero initial state.
    b: (T,) or (T, C) additive inputs; h matches b's shape.
    final_state is h[T-1] exactly; for T == 0 it is the initial state.
    """
    a = as_array(a) if not hasattr(a, "a") else as_array(a.a)  # OneSSCoeffs or array
    b = as_array(b)
    h_init = state.h_init if isinstance(state, ScanState) else state
    if a.ndim != 1:
        raise ValueError(f"a must be one-dimensional, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"length mismatch: a has {a.shape[0]} steps, b has {b.shape[0]}")

    T = a.shape[0]
    if T == 0:
        return b.copy(), np.asarray(h_init, dtype=np.float64) + 0.0

    squeeze = b.ndim == 1
    b2 = b.reshape(T, -1)
    C = b2.shape[1]

    init = np.asarray(h_init, dtype=np.float64)
    if np.any(init != 0.0):
        b2 = b2.copy()
        b2[0] = b2[0] + a[0] * init
        if counter is not None:
            counter.add_mul_adds(2 * C)

    h = _dispatch(a, b2, alg, counter)
    if squeeze:
        h = h[:, 0]
    final = h[-1] if squeeze else h[-1].copy()
    return h, final


def dilated_factors(a) -> list[np.ndarray]:
    """Dense factors [F_{T/2}, ..., F_2, F_1] whose product is the 1-SS matrix.

    F_d has unit diagonal and a_{t:t-d} = a_t*...*a_{t-d+1} at (t, t-d); each
    row holds at most two nonzeros. Requires T a power of two (callers pad).
    """
    a = as_array(a) if not hasattr(a, "a") else as_array(a.a)
    T = a.shape[0]
    if T < 1 or T & (T - 1):
        raise ValueError(f"dilated factorization needs a power-of-two length, got {T}")
    factors = []
    g = a.copy()
    g[0] = 1.0
    d = 1
    while d < T:
        F = np.eye(T)
        idx = np.arange(d, T)
        F[idx, idx - d] = g[d:]
        factors.append(F)
        g[d:] = g[d:] * g[:-d]
        d *= 2
    factors.reverse()
    if not factors:  # T == 1
        factors = [np.eye(1)]
    return factors


def associative_scan_factors(a) -> list[np.ndarray]:
    """The three-stage factorization [F_broadcast, F_halfscan, F_pair] (even T).

    F_pair combines each odd row with its even predecessor; F_halfscan embeds
    the half-length 1-SS scan (coefficients a_{2i+1}*a_{2i}) on the odd rows;
    F_broadcast pushes each even row's value from the previous odd row. Their
    ordered product is the full 1-SS matrix.
    """
    a = as_array(a) if not hasattr(a, "a") else as_array(a.a)
    T = a.shape[0]
    if T < 2 or T % 2:
        raise ValueError(f"three-stage factorization needs even T >= 2, got {T}")
    half = T // 2

    f_pair = np.eye(T)
    odd = np.arange(1, T, 2)
    f_pair[odd, odd - 1] = a[odd]

    # half-length 1-SS on the odd rows
    a_pair = a[1::2] * a[0::2]
    block = np.eye(half)
    for i in range(1, half):
        block[i, :i] = block[i - 1, :i] * a_pair[i]
    f_half = np.eye(T)
    f_half[np.ix_(odd, odd)] = block

    f_bcast = np.eye(T)
    even = np.arange(2, T, 2)
    f_bcast[even, even - 1] = a[even]

    return [f_bcast, f_half, f_pair]


def scan_work(alg: ScanAlgorithm, T: int, seed: int = 0) -> OpCounter:
    """Measured op count for one (T,)-channel run of the given algorithm."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, T)
    b = rng.standard_normal(T)
    counter = OpCounter()
    cumprodsum(a, b, alg=alg, counter=counter)
    return counter
