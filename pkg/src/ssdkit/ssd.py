"""Multi-head scalar-decay SSM layer: recurrent, quadratic, and blocked modes.

Per head the layer is the scalar-identity SSM (state update S <- a_t*S +
B_t (x) X_t, output Y_t = C_t^T S), so the recurrent and quadratic modes
delegate to the ssm module head by head. The blocked mode splits time into
chunks and computes four pieces:

  1. intra-chunk outputs: the quadratic form on each diagonal block;
  2. right factors: each chunk's end state assuming it started from zero,
     one (N,Q)x(Q,P) product per chunk;
  3. center factors: the chunk-level scan H_k = d_k*H_{k-1} + R_k, where d_k
     is the chunk's full decay product (a 1-SS multiply over T/Q elements);
  4. left factors: each chunk's contribution from the state it inherited,
     one (Q,N)x(N,P) product per chunk.

Heads share B and C according to a head pattern; shared axes are broadcast
views (no copies) so sharing is observably identical to materializing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scan import cumprodsum
from .semiseparable import SSSRep
from .ssm import scalar_identity_quadratic, ssm_recurrent
from .tensor import DimensionError, OpCounter, as_array, contract

__all__ = [
    "MHS",
    "MCS",
    "MES",
    "MIS",
    "Grouped",
    "HeadPattern",
    "ChunkPlan",
    "SSDInputs",
    "LOG_SPACE_THRESHOLD",
    "head_group_map",
    "expand_heads",
    "ssd_recurrent",
    "ssd_quadratic",
    "ssd_blocked",
    "ssd_cost",
]


# chunk decay products switch to log-space accumulation when any factor
# drops below this, so long runs of tiny decays do not underflow stagewise
LOG_SPACE_THRESHOLD = 1e-12


@dataclass(frozen=True)
class MHS:
    """Every head owns its B and C (the multi-head / MHA analog)."""


@dataclass(frozen=True)
class MCS:
    """Heads share X and B; C varies (the multi-query analog)."""


@dataclass(frozen=True)
class MES:
    """Heads share X and C; B varies (the multi-key analog)."""


@dataclass(frozen=True)
class MIS:
    """Heads share B and C; X varies (the multi-value analog)."""


@dataclass(frozen=True)
class Grouped:
    """G parameter groups shared by H heads, head h using group floor(h*G/H)."""

    G: int

    def __post_init__(self):
        if self.G < 1:
            raise ValueError(f"group count must be >= 1, got {self.G}")


HeadPattern = MHS | MCS | MES | MIS | Grouped


@dataclass(frozen=True)
class ChunkPlan:
    """Blocked-mode chunk length; a short final chunk handles Q not dividing T."""

    Q: int = 64

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError(f"chunk length must be >= 1, got {self.Q}")


def head_group_map(H: int, g: int) -> np.ndarray:
    """Head -> parameter-group indices; handles g == 1, g == H, and grouped."""
    return (np.arange(H) * g) // H


@dataclass
class SSDInputs:
    """Layer inputs with per-pattern sharing along the head axis.

    X: (T, Hx, P) values; A: (T, H) decays in [0, 1]; B, C: (T, g, N) with
    g per the pattern (1 when shared, H when per-head, G when grouped).
    """

    X: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    pattern: HeadPattern = field(default_factory=MHS)

    def __post_init__(self):
        self.X = as_array(self.X)
        self.A = as_array(self.A)
        self.B = as_array(self.B)
        self.C = as_array(self.C)
        if self.X.ndim != 3 or self.B.ndim != 3 or self.C.ndim != 3:
            raise DimensionError("X must be (T,H,P); B and C must be (T,G,N)")
        T = self.X.shape[0]
        if self.A.ndim != 2 or self.A.shape[0] != T:
            raise DimensionError(f"A must be (T,H) with T={T}, got {self.A.shape}")
        if self.B.shape[0] != T or self.C.shape[0] != T:
            raise DimensionError("time axes of X, A, B, C disagree")
        if self.B.shape[2] != self.C.shape[2]:
            raise DimensionError(
                f"state sizes differ: B has {self.B.shape[2]}, C has {self.C.shape[2]}"
            )
        if np.any(self.A < 0.0) or np.any(self.A > 1.0):
            raise ValueError("decay values must lie in [0, 1]")

        hx, hb, hc = self.X.shape[1], self.B.shape[1], self.C.shape[1]
        p = self.pattern
        if isinstance(p, MHS):
            if not hx == hb == hc:
                raise DimensionError(
                    f"no-sharing pattern needs equal head axes, got X:{hx} B:{hb} C:{hc}"
                )
            H = hx
        elif isinstance(p, MCS):
            if hx != 1 or hb != 1:
                raise DimensionError(f"shared-X,B pattern needs singleton axes, got X:{hx} B:{hb}")
            H = hc
        elif isinstance(p, MES):
            if hx != 1 or hc != 1:
                raise DimensionError(f"shared-X,C pattern needs singleton axes, got X:{hx} C:{hc}")
            H = hb
        elif isinstance(p, MIS):
            if hb != 1 or hc != 1:
                raise DimensionError(f"shared-B,C pattern needs singleton axes, got B:{hb} C:{hc}")
            H = hx
        else:  # Grouped
            if hb != p.G or hc != p.G:
                raise DimensionError(f"grouped pattern needs {p.G} groups, got B:{hb} C:{hc}")
            H = hx
            if H % p.G:
                raise DimensionError(f"group count {p.G} must divide head count {H}")
        if self.A.shape[1] != H:
            raise DimensionError(f"A has {self.A.shape[1]} heads, pattern implies {H}")

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def H(self) -> int:
        return self.A.shape[1]

    @property
    def N(self) -> int:
        return self.B.shape[2]

    @property
    def P(self) -> int:
        return self.X.shape[2]


def _expand_axis1(arr: np.ndarray, H: int) -> np.ndarray:
    g = arr.shape[1]
    if g == H:
        return arr
    if g == 1:
        return np.broadcast_to(arr, (arr.shape[0], H) + arr.shape[2:])
    return arr[:, head_group_map(H, g), ...]


def expand_heads(inputs: SSDInputs):
    """Per-head views (X, A, B, C) with every head axis expanded to H.

    Singleton sharing expands to read-only broadcast views (no copy); grouped
    sharing gathers its groups. Values are unchanged either way.
    """
    H = inputs.H
    return (
        _expand_axis1(inputs.X, H),
        inputs.A,
        _expand_axis1(inputs.B, H),
        _expand_axis1(inputs.C, H),
    )


def _init_state(h_init, H: int, N: int, P: int) -> np.ndarray:
    if h_init is None:
        return np.zeros((H, N, P))
    h = np.array(as_array(h_init), dtype=np.float64)
    if h.shape != (H, N, P):
        raise DimensionError(f"h_init shape {h.shape}, expected ({H}, {N}, {P})")
    return h


def ssd_recurrent(inputs: SSDInputs, h_init=None, counter: OpCounter | None = None):
    """Exact per-step semantics: S <- a_t*S + B_t (x) X_t, Y_t = C_t^T S.

    Returns (Y: (T,H,P), h_final: (H,N,P)); the layer's entire memory is the
    H*N*P floats of h_final.
    """
    X, A, B, C = expand_heads(inputs)
    T, H, P = X.shape
    N = B.shape[2]
    h0 = _init_state(h_init, H, N, P)
    Y = np.empty((T, H, P))
    h_final = np.empty((H, N, P))
    for h in range(H):
        params = SSSRep(A=A[:, h], B=B[:, h, :], C=C[:, h, :])
        Y[:, h, :], h_final[h] = ssm_recurrent(params, X[:, h, :], h_init=h0[h], counter=counter)
    return Y, h_final


def ssd_quadratic(inputs: SSDInputs, counter: OpCounter | None = None) -> np.ndarray:
    """Per-head dense masked-Gram form; zero initial state by construction."""
    X, A, B, C = expand_heads(inputs)
    T, H, P = X.shape
    Y = np.empty((T, H, P))
    for h in range(H):
        params = SSSRep(A=A[:, h], B=B[:, h, :], C=C[:, h, :])
        Y[:, h, :] = scalar_identity_quadratic(params, X[:, h, :], counter=counter)
    return Y


def _decay_weights(a_c: np.ndarray, counter: OpCounter | None):
    """Per-chunk decay products: lw[t] = a_{start..t} inclusive, rw[t] = a_{t+1..end}.

    lw weights C rows against the inherited state, rw weights B rows toward
    the chunk's end state, lw[-1] is the chunk's full product d. Switches to
    log-space when any nonzero factor is below LOG_SPACE_THRESHOLD.
    """
    Q = a_c.shape[0]
    tiny = np.any((a_c > 0.0) & (a_c < LOG_SPACE_THRESHOLD))
    if tiny and np.all(a_c > 0.0):
        cl = np.cumsum(np.log(a_c))
        lw = np.exp(cl)
        rw = np.exp(cl[-1] - cl)
    else:
        # exact zeros (or healthy magnitudes): plain products; zeros poison
        # every product that spans them, which is exactly right
        lw = np.cumprod(a_c)
        rev = np.cumprod(a_c[::-1])[::-1]
        rw = np.concatenate([rev[1:], [1.0]])
    if counter is not None:
        counter.add_elementwise(2 * (Q - 1))
    return lw, rw


def ssd_blocked(
    inputs: SSDInputs,
    plan: ChunkPlan = ChunkPlan(),
    h_init=None,
    counter: OpCounter | None = None,
):
    """Chunked computation: diagonal blocks plus low-rank off-diagonal factors.

    A short final chunk (rather than padding) keeps h_final exactly equal to
    the recurrence's final state. Returns (Y, h_final) like ssd_recurrent.
    """
    X, A, B, C = expand_heads(inputs)
    T, H, P = X.shape
    N = B.shape[2]
    Q = plan.Q
    h0 = _init_state(h_init, H, N, P)

    starts = list(range(0, T, Q))
    K = len(starts)
    Y = np.empty((T, H, P))
    h_final = np.empty((H, N, P))

    for h in range(H):
        R = np.empty((K, N, P))  # per-chunk end states from zero
        weights = []
        for k, s in enumerate(starts):
            e = min(s + Q, T)
            a_c = A[s:e, h]
            lw, rw = _decay_weights(a_c, counter)
            weights.append(lw)
            # intra-chunk: quadratic form on the diagonal block
            params = SSSRep(A=a_c, B=B[s:e, h, :], C=C[s:e, h, :])
            Y[s:e, h, :] = scalar_identity_quadratic(params, X[s:e, h, :], counter=counter)
            # right factor: end state of the chunk from a zero start
            Bw = B[s:e, h, :] * rw[:, None]
            if counter is not None:
                counter.add_elementwise(Bw.size)
            R[k] = contract("MN,NK->MK", [Bw.T, X[s:e, h, :]], counter=counter)

        # center factors: chunk-level scan, d_k = full decay product of chunk
        # k; d_0 folds in the initial state exactly as the step recurrence does
        d = np.array([w[-1] for w in weights])
        states, _ = cumprodsum(d, R.reshape(K, N * P), state=h0[h].reshape(-1), counter=counter)
        states = states.reshape(K, N, P)
        h_final[h] = states[-1] if K else h0[h]

        for k, s in enumerate(starts):
            e = min(s + Q, T)
            inherited = h0[h] if k == 0 else states[k - 1]
            Cw = C[s:e, h, :] * weights[k][:, None]
            if counter is not None:
                counter.add_elementwise(Cw.size)
            # left factor: what the inherited state contributes to this chunk
            Y[s:e, h, :] += contract("QN,NP->QP", [Cw, inherited], counter=counter)

    return Y, h_final


def ssd_cost(T: int, Q: int, N: int, P: int, H: int, seed: int = 0):
    """Predicted vs measured multiply-add counts of the blocked mode.

    The prediction books, per head and chunk: Q*Q*N (Gram) + Q*Q*P (block
    multiply) + N*Q*P (right factor) + Q*N*P (left factor), plus the
    2*(T/Q - 1)*N*P chunk scan. Elementwise work (masks, decay weights) is
    not predicted; regressions gate on mul_adds.
    """
    K = -(-T // Q)
    full, rem = divmod(T, Q)
    per_chunk = lambda q: q * q * N + q * q * P + N * q * P + q * N * P
    predicted = OpCounter()
    predicted.add_mul_adds(H * (full * per_chunk(Q) + (per_chunk(rem) if rem else 0)))
    predicted.add_mul_adds(H * 2 * (K - 1) * N * P)

    rng = np.random.default_rng(seed)
    inputs = SSDInputs(
        X=rng.standard_normal((T, H, P)),
        A=rng.uniform(0.0, 1.0, (T, H)),
        B=rng.standard_normal((T, H, N)),
        C=rng.standard_normal((T, H, N)),
    )
    measured = OpCounter()
    ssd_blocked(inputs, ChunkPlan(Q=Q), counter=measured)
    return predicted, measured
