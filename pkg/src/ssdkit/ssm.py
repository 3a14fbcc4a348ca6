"""Selective state-space sequence transformations with structured transitions.

The recurrence h_t = A_t h_{t-1} + B_t x_t, y_t = C_t^T h_t is computed four
ways, all provably (and testably) the same map:

  - ssm_recurrent: the recurrence itself; touches exactly N*P state floats.
  - ssm_diagonal_contraction: for diagonal A, expand inputs against B, run
    one scalar scan per state coordinate, contract against C.
  - ssm_matrix_mode: materialize the semiseparable matrix and multiply.
  - scalar_identity_quadratic: for scalar A_t = a_t * I, the masked-Gram form
    (1-SS mask Hadamard C B^T) applied to X.

The last one is the bridge to masked kernel attention: with (Q, K, V) read as
(C, B, X) it is literally the quadratic attention computation.
"""

from __future__ import annotations

import numpy as np

from .scan import ScanAlgorithm, Sequential, cumprodsum
from .semiseparable import SSSRep, materialize_1ss, materialize_sss
from .tensor import DimensionError, OpCounter, as_array, contract

__all__ = [
    "ssm_recurrent",
    "ssm_diagonal_contraction",
    "ssm_matrix_mode",
    "scalar_identity_quadratic",
]


def _normalize_x(X, T: int) -> tuple[np.ndarray, bool]:
    X = as_array(X)
    if X.shape[0] != T:
        raise DimensionError(f"X has {X.shape[0]} steps, parameters have {T}")
    if X.ndim == 1:
        return X[:, None], True
    if X.ndim == 2:
        return X, False
    raise DimensionError(f"X must be (T,) or (T, P), got {X.shape}")


def ssm_recurrent(
    params: SSSRep,
    X,
    h_init: np.ndarray | None = None,
    counter: OpCounter | None = None,
):
    """Run the recurrence step by step; returns (Y, h_final).

    h_init (N, P) is the state h_{-1}; it enters through A_0 at t=0. The
    returned h_final holds the recurrence's entire memory: N*P floats.
    """
    T, N = params.B.shape
    X, squeeze = _normalize_x(X, T)
    P = X.shape[1]

    h = np.zeros((N, P)) if h_init is None else np.array(h_init, dtype=np.float64)
    if h.shape != (N, P):
        raise DimensionError(f"h_init shape {h.shape}, expected ({N}, {P})")

    scalar = params.a_form == "scalar"
    diag = params.a_form == "diagonal"
    Y = np.empty((T, P))
    for t in range(T):
        if scalar:
            h = params.A[t] * h + np.outer(params.B[t], X[t])
        elif diag:
            h = params.A[t][:, None] * h + np.outer(params.B[t], X[t])
        else:
            h = params.A[t] @ h + np.outer(params.B[t], X[t])
        Y[t] = params.C[t] @ h
    if counter is not None:
        per_step = (N * N * P if params.a_form == "dense" else N * P) + 3 * N * P
        counter.add_mul_adds(T * per_step)

    if squeeze:
        Y = Y[:, 0]
    return Y, h


def ssm_diagonal_contraction(
    params: SSSRep,
    X,
    counter: OpCounter | None = None,
    scan_alg: ScanAlgorithm = Sequential(),
):
    """Three-step contraction form for diagonal (or scalar) transitions.

    Expand Z[s,p,n] = X[s,p] * B[s,n]; scan each state coordinate n over time
    with multipliers A[:, n]; contract Y[t,p] = sum_n C[t,n] * H[t,p,n].
    The middle step is the only sequential-in-T part and is a 1-SS multiply,
    so any scan algorithm may serve.
    """
    if params.a_form == "dense":
        raise DimensionError("contraction mode requires scalar or diagonal A")
    T, N = params.B.shape
    X, squeeze = _normalize_x(X, T)

    A = params.A[:, None].repeat(N, axis=1) if params.a_form == "scalar" else params.A

    Z = contract("SP,SN->SPN", [X, params.B], counter=counter)
    H = np.empty_like(Z)
    for n in range(N):
        H[:, :, n], _ = cumprodsum(A[:, n], Z[:, :, n], alg=scan_alg, counter=counter)
    Y = contract("TN,TPN->TP", [params.C, H], counter=counter)

    if squeeze:
        Y = Y[:, 0]
    return Y


def ssm_matrix_mode(
    params: SSSRep,
    X,
    counter: OpCounter | None = None,
):
    """Materialize the semiseparable matrix, then one dense multiply."""
    T = params.B.shape[0]
    X, squeeze = _normalize_x(X, T)
    M = materialize_sss(params, counter=counter)
    Y = contract("TS,SP->TP", [M, X], counter=counter)
    if squeeze:
        Y = Y[:, 0]
    return Y


def scalar_identity_quadratic(
    params: SSSRep,
    X,
    counter: OpCounter | None = None,
):
    """Masked-Gram form for scalar transitions: Y = (L o C B^T) X.

    L is the 1-SS mask of the decay coefficients. Identical, contraction for
    contraction, to quadratic masked kernel attention with Q := C, K := B,
    V := X.
    """
    if params.a_form != "scalar":
        raise DimensionError("quadratic scalar-identity mode requires scalar A")
    T = params.B.shape[0]
    X, squeeze = _normalize_x(X, T)

    L = materialize_1ss(params.A, counter=counter)
    G = contract("TN,SN->TS", [params.C, params.B], counter=counter)
    M = contract("TS,TS->TS", [G, L], counter=counter)
    Y = contract("TS,SP->TP", [M, X], counter=counter)
    if squeeze:
        Y = Y[:, 0]
    return Y
