"""Structured masked attention: dual contraction orders, masks, feature maps.

Masked kernel attention is the 4-way contraction
Y[t,p] = sum_{s,n} Q[t,n] K[s,n] V[s,p] L[t,s], composed pairwise in either
of two orders:

  quadratic: G = Q K^T, M = G o L, Y = M V        (materializes T x S scores)
  linear:    Z = V  K (outer),  H = L Z, Y = Q H  (state-sized intermediate)

Both orders are the same multilinear map; when the mask L has a fast
multiply (causal cumsum, scalar decay, 1-SS scan, banded Toeplitz), the
linear order runs in time linear in T. Feature maps transform Q and K before
the contraction; normalization divides by the same linear form applied to an
appended ones column.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .scan import Sequential, cumprodsum
from .semiseparable import materialize_1ss
from .tensor import DimensionError, OpCounter, as_array, contract

__all__ = [
    "Causal",
    "Decay",
    "Toeplitz",
    "OneSS",
    "MaskSpec",
    "mask_materialize",
    "attention_quadratic",
    "attention_linear",
    "Identity",
    "Swish",
    "ReLU",
    "Elu1p",
    "Exp",
    "CosFormer",
    "RandomFourier",
    "PositiveRandomFeatures",
    "Taylor",
    "FeatureMap",
    "feature_map_apply",
    "DegenerateRowError",
    "normalized_attention",
    "kernel_approx_error",
]


# ---------------------------------------------------------------------------
# masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Causal:
    pass


@dataclass(frozen=True)
class Decay:
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"decay rate must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class Toeplitz:
    alpha: tuple[float, ...]  # alpha[d] weights offset d = t - s; alpha[0] on the diagonal

    def __init__(self, alpha):
        object.__setattr__(self, "alpha", tuple(float(v) for v in np.asarray(alpha).ravel()))


@dataclass(frozen=True)
class OneSS:
    a: tuple[float, ...]

    def __init__(self, a):
        arr = a.a if hasattr(a, "a") and not isinstance(a, np.ndarray) else a
        object.__setattr__(self, "a", tuple(float(v) for v in np.asarray(arr).ravel()))


MaskSpec = Causal | Decay | Toeplitz | OneSS


def mask_materialize(spec: MaskSpec, T: int) -> np.ndarray:
    """Dense (T, T) lower-triangular mask."""
    if isinstance(spec, Causal):
        return np.tril(np.ones((T, T)))
    if isinstance(spec, Decay):
        i, j = np.indices((T, T))
        return np.where(i >= j, spec.gamma ** (i - j).astype(np.float64), 0.0)
    if isinstance(spec, Toeplitz):
        alpha = np.asarray(spec.alpha)
        if alpha.shape[0] != T:
            raise DimensionError(f"Toeplitz mask needs {T} coefficients, got {alpha.shape[0]}")
        i, j = np.indices((T, T))
        return np.where(i >= j, alpha[np.maximum(i - j, 0)], 0.0)
    if isinstance(spec, OneSS):
        a = np.asarray(spec.a)
        if a.shape[0] != T:
            raise DimensionError(f"1-SS mask needs {T} coefficients, got {a.shape[0]}")
        return materialize_1ss(a)
    raise TypeError(f"unknown mask spec {spec!r}")


def _check_qkv(Q, K, V) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Q, K, V = as_array(Q), as_array(K), as_array(V)
    if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
        raise DimensionError("Q, K, V must be matrices (T,N), (S,N), (S,P)")
    if Q.shape[1] != K.shape[1]:
        raise DimensionError(f"axis N: Q has {Q.shape[1]}, K has {K.shape[1]}")
    if K.shape[0] != V.shape[0]:
        raise DimensionError(f"axis S: K has {K.shape[0]}, V has {V.shape[0]}")
    if Q.shape[0] != K.shape[0]:
        # every supported mask is causal-shaped, so time axes must align
        raise DimensionError(f"masked attention needs S == T, got {K.shape[0]} != {Q.shape[0]}")
    return Q, K, V


def attention_quadratic(Q, K, V, spec: MaskSpec, counter: OpCounter | None = None):
    """Score-materializing order: Y = ((Q K^T) o L) V."""
    Q, K, V = _check_qkv(Q, K, V)
    T = Q.shape[0]
    G = contract("TN,SN->TS", [Q, K], counter=counter)
    L = mask_materialize(spec, T)
    M = contract("TS,TS->TS", [G, L], counter=counter)
    return contract("TS,SP->TP", [M, V], counter=counter)


def _mask_multiply(spec: MaskSpec, Z: np.ndarray, counter: OpCounter | None) -> np.ndarray:
    """H = L Z using the mask's fast multiply; Z is (T, C)."""
    T, C = Z.shape
    if isinstance(spec, Causal):
        if counter is not None:
            counter.add_mul_adds((T - 1) * C)
        return np.cumsum(Z, axis=0)
    if isinstance(spec, Decay):
        h, _ = cumprodsum(np.full(T, spec.gamma), Z, alg=Sequential(), counter=counter)
        return h
    if isinstance(spec, OneSS):
        h, _ = cumprodsum(np.asarray(spec.a), Z, alg=Sequential(), counter=counter)
        return h
    if isinstance(spec, Toeplitz):
        alpha = np.asarray(spec.alpha)
        if alpha.shape[0] != T:
            raise DimensionError(f"Toeplitz mask needs {T} coefficients, got {alpha.shape[0]}")
        support = np.flatnonzero(alpha)
        band = int(support[-1]) + 1 if support.size else 0
        if band > max(T // 2, 1):
            warnings.warn(
                "Toeplitz mask has dense support; linear-order multiply degrades to O(T^2)",
                stacklevel=3,
            )
        H = np.zeros_like(Z)
        for d in support:
            H[d:] += alpha[d] * Z[: T - d]
            if counter is not None:
                counter.add_mul_adds(2 * (T - d) * C)
        return H
    raise TypeError(f"unknown mask spec {spec!r}")


def attention_linear(Q, K, V, spec: MaskSpec, counter: OpCounter | None = None):
    """State-sized order: expand V against K, mask-multiply over time, contract with Q.

    For causal masks this is Y = Q cumsum(K^T V); for decay/1-SS masks the
    cumsum becomes the scalar scan. Work grows linearly in T for these masks.
    """
    Q, K, V = _check_qkv(Q, K, V)
    T, N = Q.shape
    P = V.shape[1]
    Z = contract("SP,SN->SPN", [V, K], counter=counter)
    H = _mask_multiply(spec, Z.reshape(T, P * N), counter).reshape(T, P, N)
    return contract("TN,TPN->TP", [Q, H], counter=counter)


# ---------------------------------------------------------------------------
# feature maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Swish:
    beta: float = 1.0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Elu1p:
    pass


@dataclass(frozen=True)
class Exp:
    pass


@dataclass(frozen=True)
class CosFormer:
    """Position-weighted split x -> (x cos(pi t / 2T), x sin(pi t / 2T))."""

    length: int


@dataclass(frozen=True)
class RandomFourier:
    """cos/sin of seeded Gaussian projections, rescaled to estimate exp(q.k)."""

    m: int
    seed: int = 0


@dataclass(frozen=True)
class PositiveRandomFeatures:
    """2^(-1/2) (exp(w.x), exp(-w.x)) pairs; strictly positive features."""

    m: int
    seed: int = 0


@dataclass(frozen=True)
class Taylor:
    """(1, x, x (x) x / sqrt(2)): second-order expansion of exp(q.k)."""


FeatureMap = (
    Identity
    | Swish
    | ReLU
    | Elu1p
    | Exp
    | CosFormer
    | RandomFourier
    | PositiveRandomFeatures
    | Taylor
)


def _projection(n: int, m: int, seed: int) -> np.ndarray:
    # unit Gaussian directions; the variance convention that makes both
    # estimators below unbiased for exp(q.k) at unit scale
    return np.random.default_rng(seed).standard_normal((n, m))


def feature_map_apply(fm: FeatureMap, X) -> np.ndarray:
    """Apply a feature map row-wise to X of shape (T, n)."""
    X = as_array(X)
    if X.ndim != 2:
        raise DimensionError(f"feature maps take (T, n) inputs, got {X.shape}")
    T, n = X.shape

    if isinstance(fm, Identity):
        return X.copy()
    if isinstance(fm, Swish):
        return X / (1.0 + np.exp(-fm.beta * X))
    if isinstance(fm, ReLU):
        return np.maximum(X, 0.0)
    if isinstance(fm, Elu1p):
        return np.where(X > 0.0, X + 1.0, np.exp(np.minimum(X, 0.0)))
    if isinstance(fm, Exp):
        return np.exp(X)
    if isinstance(fm, CosFormer):
        if T > fm.length:
            raise DimensionError(f"cosFormer map built for length {fm.length}, got {T} rows")
        t = np.arange(T)
        theta = np.pi * t / (2.0 * fm.length)
        return np.concatenate([X * np.cos(theta)[:, None], X * np.sin(theta)[:, None]], axis=1)
    if isinstance(fm, RandomFourier):
        W = _projection(n, fm.m, fm.seed)
        proj = X @ W
        # exp(|x|^2/2) * sqrt(1/m) * (cos, sin) makes E[phi(q).phi(k)] = exp(q.k)
        prefac = np.exp(0.5 * np.sum(X * X, axis=1, keepdims=True)) / np.sqrt(fm.m)
        return prefac * np.concatenate([np.cos(proj), np.sin(proj)], axis=1)
    if isinstance(fm, PositiveRandomFeatures):
        W = _projection(n, fm.m, fm.seed)
        proj = X @ W
        # exp(-|x|^2/2) / sqrt(2m) * (exp, exp(-)) is unbiased for exp(q.k)
        # and strictly positive; each pair is 2^(-1/2)(exp(w.x), exp(-w.x))
        prefac = np.exp(-0.5 * np.sum(X * X, axis=1, keepdims=True)) / np.sqrt(2.0 * fm.m)
        return prefac * np.concatenate([np.exp(proj), np.exp(-proj)], axis=1)
    if isinstance(fm, Taylor):
        ones = np.ones((T, 1))
        quad = (X[:, :, None] * X[:, None, :]).reshape(T, n * n) / np.sqrt(2.0)
        return np.concatenate([ones, X, quad], axis=1)
    raise TypeError(f"unknown feature map {fm!r}")


# ---------------------------------------------------------------------------
# normalization and kernel quality
# ---------------------------------------------------------------------------


class DegenerateRowError(ValueError):
    """A normalization denominator vanished; carries the offending row."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"attention row {row} has zero normalization mass")


def normalized_attention(
    Q, K, V, spec: MaskSpec, fm: FeatureMap = Identity(), counter: OpCounter | None = None
):
    """Kernel attention with rows of the implied score matrix summing to one.

    Q and K pass through the feature map; V gains an appended ones column so
    one linear-order pass yields numerator and denominator together.
    """
    Q, K, V = as_array(Q), as_array(K), as_array(V)
    Qf = feature_map_apply(fm, Q)
    Kf = feature_map_apply(fm, K)
    V_aug = np.concatenate([V, np.ones((V.shape[0], 1))], axis=1)
    out = attention_linear(Qf, Kf, V_aug, spec, counter=counter)
    den = out[:, -1]
    bad = np.flatnonzero(den == 0.0)
    if bad.size:
        raise DegenerateRowError(int(bad[0]))
    return out[:, :-1] / den[:, None]


def kernel_approx_error(fm: FeatureMap, m_grid, Q, K) -> np.ndarray:
    """Mean |phi(Q) phi(K)^T - exp(Q K^T)| for each feature count in m_grid.

    fm fixes the estimator family and base seed; only m varies.
    """
    if not isinstance(fm, (RandomFourier, PositiveRandomFeatures)):
        raise TypeError("approximation error is defined for the random-feature maps")
    Q, K = as_array(Q), as_array(K)
    target = np.exp(Q @ K.T)
    errs = []
    for m in m_grid:
        probe = type(fm)(m=int(m), seed=fm.seed)
        approx = feature_map_apply(probe, Q) @ feature_map_apply(probe, K).T
        errs.append(float(np.mean(np.abs(approx - target))))
    return np.asarray(errs)
