"""Verification suites, op-count grids, and report plumbing for the CLI.

Design notes:
  * op-counts gate every asymptotic claim; wall times are informational and
    never decide pass/fail (they are hardware noise).
  * verification reports zero out wall_ns so a fixed seed gives byte-identical
    bytes across runs; bench reports carry measured times unless wall=False.
  * suites run in registry order, single thread, so the report is reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .architecture import (
    GROUPNORM_EPS,
    Communicator,
    MessageChannel,
    init_block_weights,
    make_shard_plan,
    mamba2_block_forward,
    sp_forward,
    tp_forward,
    varlen_forward,
)
from .scan import (
    AssociativeScan,
    BlockDecomposition,
    Dilated,
    Sequential,
    StatePassing,
    cumprodsum,
)
from .semiseparable import SSSRep, ar_to_ssm, closure_check, lower_rank_profile, materialize_sss
from .semiseparable import BandedLower
from .sma import (
    Causal,
    Decay,
    Exp,
    OneSS,
    PositiveRandomFeatures,
    RandomFourier,
    attention_linear,
    attention_quadratic,
    kernel_approx_error,
    normalized_attention,
)
from .ssd import ChunkPlan, Grouped, SSDInputs, ssd_blocked, ssd_cost, ssd_quadratic, ssd_recurrent
from .ssm import scalar_identity_quadratic
from .tensor import ConfigurationError, OpCounter, max_rel_err

DTYPES = ("f32", "f64")
FORMATS = ("json", "csv")
CSV_HEADER = ("case", "params", "max_rel_err", "mul_adds", "wall_ns", "status")

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ssdkit report",
    "type": "object",
    "required": ["seed", "dtype", "cases"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "dtype": {"enum": list(DTYPES)},
        "cases": {
            "type": "array",
            "items": {
                "type": "object",
                "required": list(CSV_HEADER),
                "additionalProperties": False,
                "properties": {
                    "case": {"type": "string"},
                    "params": {"type": "object"},
                    "max_rel_err": {"type": "number"},
                    "mul_adds": {"type": "integer", "minimum": 0},
                    "wall_ns": {"type": "integer", "minimum": 0},
                    "status": {"enum": ["pass", "fail"]},
                },
            },
        },
    },
}


@dataclass
class BenchConfig:
    """Shared knobs for verify, bench, and table runs."""

    seed: int = 0
    dtype: str = "f64"
    t_grid: tuple = (64, 128, 256, 512)
    n_values: tuple = (8,)
    p_values: tuple = (8,)
    q_values: tuple = (16,)
    h_values: tuple = (2,)
    algorithms: tuple = ("scan_sequential", "ssd_recurrent", "ssd_blocked", "attention_quadratic")
    suites: tuple | None = None
    repetitions: int = 1
    wall: bool = True
    inject_fault: bool = False
    out: str | None = None
    fmt: str = "json"

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        if self.fmt not in FORMATS:
            raise ConfigurationError(f"format must be one of {FORMATS}, got {self.fmt!r}")
        for name in ("t_grid", "n_values", "p_values", "q_values", "h_values"):
            grid = tuple(int(v) for v in getattr(self, name))
            if not grid:
                raise ConfigurationError(f"{name} is empty")
            if min(grid) < 1:
                raise ConfigurationError(f"{name} entries must be >= 1, got {grid}")
            setattr(self, name, grid)
        if int(self.repetitions) < 1:
            raise ConfigurationError(f"repetitions must be >= 1, got {self.repetitions}")
        self.repetitions = int(self.repetitions)
        self.algorithms = tuple(self.algorithms)
        unknown = [a for a in self.algorithms if a not in BENCH_ALGORITHMS]
        if unknown:
            raise ConfigurationError(
                f"unknown algorithms {unknown}; choose from {sorted(BENCH_ALGORITHMS)}"
            )
        if self.suites is not None:
            self.suites = tuple(self.suites)
            missing = [s for s in self.suites if s not in SUITES]
            if missing:
                raise ConfigurationError(
                    f"unknown suites {missing}; choose from {list(SUITES)}"
                )

    def tol(self, f64_tol: float) -> float:
        return 1e-4 if self.dtype == "f32" else f64_tol

    def cast(self, arr: np.ndarray) -> np.ndarray:
        return arr.astype(np.float32) if self.dtype == "f32" else arr


@dataclass
class Report:
    seed: int
    dtype: str
    cases: list = field(default_factory=list)

    def __post_init__(self):
        ids = [c["case"] for c in self.cases]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate case ids in report: {dupes}")

    @property
    def passed(self) -> bool:
        return all(c["status"] == "pass" for c in self.cases)

    @property
    def failures(self) -> list:
        return [c for c in self.cases if c["status"] != "pass"]

    def families(self) -> list:
        seen = []
        for c in self.cases:
            fam = c["case"].split(":", 1)[0]
            if fam not in seen:
                seen.append(fam)
        return seen

    def to_json(self) -> str:
        payload = {"seed": self.seed, "dtype": self.dtype, "cases": self.cases}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for c in self.cases:
            writer.writerow(
                [
                    c["case"],
                    json.dumps(c["params"], sort_keys=True),
                    repr(c["max_rel_err"]),
                    c["mul_adds"],
                    c["wall_ns"],
                    c["status"],
                ]
            )
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def _case(name, params, err, tol, mul_adds=0, wall_ns=0, ok=None):
    """Build one report record; ok overrides the tolerance check when given."""
    status = (err <= tol) if ok is None else bool(ok)
    return {
        "case": name,
        "params": dict(params),
        "max_rel_err": float(err),
        "mul_adds": int(mul_adds),
        "wall_ns": int(wall_ns),
        "status": "pass" if status else "fail",
    }


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of log(ys) against log(xs); needs >= 4 grid points."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 4:
        raise ConfigurationError(f"exponent fit needs >= 4 grid points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ConfigurationError("exponent fit needs positive grid values and counts")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------


def _ssd_case(rng, T, H, N, P) -> SSDInputs:
    return SSDInputs(
        X=rng.standard_normal((T, H, P)),
        A=rng.uniform(0.0, 1.0, (T, H)),
        B=rng.standard_normal((T, H, N)),
        C=rng.standard_normal((T, H, N)),
    )


def _suite_scan(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed)
    tol = cfg.tol(1e-12)
    cases = []
    algs = [AssociativeScan(), Dilated(), StatePassing(), BlockDecomposition()]
    first = True
    for T in (1, 2, 3, 7, 64, 300):
        a = cfg.cast(rng.uniform(0.0, 1.0, T))
        b = cfg.cast(rng.standard_normal(T))
        ref, ref_final = cumprodsum(a, b)
        for alg in algs:
            counter = OpCounter()
            h, h_final = cumprodsum(a, b, alg=alg, counter=counter)
            if first and cfg.inject_fault:
                h = h + 1e-6  # deliberate corruption for the negative control
                first = False
            err = max(max_rel_err(h, ref), max_rel_err(h_final, ref_final))
            name = f"scan:{type(alg).__name__}:T{T}"
            cases.append(_case(name, {"T": T}, err, tol, counter.mul_adds))
    return cases


def _suite_ssd(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 1)
    tol = cfg.tol(1e-10)
    cases = []
    for T in (16, 33, 64):
        inputs = _ssd_case(rng, T, H=2, N=4, P=4)
        ref, ref_final = ssd_recurrent(inputs)
        quad = ssd_quadratic(inputs)
        cases.append(
            _case(f"ssd:quadratic:T{T}", {"T": T}, max_rel_err(quad, ref), tol)
        )
        for Q in (1, 8, T):
            counter = OpCounter()
            y, h_final = ssd_blocked(inputs, ChunkPlan(Q=Q), counter=counter)
            err = max(max_rel_err(y, ref), max_rel_err(h_final, ref_final))
            cases.append(
                _case(f"ssd:blocked-Q{Q}:T{T}", {"T": T, "Q": Q}, err, tol, counter.mul_adds)
            )
    return cases


def _suite_duality(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 2)
    tol = cfg.tol(1e-12)
    cases = []
    for i in range(8):
        T, N, P = 24, 3, 2
        a = cfg.cast(rng.uniform(0.0, 1.0, T))
        B = cfg.cast(rng.standard_normal((T, N)))
        C = cfg.cast(rng.standard_normal((T, N)))
        X = cfg.cast(rng.standard_normal((T, P)))
        ssm_side = scalar_identity_quadratic(SSSRep(A=a, B=B, C=C), X)
        attn_side = attention_quadratic(C, B, X, OneSS(a=tuple(float(v) for v in a)))
        cases.append(_case(f"duality:seed{i}", {"T": T, "N": N}, max_rel_err(ssm_side, attn_side), tol))
    return cases


def _suite_attention(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 3)
    tol = cfg.tol(1e-12)
    cases = []
    for i in range(5):
        T, N, P = 20, 4, 3
        Q = cfg.cast(rng.standard_normal((T, N)))
        K = cfg.cast(rng.standard_normal((T, N)))
        V = cfg.cast(rng.standard_normal((T, P)))
        masks = {
            "causal": Causal(),
            "decay": Decay(gamma=float(rng.uniform(0.1, 1.0))),
            "oness": OneSS(a=tuple(rng.uniform(0.0, 1.0, T))),
        }
        for label, mask in masks.items():
            err = max_rel_err(
                attention_linear(Q, K, V, mask), attention_quadratic(Q, K, V, mask)
            )
            cases.append(_case(f"attention:{label}:seed{i}", {"T": T, "mask": label}, err, tol))
    return cases


def _suite_rank(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 4)
    cases = []
    for N in (1, 2, 4):
        worst = 0
        for _ in range(8):
            T = 12
            rep = SSSRep(
                A=rng.uniform(0.0, 1.0, (T, N)),
                B=rng.standard_normal((T, N)),
                C=rng.standard_normal((T, N)),
            )
            worst = max(worst, lower_rank_profile(materialize_sss(rep)))
        cases.append(
            _case(f"rank:order{N}", {"N": N, "max_profile": worst}, 0.0, 1.0, ok=worst <= N)
        )
    return cases


def _suite_closure(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 5)
    cases = []
    T, N, P = 10, 2, 2

    def rep(order):
        return SSSRep(
            A=rng.uniform(0.0, 1.0, (T, order)),
            B=rng.standard_normal((T, order)),
            C=rng.standard_normal((T, order)),
        )

    worst_sum = worst_prod = worst_inv = 0
    for _ in range(8):
        worst_sum = max(worst_sum, closure_check("sum", rep(N), rep(P)))
        worst_prod = max(worst_prod, closure_check("product", rep(N), rep(P)))
        a = rng.uniform(0.5, 1.0, T)
        inv_profile = closure_check("inverse", 0.5 + a)
        worst_inv = max(worst_inv, inv_profile)
    cases.append(_case("closure:sum", {"bound": N + P, "max_profile": worst_sum}, 0.0, 1.0, ok=worst_sum <= N + P))
    cases.append(_case("closure:product", {"bound": N + P, "max_profile": worst_prod}, 0.0, 1.0, ok=worst_prod <= N + P))
    cases.append(_case("closure:inverse", {"bound": 1, "max_profile": worst_inv}, 0.0, 1.0, ok=worst_inv <= 1))
    return cases


def _suite_ar(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 6)
    cases = []
    T = 10
    for k in range(4):
        worst = 0
        for _ in range(6):
            coeffs = 0.5 * rng.standard_normal((T, k)) if k else np.zeros((T, 0))
            band = BandedLower(coeffs=coeffs, mu=rng.uniform(0.5, 1.5, T))
            worst = max(worst, ar_to_ssm(band).profile)
        cases.append(
            _case(f"ar:k{k}", {"k": k, "bound": k + 1, "max_profile": worst}, 0.0, 1.0, ok=worst <= k + 1)
        )
    return cases


def _suite_normalization(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 7)
    tol = cfg.tol(1e-12)
    cases = []
    for i in range(8):
        T, n = 16, 3
        Q = cfg.cast(rng.standard_normal((T, n)))
        K = cfg.cast(rng.standard_normal((T, n)))
        rows = normalized_attention(Q, K, np.eye(T), Causal(), fm=Exp())
        err = float(np.max(np.abs(rows.sum(axis=1) - 1.0)))
        cases.append(_case(f"normalization:seed{i}", {"T": T}, err, tol))
    return cases


def _suite_kernels(cfg: BenchConfig) -> list:
    rng = np.random.default_rng(cfg.seed + 8)
    cases = []
    seeds = 10
    for family, make in (("prf", PositiveRandomFeatures), ("rfa", RandomFourier)):
        wins = 0
        for i in range(seeds):
            Q = rng.standard_normal((20, 4))
            K = rng.standard_normal((20, 4))
            Q /= np.linalg.norm(Q, axis=1, keepdims=True)
            K /= np.linalg.norm(K, axis=1, keepdims=True)
            errs = kernel_approx_error(make(m=1, seed=cfg.seed + i), (1, 64), Q, K)
            wins += bool(errs[1] < errs[0])
        ok = wins >= int(np.ceil(0.9 * seeds))
        cases.append(
            _case(f"kernels:{family}", {"m_lo": 1, "m_hi": 64, "wins": wins, "seeds": seeds}, 0.0, 1.0, ok=ok)
        )
    return cases


def _suite_parallel(cfg: BenchConfig) -> list:
    tol = cfg.tol(1e-12)
    cases = []
    for i in range(4):
        rng = np.random.default_rng(cfg.seed + 9 + i)
        weights = init_block_weights(d=8, heads=4, state=3, groups=4, norm_groups=4, seed=cfg.seed + i)
        if cfg.dtype == "f32":
            for name in ("w_x", "w_z", "w_dbc", "conv", "a_base", "gn_scale", "gn_shift", "w_o"):
                setattr(weights, name, getattr(weights, name).astype(np.float32))
        u = cfg.cast(rng.standard_normal((24, weights.d)))
        ref = mamba2_block_forward(weights, u)

        comm = Communicator()
        tp = tp_forward(weights, make_shard_plan(weights, 2), u, comm=comm)
        cases.append(
            _case(
                f"parallel:tp:seed{i}",
                {"shards": 2, "all_reduces": comm.all_reduces},
                max_rel_err(tp, ref),
                tol,
                ok=max_rel_err(tp, ref) <= tol and comm.all_reduces == 1,
            )
        )

        channel = MessageChannel()
        sp = sp_forward(weights, 3, u, channel=channel)
        cases.append(
            _case(
                f"parallel:sp:seed{i}",
                {"workers": 3, "messages": channel.messages},
                max_rel_err(sp, ref),
                tol,
                ok=max_rel_err(sp, ref) <= tol and channel.messages == 2,
            )
        )

        seqs = [u[:9], u[9:]]
        parts = varlen_forward(weights, seqs)
        err = max(
            max_rel_err(parts[0], mamba2_block_forward(weights, seqs[0])),
            max_rel_err(parts[1], mamba2_block_forward(weights, seqs[1])),
        )
        cases.append(_case(f"parallel:varlen:seed{i}", {"lengths": [9, 15]}, err, tol))
    return cases


def _suite_cost(cfg: BenchConfig) -> list:
    cases = []
    counter = OpCounter()
    rng = np.random.default_rng(cfg.seed + 20)
    cumprodsum(rng.uniform(0.0, 1.0, 1024), rng.standard_normal(1024), counter=counter)
    cases.append(
        _case(
            "cost:sequential-exact",
            {"T": 1024, "mul_adds": counter.mul_adds, "expected": 2046},
            0.0,
            1.0,
            counter.mul_adds,
            ok=counter.mul_adds == 2046,
        )
    )

    grids = {
        "blocked-T": ([128, 256, 512, 1024], lambda T: ssd_cost(T, 16, 8, 8, 1)[1].mul_adds, 1.0),
        "quadratic-T": ([32, 64, 128, 256], lambda T: _quadratic_ops(T, 4, 4), 2.0),
        "state-N": ([4, 8, 16, 32], lambda n: ssd_cost(64, n, n, n, 1)[1].mul_adds, 2.0),
    }
    for label, (grid, measure, target) in grids.items():
        slope = fit_exponent(grid, [measure(v) for v in grid])
        ok = abs(slope - target) <= 0.15
        cases.append(
            _case(
                f"cost:{label}",
                {"grid": grid, "slope": round(slope, 4), "target": target},
                0.0,
                1.0,
                ok=ok,
            )
        )
    return cases


def _quadratic_ops(T: int, N: int, P: int) -> int:
    rng = np.random.default_rng(0)
    counter = OpCounter()
    ssd_quadratic(_ssd_case(rng, T, 1, N, P), counter=counter)
    return counter.mul_adds


def _block_reference(weights, u):
    """Stagewise replay of the block with ssd_recurrent as the inner engine."""
    T, H, N, G = u.shape[0], weights.heads, weights.state, weights.groups
    x = u @ weights.w_x
    z = u @ weights.w_z
    dbc = u @ weights.w_dbc
    a = np.exp(np.logaddexp(0.0, dbc[:, :H]) * weights.a_base)
    xc = np.zeros_like(x)
    for k in range(weights.conv_width):
        shift = weights.conv_width - 1 - k
        xc[shift:] += x[: T - shift] * weights.conv[:, k]
    inner, _ = ssd_recurrent(
        SSDInputs(
            X=xc.reshape(T, H, weights.P),
            A=a,
            B=dbc[:, H : H + G * N].reshape(T, G, N),
            C=dbc[:, H + G * N :].reshape(T, G, N),
            pattern=Grouped(G=G),
        )
    )
    y = inner.reshape(T, weights.ed) * (z / (1.0 + np.exp(-z)))
    v = y.reshape(T, weights.norm_groups, weights.ed // weights.norm_groups)
    yn = (v - v.mean(2, keepdims=True)) / np.sqrt(v.var(2, keepdims=True) + GROUPNORM_EPS)
    return (yn.reshape(T, weights.ed) * weights.gn_scale + weights.gn_shift) @ weights.w_o


def _suite_block(cfg: BenchConfig) -> list:
    tol = cfg.tol(1e-12)
    cases = []
    for i in range(3):
        rng = np.random.default_rng(cfg.seed + 30 + i)
        weights = init_block_weights(d=8, heads=2, state=4, groups=2, norm_groups=2, seed=cfg.seed + i)
        u = rng.standard_normal((12, weights.d))
        err = max_rel_err(mamba2_block_forward(weights, u), _block_reference(weights, u))
        cases.append(_case(f"block:seed{i}", {"T": 12, "d": 8}, err, tol))
    return cases


SUITES = {
    "scan": _suite_scan,
    "ssd": _suite_ssd,
    "duality": _suite_duality,
    "attention": _suite_attention,
    "rank": _suite_rank,
    "closure": _suite_closure,
    "ar": _suite_ar,
    "normalization": _suite_normalization,
    "kernels": _suite_kernels,
    "parallel": _suite_parallel,
    "cost": _suite_cost,
    "block": _suite_block,
}


def run_verify(cfg: BenchConfig) -> Report:
    """Run the registered invariant suites in fixed order."""
    names = cfg.suites if cfg.suites is not None else tuple(SUITES)
    cases = []
    for name in names:
        cases.extend(SUITES[name](cfg))
    return Report(seed=cfg.seed, dtype=cfg.dtype, cases=cases)


# ---------------------------------------------------------------------------
# bench grids
# ---------------------------------------------------------------------------


def _bench_dims(cfg: BenchConfig):
    return cfg.n_values[0], cfg.p_values[0], cfg.q_values[0], cfg.h_values[0]


def _run_scan(alg):
    def run(cfg, T, rng, counter):
        a = rng.uniform(0.0, 1.0, T)
        b = rng.standard_normal(T)
        cumprodsum(a, b, alg=alg, counter=counter)
        return {"T": T}

    return run


def _run_ssd(mode):
    def run(cfg, T, rng, counter):
        N, P, Q, H = _bench_dims(cfg)
        inputs = _ssd_case(rng, T, H, N, P)
        if mode == "recurrent":
            ssd_recurrent(inputs, counter=counter)
        elif mode == "quadratic":
            ssd_quadratic(inputs, counter=counter)
        else:
            ssd_blocked(inputs, ChunkPlan(Q=min(Q, T)), counter=counter)
        return {"T": T, "N": N, "P": P, "H": H, **({"Q": min(Q, T)} if mode == "blocked" else {})}

    return run


def _run_attention(kind):
    def run(cfg, T, rng, counter):
        N, P, _, _ = _bench_dims(cfg)
        Q = rng.standard_normal((T, N))
        K = rng.standard_normal((T, N))
        V = rng.standard_normal((T, P))
        fn = attention_quadratic if kind == "quadratic" else attention_linear
        fn(Q, K, V, Causal(), counter=counter)
        return {"T": T, "N": N, "P": P}

    return run


def _run_state(cfg, n, rng, counter):
    # N = P = Q sweep at fixed T: the state-size scaling regime
    T = cfg.t_grid[0]
    inputs = _ssd_case(rng, T, 1, n, n)
    ssd_blocked(inputs, ChunkPlan(Q=min(n, T)), counter=counter)
    return {"T": T, "N": n, "P": n, "Q": min(n, T)}


BENCH_ALGORITHMS = {
    "scan_sequential": ("T", _run_scan(Sequential())),
    "scan_associative": ("T", _run_scan(AssociativeScan())),
    "ssd_recurrent": ("T", _run_ssd("recurrent")),
    "ssd_quadratic": ("T", _run_ssd("quadratic")),
    "ssd_blocked": ("T", _run_ssd("blocked")),
    "attention_quadratic": ("T", _run_attention("quadratic")),
    "attention_linear": ("T", _run_attention("linear")),
    "ssd_state": ("N", _run_state),
}


def run_bench(cfg: BenchConfig) -> Report:
    """Measure op-counts (and optionally wall time) over the configured grids."""
    cases = []
    for alg in cfg.algorithms:
        axis, runner = BENCH_ALGORITHMS[alg]
        grid = cfg.t_grid if axis == "T" else cfg.n_values
        for value in grid:
            counter = OpCounter()
            params = runner(cfg, value, np.random.default_rng(cfg.seed), counter)
            wall = 0
            if cfg.wall:
                best = None
                for _ in range(cfg.repetitions):
                    scratch = OpCounter()
                    t0 = time.perf_counter_ns()
                    runner(cfg, value, np.random.default_rng(cfg.seed), scratch)
                    dt = time.perf_counter_ns() - t0
                    best = dt if best is None else min(best, dt)
                wall = best
            cases.append(
                _case(f"bench:{alg}:{axis}{value}", params, 0.0, 1.0, counter.mul_adds, wall)
            )
    return Report(seed=cfg.seed, dtype=cfg.dtype, cases=cases)


# ---------------------------------------------------------------------------
# comparison table
# ---------------------------------------------------------------------------

TABLE_ROWS = (
    # mode, state size, training cost, bench algorithm, expected T exponent
    ("attention", "T", "T^2 N", "attention_quadratic", 2.0),
    ("ssm-linear", "N", "T N^2", "ssd_recurrent", 1.0),
    ("ssd", "N", "T N^2", "ssd_blocked", 1.0),
)


def run_table(cfg: BenchConfig):
    """Fit measured T-exponents on the bench grid next to the asymptotic entries.

    Returns (report, text) where text is the human-readable rendering.
    """
    if len(cfg.t_grid) < 4:
        raise ConfigurationError("table needs a T grid with >= 4 points to fit exponents")
    bench_cfg = BenchConfig(
        seed=cfg.seed,
        dtype=cfg.dtype,
        t_grid=cfg.t_grid,
        n_values=cfg.n_values,
        p_values=cfg.p_values,
        q_values=cfg.q_values,
        h_values=cfg.h_values,
        algorithms=tuple(row[3] for row in TABLE_ROWS),
        wall=False,
    )
    measured = run_bench(bench_cfg)
    by_alg = {}
    for c in measured.cases:
        alg = c["case"].split(":")[1]
        by_alg.setdefault(alg, []).append((c["params"]["T"], c["mul_adds"]))

    cases = []
    lines = [
        f"{'mode':<12} {'state':<6} {'train cost':<10} {'measured T-exp':<15} status",
    ]
    for mode, state, cost_law, alg, expected in TABLE_ROWS:
        pts = sorted(by_alg[alg])
        slope = fit_exponent([p[0] for p in pts], [p[1] for p in pts])
        ok = abs(slope - expected) <= 0.15
        cases.append(
            _case(
                f"table:{mode}",
                {
                    "state_size": state,
                    "train_cost": cost_law,
                    "measured_T_exponent": round(slope, 4),
                    "expected_T_exponent": expected,
                },
                0.0,
                1.0,
                max(p[1] for p in pts),
                ok=ok,
            )
        )
        lines.append(
            f"{mode:<12} {state:<6} {cost_law:<10} {slope:<15.4f} {'pass' if ok else 'fail'}"
        )
    report = Report(seed=cfg.seed, dtype=cfg.dtype, cases=cases)
    return report, "\n".join(lines) + "\n"
