"""Acceptance checks: twelve criteria, one test and one printed line each.

Run with -s (or read the -v test lines) to see the per-criterion verdicts.
Tolerances are pinned here on purpose; loosening them is a spec change, not
a fix.
"""

import os
import subprocess
import sys
import time

import numpy as np

from ssdkit.architecture import (
    Communicator,
    MessageChannel,
    init_block_weights,
    make_shard_plan,
    mamba2_block_forward,
    sp_forward,
    tp_forward,
    varlen_forward,
)
from ssdkit.bench import fit_exponent
from ssdkit.scan import (
    AssociativeScan,
    BlockDecomposition,
    Dilated,
    Sequential,
    StatePassing,
    cumprodsum,
)
from ssdkit.semiseparable import (
    BandedLower,
    SSSRep,
    ar_to_ssm,
    lower_rank_profile,
    materialize_1ss,
    materialize_sss,
)
from ssdkit.sma import (
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
from ssdkit.ssd import ChunkPlan, SSDInputs, ssd_blocked, ssd_cost, ssd_quadratic, ssd_recurrent
from ssdkit.ssm import scalar_identity_quadratic
from ssdkit.tensor import OpCounter, max_rel_err


def _line(n, ok, detail):
    print(f"[criterion {n:02d}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {n}: {detail}"


def test_01_scan_equivalence_five_algorithms():
    start = time.perf_counter()
    algs = [Sequential(), AssociativeScan(), Dilated(), StatePassing(), BlockDecomposition()]
    t_values = (1, 2, 3, 7, 64, 1000, 4096)
    rng = np.random.default_rng(101)
    worst, cases = 0.0, 0
    for i in range(200):
        T = t_values[i % len(t_values)]
        a = rng.uniform(0.0, 1.0, T)
        b = rng.standard_normal(T)
        init = float(rng.standard_normal()) if i % 2 else 0.0
        h = float(init)
        ref = np.empty(T)
        for t in range(T):
            h = a[t] * h + b[t]
            ref[t] = h
        for alg in algs:
            out, final = cumprodsum(a, b, alg=alg, state=init)
            worst = max(worst, max_rel_err(out, ref), max_rel_err(final, h))
        cases += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and cases == 200 and elapsed < 10.0
    _line(1, ok, f"scan equivalence: {cases} cases, max rel err {worst:.2e}, {elapsed:.1f}s")


def test_02_ssd_triple_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    worst, cases = 0.0, 0
    for _ in range(200):
        T = int(rng.integers(1, 129))
        N = int(rng.integers(1, 17))
        P = int(rng.integers(1, 17))
        H = int(rng.integers(1, 5))
        inputs = SSDInputs(
            X=rng.standard_normal((T, H, P)),
            A=rng.uniform(0.0, 1.0, (T, H)),
            B=rng.standard_normal((T, H, N)),
            C=rng.standard_normal((T, H, N)),
        )
        ref, ref_final = ssd_recurrent(inputs)
        worst = max(worst, max_rel_err(ssd_quadratic(inputs), ref))
        for Q in (1, 2, 4, 8, T):
            y, h_final = ssd_blocked(inputs, ChunkPlan(Q=Q))
            worst = max(worst, max_rel_err(y, ref), max_rel_err(h_final, ref_final))
        cases += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and cases == 200 and elapsed < 30.0
    _line(2, ok, f"ssd triple: {cases} cases, max rel err {worst:.2e}, {elapsed:.1f}s")


def test_03_duality_scalar_identity_vs_masked_attention():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100):
        T = int(rng.integers(1, 49))
        N = int(rng.integers(1, 9))
        P = int(rng.integers(1, 9))
        a = rng.uniform(0.0, 1.0, T)
        B = rng.standard_normal((T, N))
        C = rng.standard_normal((T, N))
        X = rng.standard_normal((T, P))
        ssm_side = scalar_identity_quadratic(SSSRep(A=a, B=B, C=C), X)
        attn_side = attention_quadratic(C, B, X, OneSS(a=tuple(a)))
        worst = max(worst, max_rel_err(ssm_side, attn_side))
    _line(3, worst <= 1e-12, f"duality: 100 cases, max rel err {worst:.2e}")


def test_04_linear_equals_quadratic_attention():
    rng = np.random.default_rng(404)
    worst, cases = 0.0, 0
    masks = ("causal", "decay", "oness")
    for i in range(200):
        T = int(rng.integers(1, 65))
        N = int(rng.integers(1, 9))
        P = int(rng.integers(1, 9))
        Q = rng.standard_normal((T, N))
        K = rng.standard_normal((T, N))
        V = rng.standard_normal((T, P))
        kind = masks[i % 3]
        if kind == "causal":
            mask = Causal()
        elif kind == "decay":
            mask = Decay(gamma=float(rng.uniform(0.0, 1.0)))
        else:
            mask = OneSS(a=tuple(rng.uniform(0.0, 1.0, T)))
        err = max_rel_err(attention_linear(Q, K, V, mask), attention_quadratic(Q, K, V, mask))
        worst = max(worst, err)
        cases += 1
    _line(4, worst <= 1e-12 and cases == 200, f"linear==quadratic: {cases} cases, max rel err {worst:.2e}")


def test_05_sss_rank_profile_bounded():
    rng = np.random.default_rng(505)
    worst_excess, runs = 0, 0
    for N in (1, 2, 4):
        for seed in range(100):
            T = int(rng.integers(max(2, N), 17))
            if seed % 2:
                A = rng.uniform(0.0, 1.0, (T, N))
            else:
                A = 0.6 * rng.standard_normal((T, N, N)) / np.sqrt(N)
            rep = SSSRep(A=A, B=rng.standard_normal((T, N)), C=rng.standard_normal((T, N)))
            profile = lower_rank_profile(materialize_sss(rep), tol=1e-8)
            worst_excess = max(worst_excess, profile - N)
            runs += 1
    ok = worst_excess <= 0 and runs == 300
    _line(5, ok, f"rank profile: 100 seeds per order, worst excess over N is {worst_excess}")


def test_06_closure_sum_product_inverse():
    rng = np.random.default_rng(606)
    ok = True
    detail = []
    T, N, P = 12, 2, 3

    def rep(order):
        return SSSRep(
            A=rng.uniform(0.0, 1.0, (T, order)),
            B=rng.standard_normal((T, order)),
            C=rng.standard_normal((T, order)),
        )

    worst_sum = worst_prod = 0
    for _ in range(50):
        s = lower_rank_profile(materialize_sss(rep(N)) + materialize_sss(rep(P)))
        p = lower_rank_profile(materialize_sss(rep(N)) @ materialize_sss(rep(P)))
        worst_sum, worst_prod = max(worst_sum, s), max(worst_prod, p)
    ok &= worst_sum <= N + P and worst_prod <= N + P
    detail.append(f"sum<= {worst_sum}/{N+P}, product<= {worst_prod}/{N+P}")

    worst_off = 0.0
    for _ in range(50):
        a = rng.uniform(0.3, 1.0, T)
        inv = np.linalg.inv(materialize_1ss(a))
        off_band = max(np.abs(np.tril(inv, -2)).max(), np.abs(np.triu(inv, 1)).max())
        worst_off = max(worst_off, float(off_band))
    ok &= worst_off < 1e-12
    detail.append(f"inverse off-band {worst_off:.2e}")
    _line(6, ok, "closure: " + ", ".join(detail))


def test_07_ar_transfer_rank_bound():
    rng = np.random.default_rng(707)
    worst_excess = -1
    for k in range(4):
        for _ in range(50):
            T = int(rng.integers(k + 2, 13))
            coeffs = 0.6 * rng.standard_normal((T, k)) if k else np.zeros((T, 0))
            cert = ar_to_ssm(BandedLower(coeffs=coeffs, mu=rng.uniform(0.5, 1.5, T)))
            worst_excess = max(worst_excess, cert.profile - (k + 1))
    _line(7, worst_excess <= 0, f"ar transfer: worst excess over k+1 is {worst_excess}")


def test_08_cost_model_exponents():
    grid_t = (128, 256, 512, 1024)
    blocked = [ssd_cost(T, 16, 8, 8, 1)[1].mul_adds for T in grid_t]
    slope_blocked = fit_exponent(grid_t, blocked)

    grid_q = (32, 64, 128, 256)
    quad = []
    for T in grid_q:
        rng = np.random.default_rng(0)
        counter = OpCounter()
        ssd_quadratic(
            SSDInputs(
                X=rng.standard_normal((T, 1, 4)),
                A=rng.uniform(0.0, 1.0, (T, 1)),
                B=rng.standard_normal((T, 1, 4)),
                C=rng.standard_normal((T, 1, 4)),
            ),
            counter=counter,
        )
        quad.append(counter.mul_adds)
    slope_quad = fit_exponent(grid_q, quad)

    grid_n = (4, 8, 16, 32)
    state = [ssd_cost(64, n, n, n, 1)[1].mul_adds for n in grid_n]
    slope_state = fit_exponent(grid_n, state)

    exact = []
    for T in (2, 64, 1000):
        counter = OpCounter()
        rng = np.random.default_rng(1)
        cumprodsum(rng.uniform(0.0, 1.0, T), rng.standard_normal(T), counter=counter)
        exact.append(counter.mul_adds == 2 * (T - 1))

    ok = (
        abs(slope_blocked - 1.0) <= 0.15
        and abs(slope_quad - 2.0) <= 0.15
        and abs(slope_state - 2.0) <= 0.15
        and all(exact)
    )
    _line(
        8,
        ok,
        f"cost model: blocked T-slope {slope_blocked:.3f}, quadratic T-slope "
        f"{slope_quad:.3f}, state N-slope {slope_state:.3f}, sequential exact {all(exact)}",
    )


def test_09_parallel_simulation_oracles():
    worst_tp = worst_sp = worst_vl = 0.0
    reduces_ok = messages_ok = True
    for seed in range(6):
        rng = np.random.default_rng(900 + seed)
        weights = init_block_weights(d=8, heads=4, state=3, groups=4, norm_groups=4, seed=seed)
        u = rng.standard_normal((32, weights.d))
        ref = mamba2_block_forward(weights, u)

        for s in (1, 2, 4):
            comm = Communicator()
            out = tp_forward(weights, make_shard_plan(weights, s), u, comm=comm)
            worst_tp = max(worst_tp, max_rel_err(out, ref))
            reduces_ok &= comm.all_reduces == 1

        for workers in (2, 3, 4):
            channel = MessageChannel()
            out = sp_forward(weights, workers, u, channel=channel)
            worst_sp = max(worst_sp, max_rel_err(out, ref))
            messages_ok &= channel.messages == workers - 1

        cuts = sorted(rng.choice(np.arange(1, 32), size=2, replace=False))
        seqs = [u[: cuts[0]], u[cuts[0] : cuts[1]], u[cuts[1] :]]
        for part, seq in zip(varlen_forward(weights, seqs), seqs):
            worst_vl = max(worst_vl, max_rel_err(part, mamba2_block_forward(weights, seq)))

    ok = worst_tp <= 1e-12 and worst_sp <= 1e-12 and worst_vl <= 1e-12 and reduces_ok and messages_ok
    _line(
        9,
        ok,
        f"parallel: tp {worst_tp:.2e}, sp {worst_sp:.2e}, varlen {worst_vl:.2e}, "
        f"one all-reduce {reduces_ok}, messages=workers-1 {messages_ok}",
    )


def test_10_normalized_rows_sum_to_one():
    rng = np.random.default_rng(1010)
    worst = 0.0
    for _ in range(50):
        T = int(rng.integers(1, 33))
        n = int(rng.integers(1, 6))
        Q = rng.standard_normal((T, n))
        K = rng.standard_normal((T, n))
        rows = normalized_attention(Q, K, np.eye(T), Causal(), fm=Exp())
        worst = max(worst, float(np.max(np.abs(rows.sum(axis=1) - 1.0))))
    _line(10, worst <= 1e-12, f"normalization: 50 seeds, max |row sum - 1| = {worst:.2e}")


def test_11_random_feature_error_decreases():
    wins = {"prf": 0, "rfa": 0}
    seeds = 20
    for i in range(seeds):
        rng = np.random.default_rng(1100 + i)
        Q = rng.standard_normal((20, 4))
        K = rng.standard_normal((20, 4))
        Q /= np.linalg.norm(Q, axis=1, keepdims=True)
        K /= np.linalg.norm(K, axis=1, keepdims=True)
        for label, make in (("prf", PositiveRandomFeatures), ("rfa", RandomFourier)):
            errs = kernel_approx_error(make(m=1, seed=i), (1, 64), Q, K)
            wins[label] += bool(errs[1] < errs[0])
    need = int(np.ceil(0.9 * seeds))
    ok = wins["prf"] >= need and wins["rfa"] >= need
    _line(11, ok, f"kernel approximation: prf {wins['prf']}/{seeds}, rfa {wins['rfa']}/{seeds} improve m=1->64")


def test_12_cli_verify_contract(tmp_path):
    env = {
        **os.environ,
        "OMP_NUM_THREADS": "1",
        "OPENBLAS_NUM_THREADS": "1",
        "MKL_NUM_THREADS": "1",
    }

    def run(*argv):
        return subprocess.run(
            [sys.executable, "-m", "ssdkit.cli", *argv],
            capture_output=True, text=True, timeout=120, env=env,
        )

    a, b = tmp_path / "a.json", tmp_path / "b.json"
    clean = run("verify", "--seed", "7", "--out", str(a))
    again = run("verify", "--seed", "7", "--out", str(b))
    faulty = run("verify", "--inject-fault", "--out", str(tmp_path / "f.json"))
    ok = (
        clean.returncode == 0
        and again.returncode == 0
        and faulty.returncode != 0
        and a.read_bytes() == b.read_bytes()
    )
    _line(
        12,
        ok,
        f"cli: clean exit {clean.returncode}, fault exit {faulty.returncode}, byte-identical "
        f"{a.read_bytes() == b.read_bytes()}",
    )
