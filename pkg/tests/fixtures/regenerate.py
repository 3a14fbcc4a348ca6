"""Rebuild the golden block-forward fixture.

Run from the repo root:

    python3 tests/fixtures/regenerate.py

The stored output is the block forward pass on seeded weights and input,
cross-checked here against a stagewise replay that uses ssd_recurrent as
the inner oracle before anything is written.
"""

from pathlib import Path

import numpy as np

from ssdkit.architecture import (
    GROUPNORM_EPS,
    init_block_weights,
    mamba2_block_forward,
    save_arrays,
    save_weights,
)
from ssdkit.ssd import Grouped, SSDInputs, ssd_recurrent

HERE = Path(__file__).parent


def stagewise_reference(w, u):
    T, H, N, G, P = u.shape[0], w.heads, w.state, w.groups, w.P
    x = u @ w.w_x
    z = u @ w.w_z
    dbc = u @ w.w_dbc
    a = np.exp(np.logaddexp(0.0, dbc[:, :H]) * w.a_base)
    xc = np.zeros_like(x)
    for k in range(w.conv_width):
        shift = w.conv_width - 1 - k
        xc[shift:] += x[: T - shift] * w.conv[:, k]
    inputs = SSDInputs(
        X=xc.reshape(T, H, P),
        A=a,
        B=dbc[:, H : H + G * N].reshape(T, G, N),
        C=dbc[:, H + G * N :].reshape(T, G, N),
        pattern=Grouped(G=G),
    )
    Y, _ = ssd_recurrent(inputs)
    y = Y.reshape(T, w.ed) * (z / (1.0 + np.exp(-z)))
    v = y.reshape(T, w.norm_groups, w.ed // w.norm_groups)
    yn = (v - v.mean(2, keepdims=True)) / np.sqrt(v.var(2, keepdims=True) + GROUPNORM_EPS)
    return (yn.reshape(T, w.ed) * w.gn_scale + w.gn_shift) @ w.w_o


def main():
    w = init_block_weights(d=16, heads=4, state=8, groups=2, norm_groups=4, seed=7)
    u = np.random.default_rng(11).standard_normal((8, w.d))
    y = mamba2_block_forward(w, u)
    check = np.max(np.abs(y - stagewise_reference(w, u)))
    assert check < 1e-12, f"forward disagrees with stagewise oracle by {check:.3e}"
    save_weights(w, HERE / "block_weights")
    save_arrays(HERE / "golden_io", {"u": u, "y": y})
    print(f"fixture written, oracle gap {check:.3e}")


if __name__ == "__main__":
    main()
