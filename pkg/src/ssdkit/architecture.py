"""Forward-only gated SSD block, with simulated parallel and varlen execution.

One block maps u (T, d) through parallel projections, a depthwise causal
conv on the value branch, a per-head scalar-decay SSM inner layer, a SiLU
gate, groupnorm, and an output projection. Everything here is deterministic,
single-process numpy; "tensor parallel" and "sequence parallel" are simulated
by actually partitioning the weights or the time axis and passing the same
data a real implementation would move, through instrumented channels that
count it.

Decay parameterization: a_t(h) = exp(softplus(delta_t(h)) * a_base(h)) with
fixed a_base < 0, so a always lands in (0, 1). The conv branch applies no
nonlinearity. Groupnorm runs after the gate.

Float dtype follows the inputs: float64 weights give float64 outputs, float32
gives float32 (tolerances differ accordingly; see the tests).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ssd import head_group_map
from .tensor import ConfigurationError, DimensionError

__all__ = [
    "GROUPNORM_EPS",
    "BlockWeights",
    "ShardPlan",
    "Communicator",
    "MessageChannel",
    "init_block_weights",
    "mamba2_block_forward",
    "make_shard_plan",
    "tp_forward",
    "sp_forward",
    "varlen_forward",
    "save_arrays",
    "load_arrays",
    "save_weights",
    "load_weights",
]

GROUPNORM_EPS = 1e-5

# serialization order of the weight fields (the flat stream is concatenated
# in exactly this order)
_WEIGHT_FIELDS = ("w_x", "w_z", "w_dbc", "conv", "a_base", "gn_scale", "gn_shift", "w_o")


def _floating(name: str, arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype not in (np.float64, np.float32):
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass
class BlockWeights:
    """All parameters of one block.

    w_x, w_z: (d, ed) value/gate projections; w_dbc: (d, H + 2*G*N) packed
    per-token parameter projection (delta | B | C); conv: (ed, w) depthwise
    causal taps, column w-1 hitting the current token; a_base: (H,) negative
    decay bases; gn_scale/gn_shift: (ed,); w_o: (ed, d).
    """

    w_x: np.ndarray
    w_z: np.ndarray
    w_dbc: np.ndarray
    conv: np.ndarray
    a_base: np.ndarray
    gn_scale: np.ndarray
    gn_shift: np.ndarray
    w_o: np.ndarray
    heads: int
    state: int
    groups: int
    norm_groups: int

    def __post_init__(self):
        for name in _WEIGHT_FIELDS:
            setattr(self, name, _floating(name, getattr(self, name)))
        d, ed = self.w_x.shape
        H, N, G, g = self.heads, self.state, self.groups, self.norm_groups
        if self.w_z.shape != (d, ed):
            raise DimensionError(f"w_z shape {self.w_z.shape}, expected {(d, ed)}")
        if self.w_o.shape != (ed, d):
            raise DimensionError(f"w_o shape {self.w_o.shape}, expected {(ed, d)}")
        if self.w_dbc.shape != (d, H + 2 * G * N):
            raise DimensionError(
                f"w_dbc shape {self.w_dbc.shape}, expected {(d, H + 2 * G * N)}"
            )
        if self.conv.ndim != 2 or self.conv.shape[0] != ed or self.conv.shape[1] < 1:
            raise DimensionError(f"conv shape {self.conv.shape}, expected ({ed}, w>=1)")
        if self.a_base.shape != (H,) or np.any(self.a_base >= 0.0):
            raise ValueError("a_base must be (H,) strictly negative")
        if self.gn_scale.shape != (ed,) or self.gn_shift.shape != (ed,):
            raise DimensionError("groupnorm scale/shift must be (ed,)")
        if ed % H:
            raise DimensionError(f"inner width {ed} not divisible by {H} heads")
        if H % G:
            raise DimensionError(f"head count {H} not divisible by {G} groups")
        if ed % g:
            raise DimensionError(f"inner width {ed} not divisible by {g} norm groups")

    @property
    def d(self) -> int:
        return self.w_x.shape[0]

    @property
    def ed(self) -> int:
        return self.w_x.shape[1]

    @property
    def P(self) -> int:
        return self.ed // self.heads

    @property
    def conv_width(self) -> int:
        return self.conv.shape[1]


def init_block_weights(
    d: int,
    heads: int,
    state: int,
    groups: int | None = None,
    expand: int = 2,
    conv_width: int = 4,
    norm_groups: int | None = None,
    seed: int = 0,
) -> BlockWeights:
    """Seeded Gaussian weights at 1/sqrt(fan-in) scale, a_base in [-1.5, -0.5]."""
    G = heads if groups is None else groups
    g = heads if norm_groups is None else norm_groups
    ed = expand * d
    rng = np.random.default_rng(seed)
    return BlockWeights(
        w_x=rng.standard_normal((d, ed)) / np.sqrt(d),
        w_z=rng.standard_normal((d, ed)) / np.sqrt(d),
        w_dbc=rng.standard_normal((d, heads + 2 * G * state)) / np.sqrt(d),
        conv=rng.standard_normal((ed, conv_width)) / conv_width,
        a_base=-rng.uniform(0.5, 1.5, heads),
        gn_scale=1.0 + 0.1 * rng.standard_normal(ed),
        gn_shift=0.05 * rng.standard_normal(ed),
        w_o=rng.standard_normal((ed, d)) / np.sqrt(ed),
        heads=heads,
        state=state,
        groups=G,
        norm_groups=g,
    )


def _silu(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return z / (1.0 + np.exp(-z))


def _causal_conv(weights: BlockWeights, x: np.ndarray, carry: np.ndarray, resets):
    """Depthwise causal conv, receptive field cut at carry-reset boundaries."""
    T = x.shape[0]
    w = weights.conv_width
    out = np.empty_like(x)
    bounds = [0, *resets, T]
    seg_carry = carry
    for s, e in zip(bounds[:-1], bounds[1:]):
        if e > s:
            pad = np.concatenate([seg_carry, x[s:e]])
            acc = np.zeros((e - s, x.shape[1]), dtype=x.dtype)
            for k in range(w):
                acc += pad[k : k + (e - s)] * weights.conv[:, k]
            out[s:e] = acc
        seg_carry = np.zeros((w - 1, x.shape[1]), dtype=x.dtype)
    return out


def _forward_core(
    weights: BlockWeights,
    u,
    conv_carry: np.ndarray | None = None,
    h_init: np.ndarray | None = None,
    resets=(),
):
    """Shared forward: returns (out, h_final, conv_tail).

    conv_carry is the w-1 pre-conv rows preceding u (zeros = sequence start);
    h_init the (H, N, P) inner state before u; resets are row indices where a
    new sequence starts (decay zeroed, conv receptive field cut).
    """
    u = np.asarray(u)
    if u.dtype not in (np.float64, np.float32):
        u = u.astype(np.float64)
    if u.ndim != 2 or u.shape[1] != weights.d:
        raise DimensionError(f"u must be (T, {weights.d}), got {u.shape}")
    T = u.shape[0]
    H, N, G, P = weights.heads, weights.state, weights.groups, weights.P
    ed, w = weights.ed, weights.conv_width
    dtype = np.result_type(u, weights.w_x)

    x = u @ weights.w_x
    z = u @ weights.w_z
    dbc = u @ weights.w_dbc
    delta = np.logaddexp(0.0, dbc[:, :H])  # softplus, so delta >= 0
    a = np.exp(delta * weights.a_base[None, :])  # decay in (0, 1]
    resets = sorted(int(r) for r in resets)
    if any(not 0 < r < T for r in resets):
        raise ValueError(f"reset rows must lie strictly inside (0, {T})")
    for r in resets:
        a[r, :] = 0.0

    if conv_carry is None:
        conv_carry = np.zeros((w - 1, ed), dtype=dtype)
    if conv_carry.shape != (w - 1, ed):
        raise DimensionError(f"conv carry shape {conv_carry.shape}, expected {(w - 1, ed)}")
    xc = _causal_conv(weights, x, conv_carry, resets)

    X = xc.reshape(T, H, P)
    B = dbc[:, H : H + G * N].reshape(T, G, N)
    C = dbc[:, H + G * N :].reshape(T, G, N)
    gmap = head_group_map(H, G)
    Bh = B[:, gmap, :]  # (T, H, N)
    Ch = C[:, gmap, :]

    S = np.zeros((H, N, P), dtype=dtype) if h_init is None else h_init.astype(dtype)
    if S.shape != (H, N, P):
        raise DimensionError(f"h_init shape {S.shape}, expected {(H, N, P)}")
    Y = np.empty((T, H, P), dtype=dtype)
    for t in range(T):
        S = a[t][:, None, None] * S + Bh[t][:, :, None] * X[t][:, None, :]
        Y[t] = np.einsum("hn,hnp->hp", Ch[t], S)

    y = Y.reshape(T, ed) * _silu(z)
    v = y.reshape(T, weights.norm_groups, ed // weights.norm_groups)
    mean = v.mean(axis=2, keepdims=True)
    var = v.var(axis=2, keepdims=True)
    yn = ((v - mean) / np.sqrt(var + GROUPNORM_EPS)).reshape(T, ed)
    yn = yn * weights.gn_scale + weights.gn_shift
    out = yn @ weights.w_o

    # next span's halo: the last w-1 pre-conv rows (carry included, in case
    # this span was shorter than the receptive field)
    tail = np.concatenate([conv_carry, x])[-(w - 1) :] if w > 1 else x[:0]
    return out, S, tail


def mamba2_block_forward(weights: BlockWeights, u) -> np.ndarray:
    """One block forward on a single full sequence."""
    out, _, _ = _forward_core(weights, u)
    return out


# ---------------------------------------------------------------------------
# tensor parallelism: column-split inputs projections, row-split output
# ---------------------------------------------------------------------------


@dataclass
class Communicator:
    """Counts simulated collectives; reduction order is fixed shard order."""

    all_reduces: int = 0

    def all_reduce(self, parts) -> np.ndarray:
        self.all_reduces += 1
        acc = parts[0].copy()
        for p in parts[1:]:
            acc = acc + p
        return acc


@dataclass
class ShardPlan:
    """Per-shard weights whose concatenation is exactly the full block."""

    tp_degree: int
    shards: list

    def reconstructs(self, weights: BlockWeights) -> bool:
        cat = {
            "w_x": np.concatenate([s.w_x for s in self.shards], axis=1),
            "w_z": np.concatenate([s.w_z for s in self.shards], axis=1),
            "conv": np.concatenate([s.conv for s in self.shards], axis=0),
            "a_base": np.concatenate([s.a_base for s in self.shards]),
            "gn_scale": np.concatenate([s.gn_scale for s in self.shards]),
            "gn_shift": np.concatenate([s.gn_shift for s in self.shards]),
            "w_o": np.concatenate([s.w_o for s in self.shards], axis=0),
        }
        H, N = weights.heads, weights.state
        dcols = np.concatenate([s.w_dbc[:, : s.heads] for s in self.shards], axis=1)
        bcols = np.concatenate(
            [s.w_dbc[:, s.heads : s.heads + s.groups * N] for s in self.shards], axis=1
        )
        ccols = np.concatenate(
            [s.w_dbc[:, s.heads + s.groups * N :] for s in self.shards], axis=1
        )
        cat["w_dbc"] = np.concatenate([dcols, bcols, ccols], axis=1)
        return all(np.array_equal(cat[k], getattr(weights, k)) for k in cat)


def make_shard_plan(weights: BlockWeights, tp_degree: int) -> ShardPlan:
    """Split one block across tp_degree shards; raises before any compute."""
    s = tp_degree
    if s < 1:
        raise ConfigurationError(f"tp degree must be >= 1, got {s}")
    H, N, G, g, ed = weights.heads, weights.state, weights.groups, weights.norm_groups, weights.ed
    if H % s or G % s or g % s:
        raise ConfigurationError(
            f"tp degree {s} must divide heads {H}, groups {G}, and norm groups {g}"
        )
    Hs, Gs, gs, eds = H // s, G // s, g // s, ed // s
    shards = []
    for i in range(s):
        ch = slice(i * eds, (i + 1) * eds)
        hh = slice(i * Hs, (i + 1) * Hs)
        dcol = slice(i * Hs, (i + 1) * Hs)
        bcol = slice(H + i * Gs * N, H + (i + 1) * Gs * N)
        ccol = slice(H + G * N + i * Gs * N, H + G * N + (i + 1) * Gs * N)
        shards.append(
            BlockWeights(
                w_x=weights.w_x[:, ch],
                w_z=weights.w_z[:, ch],
                w_dbc=np.concatenate(
                    [weights.w_dbc[:, dcol], weights.w_dbc[:, bcol], weights.w_dbc[:, ccol]],
                    axis=1,
                ),
                conv=weights.conv[ch],
                a_base=weights.a_base[hh],
                gn_scale=weights.gn_scale[ch],
                gn_shift=weights.gn_shift[ch],
                w_o=weights.w_o[ch],
                heads=Hs,
                state=N,
                groups=Gs,
                norm_groups=gs,
            )
        )
    return ShardPlan(tp_degree=s, shards=shards)


def tp_forward(weights: BlockWeights, plan: ShardPlan, u, comm: Communicator | None = None):
    """Run every shard independently, then one all-reduce over shard outputs."""
    if not plan.reconstructs(weights):
        raise ConfigurationError("shard plan does not reconstruct the given weights")
    comm = Communicator() if comm is None else comm
    parts = [mamba2_block_forward(shard, u) for shard in plan.shards]
    return comm.all_reduce(parts)


# ---------------------------------------------------------------------------
# sequence parallelism: contiguous spans pass (state, conv halo) along a chain
# ---------------------------------------------------------------------------


@dataclass
class MessageChannel:
    """Counts messages and floats moved between neighboring workers."""

    messages: int = 0
    sizes: list = field(default_factory=list)

    def send(self, state: np.ndarray, conv_tail: np.ndarray):
        self.messages += 1
        self.sizes.append(int(state.size) + int(conv_tail.size))
        return state, conv_tail


def sp_forward(weights: BlockWeights, workers: int, u, channel: MessageChannel | None = None):
    """Split the time axis over workers chained by (state, conv-halo) messages."""
    if workers < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {workers}")
    u = np.asarray(u)
    channel = MessageChannel() if channel is None else channel
    spans = np.array_split(np.arange(u.shape[0]), workers)
    outs = []
    state, tail = None, None
    for i, span in enumerate(spans):
        if i > 0:
            state, tail = channel.send(state, tail)
        out, state, tail = _forward_core(
            weights, u[span], conv_carry=tail, h_init=state
        )
        outs.append(out)
    return np.concatenate(outs)


def varlen_forward(weights: BlockWeights, sequences) -> list:
    """Batch variable-length sequences through one concatenated forward.

    Decay is zeroed at the first token of each subsequent sequence and the
    conv receptive field is cut there, so every slice is exactly the forward
    of its own sequence in isolation.
    """
    if not sequences:
        raise ValueError("need at least one sequence")
    seqs = [np.asarray(s) for s in sequences]
    lengths = [s.shape[0] for s in seqs]
    starts = np.cumsum([0] + lengths)
    out, _, _ = _forward_core(weights, np.concatenate(seqs), resets=starts[1:-1])
    return [out[s:e] for s, e in zip(starts[:-1], starts[1:])]


# ---------------------------------------------------------------------------
# serialization: flat little-endian float64 stream + JSON shape sidecar
# ---------------------------------------------------------------------------


def save_arrays(path_prefix, arrays: dict, meta: dict | None = None) -> None:
    """Write {prefix}.bin (concatenated '<f8' stream) and {prefix}.json."""
    prefix = Path(path_prefix)
    stream = np.concatenate(
        [np.ascontiguousarray(a, dtype="<f8").reshape(-1) for a in arrays.values()]
    ) if arrays else np.empty(0, dtype="<f8")
    prefix.with_suffix(".bin").write_bytes(stream.astype("<f8").tobytes())
    sidecar = {
        "format": "flat-float64-le",
        "fields": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    if meta:
        sidecar["meta"] = meta
    prefix.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_arrays(path_prefix):
    """Read back (arrays, meta) written by save_arrays."""
    prefix = Path(path_prefix)
    sidecar = json.loads(prefix.with_suffix(".json").read_text())
    if sidecar.get("format") != "flat-float64-le":
        raise ValueError(f"unknown serialization format {sidecar.get('format')!r}")
    stream = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    counts = [int(np.prod(fld["shape"])) if fld["shape"] else 1 for fld in sidecar["fields"]]
    if sum(counts) != stream.size:
        raise ValueError(f"stream has {stream.size} floats, sidecar describes {sum(counts)}")
    arrays, pos = {}, 0
    for fld, n in zip(sidecar["fields"], counts):
        arrays[fld["name"]] = stream[pos : pos + n].reshape(fld["shape"]).copy()
        pos += n
    return arrays, sidecar.get("meta", {})


def save_weights(weights: BlockWeights, path_prefix) -> None:
    save_arrays(
        path_prefix,
        {name: getattr(weights, name) for name in _WEIGHT_FIELDS},
        meta={
            "heads": weights.heads,
            "state": weights.state,
            "groups": weights.groups,
            "norm_groups": weights.norm_groups,
        },
    )


def load_weights(path_prefix) -> BlockWeights:
    arrays, meta = load_arrays(path_prefix)
    return BlockWeights(**arrays, **meta)
