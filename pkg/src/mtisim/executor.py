"""Small-scale numerical execution of one adapter-augmented encoder block.

Used to check that the compression pipeline is transparent: a block run on
bitmask-encoded-then-decoded weights must produce the same bits as the
dense run. Shapes are kept tiny (hidden <= 32, seq <= 16) so the checks
are cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from mtisim.compression.bitmask import bitmask_decode, bitmask_encode
from mtisim.compression.faults import inject_fault
from mtisim.compression.fixedpoint import FixedPointFormat, quantize
from mtisim.compression.pruning import prune_magnitude

LN_EPS = 1e-12


@dataclass
class AdapterWeights:
    down: np.ndarray      # hidden x s
    down_b: np.ndarray    # s
    up: np.ndarray        # s x hidden
    up_b: np.ndarray      # hidden

    @property
    def size(self) -> int:
        return self.down.shape[1]


@dataclass
class BlockWeights:
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    num_heads: int = 1
    adapter1: AdapterWeights | None = None
    adapter2: AdapterWeights | None = None

    MATRICES = ("wq", "wk", "wv", "wo", "w1", "w2")

    @property
    def hidden(self) -> int:
        return self.wq.shape[0]

    def map_arrays(self, fn) -> "BlockWeights":
        """Apply ``fn`` to every parameter array, adapters included."""
        changes = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                changes[f.name] = fn(v)
            elif isinstance(v, AdapterWeights):
                changes[f.name] = AdapterWeights(*(fn(getattr(v, g.name)) for g in fields(v)))
        return replace(self, **changes)

    def map_matrices(self, fn) -> "BlockWeights":
        """Apply ``fn`` to the fixed attention and feed-forward matrices only."""
        return replace(self, **{k: fn(getattr(self, k)) for k in self.MATRICES})


def random_adapter(hidden: int, size: int, rng: np.random.Generator, scale: float = 0.1) -> AdapterWeights:
    return AdapterWeights(
        rng.normal(0, scale, (hidden, size)), rng.normal(0, scale, size),
        rng.normal(0, scale, (size, hidden)), rng.normal(0, scale, hidden),
    )


def random_block(hidden: int = 16, ffn: int = 32, heads: int = 2, adapter_size: int | None = 4,
                 rng: np.random.Generator | None = None, scale: float = 0.1) -> BlockWeights:
    if hidden % heads:
        raise ValueError("hidden must be divisible by heads")
    rng = rng if rng is not None else np.random.default_rng(0)

    def m(a, b):
        return rng.normal(0, scale, (a, b))

    def v(n):
        return rng.normal(0, scale, n)

    return BlockWeights(
        m(hidden, hidden), v(hidden), m(hidden, hidden), v(hidden),
        m(hidden, hidden), v(hidden), m(hidden, hidden), v(hidden),
        m(hidden, ffn), v(ffn), m(ffn, hidden), v(hidden),
        1 + v(hidden), v(hidden), 1 + v(hidden), v(hidden),
        num_heads=heads,
        adapter1=random_adapter(hidden, adapter_size, rng, scale) if adapter_size else None,
        adapter2=random_adapter(hidden, adapter_size, rng, scale) if adapter_size else None,
    )


def gelu(x):
    # tanh approximation, as used by ALBERT
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def relu(x):
    return np.maximum(x, 0.0)


ACTIVATIONS = {"gelu": gelu, "relu": relu}


def _activation(act):
    if callable(act):
        return act
    try:
        return ACTIVATIONS[act]
    except KeyError:
        raise ValueError(f"unknown activation {act!r}") from None


def layer_norm(x, gamma=None, beta=None, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    y = (x - mu) / np.sqrt(var + eps)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y


def _q(fmt):
    if fmt is None or fmt.is_float:
        return lambda a: a
    return lambda a: quantize(a, fmt)


def adapter_forward(x, w: AdapterWeights, act="gelu", fmt: FixedPointFormat | None = None):
    """Bottleneck branch added back onto its input: ``x + up(act(down(x)))``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.down.shape[0]:
        raise ValueError(f"adapter expects (*, {w.down.shape[0]}) input, got {x.shape}")
    if w.up.shape != (w.down.shape[1], w.down.shape[0]):
        raise ValueError("adapter up/down shapes disagree")
    q = _q(fmt)
    f = _activation(act)
    h = q(f(q(x @ w.down + w.down_b)))
    return q(x + q(h @ w.up + w.up_b))


def attention(x, w: BlockWeights, fmt=None):
    q = _q(fmt)
    L, H = x.shape
    nh = w.num_heads
    hd = H // nh
    Q = q(x @ w.wq + w.bq).reshape(L, nh, hd).transpose(1, 0, 2)
    K = q(x @ w.wk + w.bk).reshape(L, nh, hd).transpose(1, 0, 2)
    V = q(x @ w.wv + w.bv).reshape(L, nh, hd).transpose(1, 0, 2)
    scores = q(Q @ K.transpose(0, 2, 1) / np.sqrt(hd))
    scores = scores - scores.max(axis=-1, keepdims=True)
    p = np.exp(scores)
    p = q(p / p.sum(axis=-1, keepdims=True))
    ctx = q(p @ V).transpose(1, 0, 2).reshape(L, H)
    return q(ctx @ w.wo + w.bo)


def block_forward(x, w: BlockWeights, fmt: FixedPointFormat | None = None, act="gelu",
                  norm: str = "post", eps: float = LN_EPS):
    """One shared-layer pass: attention, adapter, LN, FFN, adapter, LN.

    ``norm="post"`` (ALBERT order) normalizes after each residual sum;
    ``"pre"`` normalizes sublayer inputs instead. With a fixed-point
    ``fmt`` weights and input are quantized up front and every intermediate
    after each operation; accumulation itself is in float64.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.hidden:
        raise ValueError(f"block expects (*, {w.hidden}) input, got {x.shape}")
    if norm not in ("post", "pre"):
        raise ValueError(f"unknown norm order {norm!r}")
    q = _q(fmt)
    if fmt is not None and not fmt.is_float:
        w = w.map_arrays(q)
        x = q(x)
    f = _activation(act)

    def adapt(h, a):
        return h if a is None else adapter_forward(h, a, act, fmt)

    def ffn(h):
        return q(q(f(q(h @ w.w1 + w.b1))) @ w.w2 + w.b2)

    if norm == "post":
        h = q(layer_norm(q(x + adapt(attention(x, w, fmt), w.adapter1)), w.ln1_g, w.ln1_b, eps))
        return q(layer_norm(q(h + adapt(ffn(h), w.adapter2)), w.ln2_g, w.ln2_b, eps))
    h = q(x + adapt(attention(q(layer_norm(x, w.ln1_g, w.ln1_b, eps)), w, fmt), w.adapter1))
    return q(h + adapt(ffn(q(layer_norm(h, w.ln2_g, w.ln2_b, eps))), w.adapter2))


def roundtrip_weights(w: BlockWeights, fmt: FixedPointFormat | None = None) -> BlockWeights:
    """Pass every fixed matrix through bitmask encode/decode."""
    return w.map_matrices(lambda a: bitmask_decode(bitmask_encode(a, fmt)))


def sparse_equivalence_check(w: BlockWeights, seed: int = 0, sparsity: float = 0.5,
                             seq_len: int = 8, fmt: FixedPointFormat | None = None,
                             corrupt: bool = False) -> dict:
    """Prune, encode, decode and compare block outputs against the dense run.

    With ``corrupt=True`` one random bitmask bit of ``wq`` is flipped before
    decoding; the resulting deviation is reported, not asserted.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (seq_len, w.hidden))
    pruned = w.map_matrices(lambda a: prune_magnitude(a, sparsity))
    if fmt is not None and not fmt.is_float:
        pruned = pruned.map_arrays(lambda a: quantize(a, fmt))
    decoded = roundtrip_weights(pruned)
    flipped = None
    if corrupt:
        enc = bitmask_encode(pruned.wq)
        flipped = int(rng.integers(0, enc.size))
        bad, _ = inject_fault(enc, "bitmask", flipped)
        decoded = replace(decoded, wq=bitmask_decode(bad, "zero-fill"))
    dense_out = block_forward(x, pruned, fmt)
    sparse_out = block_forward(x, decoded, fmt)
    dev = float(np.max(np.abs(dense_out - sparse_out))) if dense_out.size else 0.0
    return {
        "seed": seed,
        "sparsity": sparsity,
        "max_deviation": dev,
        "bit_identical": bool(np.array_equal(dense_out, sparse_out)),
        "corrupted_bit": flipped,
    }
