"""Masked feedforward networks with an all-layer linear readout.

A network is a stack of layers ``z = W h + b``, optionally layer-normalized
per sample (no affine parameters), followed by ReLU. Masked layers store only
the weights inside their mask, so pruned connections cannot drift during
training. Every layer listed in ``readouts`` feeds a scalar ``r = a.h + c``;
with a combiner the prediction is ``sum(beta * r) + d``, otherwise the single
readout is the prediction (plain MLP head).

All parameters live in one flat float64 vector; ``layout`` maps names such as
``"W0"``, ``"b0"``, ``"a1"``, ``"c1"``, ``"beta"``, ``"d"`` to slices of it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .hierarchy import EmptyHierarchyError, InteractionHierarchy, Wiring

LN_EPS = 1e-5
MAGIC = b"HOMNET1\n"


@dataclass(frozen=True, eq=False)
class LayerSpec:
    in_width: int
    out_width: int
    rows: np.ndarray  # mask nonzeros in row-major order
    cols: np.ndarray
    layernorm: bool = False
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        if rows.size and (rows[0] < 0 or rows[-1] >= self.out_width or cols.min() < 0
                          or cols.max() >= self.in_width):
            raise ValueError("mask indices out of range")
        if np.unique(rows).size != self.out_width:
            raise ValueError("every output unit needs at least one incoming connection")
        if rows.size > 1 and np.any((np.diff(rows) == 0) & (np.diff(cols) == 0)):
            raise ValueError("duplicate mask entries")
        for a in (rows, cols):
            a.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def dense(cls, in_width: int, out_width: int, **kw) -> "LayerSpec":
        rows, cols = np.divmod(np.arange(in_width * out_width), in_width)
        return cls(in_width, out_width, rows, cols, **kw)

    @property
    def nnz(self) -> int:
        return self.rows.size

    @property
    def is_dense(self) -> bool:
        return self.nnz == self.in_width * self.out_width

    @property
    def normalizes(self) -> bool:
        return self.layernorm and self.out_width > 1

    @cached_property
    def fan_in(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.out_width)

    @cached_property
    def indptr(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.fan_in))).astype(np.int64)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros((self.out_width, self.in_width), dtype=np.uint8)
        m[self.rows, self.cols] = 1
        return m

    def dense_weights(self, w: np.ndarray) -> np.ndarray:
        W = np.zeros((self.out_width, self.in_width))
        W[self.rows, self.cols] = w
        return W

    # h, z and g below are unit-major: (units, batch)
    def affine(self, w, b, h):
        if self.is_dense:
            return w.reshape(self.out_width, self.in_width) @ h + b[:, None]
        return _kernels.sparse_affine(h, w, b, self.indptr, self.cols)

    def affine_grads(self, w, h, g, need_input: bool):
        """Gradients of ``sum(g * affine(h))`` w.r.t. weights and (optionally) h."""
        if self.is_dense:
            gw = (g @ h.T).reshape(-1)
            gh = w.reshape(self.out_width, self.in_width).T @ g if need_input else None
            return gw, gh
        gw = _kernels.sparse_weight_grads(g, h, self.indptr, self.cols)
        gh = _kernels.sparse_input_grads(g, w, self.indptr, self.cols, self.in_width) if need_input else None
        return gw, gh

    def to_dict(self) -> dict:
        d = {"in": self.in_width, "out": self.out_width, "layernorm": self.layernorm,
             "activation": self.activation, "dense": self.is_dense}
        if not self.is_dense:
            d["rows"] = self.rows.tolist()
            d["cols"] = self.cols.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        kw = dict(layernorm=d["layernorm"], activation=d["activation"])
        if d.get("dense"):
            return cls.dense(d["in"], d["out"], **kw)
        return cls(d["in"], d["out"], np.array(d["rows"]), np.array(d["cols"]), **kw)


def _make_layout(layers, readouts, combiner):
    layout, pos = {}, 0

    def take(name, size):
        nonlocal pos
        layout[name] = slice(pos, pos + size)
        pos += size

    for i, L in enumerate(layers):
        take(f"W{i}", L.nnz)
        take(f"b{i}", L.out_width)
    for j, li in enumerate(readouts):
        take(f"a{j}", layers[li].out_width)
        take(f"c{j}", 1)
    if combiner:
        take("beta", len(readouts))
        take("d", 1)
    return layout, pos


@dataclass(eq=False)
class Network:
    p: int
    layers: tuple[LayerSpec, ...]
    readouts: tuple[int, ...]
    combiner: bool
    kind: str = "custom"
    params: np.ndarray | None = None
    seed: int | None = None
    layout: dict = field(init=False, repr=False)
    size: int = field(init=False)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.readouts = tuple(int(r) for r in self.readouts)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if self.layers[0].in_width != self.p:
            raise ValueError(f"first layer expects {self.layers[0].in_width} inputs, p={self.p}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_width != b.in_width:
                raise ValueError("consecutive layer widths do not chain")
        if not self.readouts:
            raise ValueError("network needs at least one readout")
        if not self.combiner and len(self.readouts) != 1:
            raise ValueError("without a combiner exactly one readout is allowed")
        self.layout, self.size = _make_layout(self.layers, self.readouts, self.combiner)
        if self.params is None:
            self.params = np.zeros(self.size)
        else:
            self.params = np.array(self.params, dtype=np.float64)
            if self.params.shape != (self.size,):
                raise ValueError(f"expected {self.size} parameters, got {self.params.shape}")

    def view(self, name: str, theta: np.ndarray | None = None) -> np.ndarray:
        return (self.params if theta is None else theta)[self.layout[name]]

    def with_params(self, theta: np.ndarray) -> "Network":
        return replace(self, params=np.array(theta, dtype=np.float64))

    @property
    def n_params(self) -> int:
        return self.size

    def predict(self, X: np.ndarray) -> np.ndarray:
        return forward(self, X)[0]

    # checkpoint format: magic, u64 header length, JSON header, little-endian f64 block
    def header(self) -> dict:
        return {
            "format": "HOMNET1",
            "kind": self.kind,
            "p": self.p,
            "seed": self.seed,
            "combiner": self.combiner,
            "readouts": list(self.readouts),
            "layers": [L.to_dict() for L in self.layers],
            "layout": {k: [s.start, s.stop] for k, s in self.layout.items()},
            "n_params": self.size,
        }

    def save(self, path) -> None:
        head = json.dumps(self.header()).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(head)))
            fh.write(head)
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Network":
        raw = Path(path).read_bytes()
        if not raw.startswith(MAGIC):
            raise ValueError(f"{path} is not a HOMNET1 checkpoint")
        (hlen,) = struct.unpack_from("<Q", raw, len(MAGIC))
        start = len(MAGIC) + 8
        head = json.loads(raw[start:start + hlen].decode("utf-8"))
        theta = np.frombuffer(raw[start + hlen:], dtype="<f8").astype(np.float64)
        net = cls(head["p"], [LayerSpec.from_dict(d) for d in head["layers"]], head["readouts"],
                  head["combiner"], head["kind"], theta, head["seed"])
        if {k: [s.start, s.stop] for k, s in net.layout.items()} != head["layout"]:
            raise ValueError(f"{path}: parameter layout does not match architecture")
        return net


# --------------------------------------------------------------------------- builders

def _hidden_wiring(h) -> Wiring:
    w = h.wiring() if isinstance(h, InteractionHierarchy) else h
    if w.k_max < 2 or w.widths[1] == 0:
        raise EmptyHierarchyError(
            "hierarchy has no order-2 units (MFCF produced only singleton cliques); "
            "lower the gain threshold or check the dependency matrix")
    return w


def build_hnn(h: InteractionHierarchy | Wiring) -> Network:
    w = _hidden_wiring(h)
    layers = [LayerSpec(w.widths[k - 2], w.widths[k - 1], e[:, 0], e[:, 1], layernorm=True)
              for k, e in zip(range(2, w.k_max + 1), w.edges)]
    return Network(w.p, layers, range(len(layers)), True, kind="hnn")


def build_mlp_hnn(h: InteractionHierarchy | Wiring) -> Network:
    w = _hidden_wiring(h)
    layers = [LayerSpec.dense(w.widths[k - 2], w.widths[k - 1], layernorm=True)
              for k in range(2, w.k_max + 1)]
    return Network(w.p, layers, range(len(layers)), True, kind="mlp-hnn")


def build_mlp(p: int, hidden_widths) -> Network:
    widths = [int(x) for x in hidden_widths]
    if not widths or min(widths) < 1:
        raise ValueError(f"hidden widths must be >= 1, got {hidden_widths}")
    ins = [p, *widths[:-1]]
    layers = [LayerSpec.dense(i, o) for i, o in zip(ins, widths)]
    return Network(p, layers, (len(layers) - 1,), False, kind="mlp")


def pm_width(p: int, target_params: int) -> int:
    # a 1-hidden-layer MLP of width w has (p + 2) * w + 1 parameters; round half up
    return max(1, int(np.floor((target_params - 1) / (p + 2) + 0.5)))


def build_pm_mlp(p: int, target_params: int) -> Network:
    net = build_mlp(p, [pm_width(p, target_params)])
    net.kind = "pm-mlp"
    return net


def init_params(net: Network, seed: int) -> Network:
    """He-uniform weights per mask row, zero biases, combiner as an average."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(net.size)
    for i, L in enumerate(net.layers):
        bound = np.sqrt(6.0 / L.fan_in)[L.rows]
        theta[net.layout[f"W{i}"]] = rng.uniform(-1.0, 1.0, L.nnz) * bound
    for j, li in enumerate(net.readouts):
        width = net.layers[li].out_width
        theta[net.layout[f"a{j}"]] = rng.uniform(-1.0, 1.0, width) * np.sqrt(6.0 / width)
    if net.combiner:
        theta[net.layout["beta"]] = 1.0 / len(net.readouts)
    out = net.with_params(theta)
    out.seed = seed
    return out


# --------------------------------------------------------------------------- evaluation

@dataclass
class ForwardCache:
    """Per-layer intermediates, stored unit-major (units, batch)."""

    inputs: list[np.ndarray]  # h^(k-1) fed to each layer
    normed: list[np.ndarray]  # pre-activations after layer norm
    inv_std: list[np.ndarray]
    acts: list[np.ndarray]
    readouts: list[np.ndarray]
    batch: int
    n_params: int


def forward(net: Network, X: np.ndarray, theta: np.ndarray | None = None):
    theta = net.params if theta is None else theta
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.p:
        raise ValueError(f"batch must have shape (m, {net.p}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("batch contains non-finite values")
    lay = net.layout
    h = np.ascontiguousarray(X.T)
    inputs, normed, inv_stds, acts = [], [], [], []
    for i, L in enumerate(net.layers):
        inputs.append(h)
        z = L.affine(theta[lay[f"W{i}"]], theta[lay[f"b{i}"]], h)
        h, inv = _kernels.norm_act(z, L.normalizes, L.activation == "relu", LN_EPS)
        normed.append(z)
        inv_stds.append(inv)
        acts.append(h)
    rs = [theta[lay[f"a{j}"]] @ acts[li] + theta[lay[f"c{j}"]][0] for j, li in enumerate(net.readouts)]
    if net.combiner:
        y = np.full(X.shape[0], theta[lay["d"]][0])
        for b, r in zip(theta[lay["beta"]], rs):
            y += b * r
    else:
        y = rs[0]
    return y, ForwardCache(inputs, normed, inv_stds, acts, rs, X.shape[0], net.size)


def backward(net: Network, cache: ForwardCache, loss_grad: np.ndarray,
             theta: np.ndarray | None = None) -> np.ndarray:
    """Gradient of ``mean_i loss_i`` given ``loss_grad[i] = d loss_i / d yhat_i``."""
    theta = net.params if theta is None else theta
    g_y = np.asarray(loss_grad, dtype=np.float64).reshape(-1)
    if cache.n_params != net.size or g_y.shape[0] != cache.batch or len(cache.acts) != len(net.layers):
        raise ValueError("forward cache does not match this network / gradient batch")
    lay = net.layout
    grad = np.zeros(net.size)
    g_y = g_y / cache.batch

    if net.combiner:
        grad[lay["d"]] = g_y.sum()
        grad[lay["beta"]] = [r @ g_y for r in cache.readouts]
        g_r = [b * g_y for b in theta[lay["beta"]]]
    else:
        g_r = [g_y]

    g_h: list[np.ndarray | None] = [None] * len(net.layers)
    for j, li in enumerate(net.readouts):
        grad[lay[f"a{j}"]] = cache.acts[li] @ g_r[j]
        grad[lay[f"c{j}"]] = g_r[j].sum()
        contrib = np.outer(theta[lay[f"a{j}"]], g_r[j])
        g_h[li] = contrib if g_h[li] is None else g_h[li] + contrib

    for i in range(len(net.layers) - 1, -1, -1):
        L = net.layers[i]
        g = g_h[i]
        if g is None:
            continue
        g = _kernels.norm_act_grad(g, cache.normed[i], cache.inv_std[i], L.normalizes,
                                   L.activation == "relu")
        grad[lay[f"b{i}"]] = g.sum(axis=1)
        gw, gh = L.affine_grads(theta[lay[f"W{i}"]], cache.inputs[i], g, need_input=i > 0)
        grad[lay[f"W{i}"]] = gw
        if i > 0:
            g_h[i - 1] = gh if g_h[i - 1] is None else g_h[i - 1] + gh
    return grad


def mse_loss(net: Network, X: np.ndarray, y: np.ndarray, theta: np.ndarray | None = None):
    """Mean squared error and its gradient."""
    yhat, cache = forward(net, X, theta)
    resid = yhat - y
    return float(np.mean(resid * resid)), backward(net, cache, 2.0 * resid, theta)
