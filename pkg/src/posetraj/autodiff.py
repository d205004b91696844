"""Reverse-mode differentiable computation over numpy arrays.

Ops executed while a :class:`Tape` is active append backward closures to it;
``backward(tape, loss)`` replays them in reverse and accumulates gradients
into every tensor with ``requires_grad``. Gradients flow *through* frozen
tensors (``requires_grad=False``) without being stored on them, so frozen
networks stay untouched while still passing gradients upstream.

Every op validates that its output is finite; a NaN/Inf anywhere is a hard
:class:`NonFiniteError` naming the op.
"""

from __future__ import annotations

import base64
import gzip
import hashlib
import json
import math

import numpy as np


class NonFiniteError(ArithmeticError):
    """An op produced NaN or Inf."""


class Tape:
    """Ordered record of executed ops for one backward traversal."""

    def __init__(self):
        self._records = []

    def record(self, backward_fn):
        self._records.append(backward_fn)

    def clear(self):
        self._records.clear()

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False


_tape_stack: list[Tape] = []


def _active_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


class Tensor:
    """Array value with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if like is not None and isinstance(x, (int, float)):
        return Tensor(np.asarray(x, dtype=like.data.dtype))
    return Tensor(x)


def _check_finite(op: str, arr: np.ndarray):
    # summing first is one pass without a bool temporary; any NaN/Inf entry
    # poisons the sum (float32 overflow of a huge-but-finite sum also trips,
    # which is a training failure worth erroring on anyway)
    if not math.isfinite(float(arr.sum())):
        if np.isfinite(arr).all():
            return
        raise NonFiniteError(f"non-finite output of op {op!r}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward_builder):
    """Create the output tensor and record the backward closure if needed."""
    _check_finite(op, data)
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        propagate = backward_builder(out)

        def _backward():
            if out.grad is not None:
                propagate(out.grad)

        tape.record(_backward)
    return out


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Coerce operands; python scalars adopt the other side's dtype."""
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def build(out):
        def prop(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g, b.data.shape))
        return prop

    return _make("add", a.data + b.data, (a, b), build)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def build(out):
        def prop(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(-g, b.data.shape))
        return prop

    return _make("sub", a.data - b.data, (a, b), build)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def build(out):
        def prop(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g * a.data, b.data.shape))
        return prop

    return _make("mul", a.data * b.data, (a, b), build)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")

    def build(out):
        def prop(g):
            if a.requires_grad:
                a.accumulate(g @ b.data.T)
            if b.requires_grad:
                b.accumulate(a.data.T @ g)
        return prop

    return _make("matmul", a.data @ b.data, (a, b), build)


def affine(x, w, b) -> Tensor:
    """x @ w + b with explicit shape validation."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[-1]:
        raise ValueError(
            f"affine shape mismatch: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    return add(matmul(x, w), b)


def concat(tensors, axis: int = 1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def build(out):
        def prop(g):
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    t.accumulate(g[tuple(idx)])
        return prop

    return _make("concat", np.concatenate([t.data for t in ts], axis=axis), tuple(ts), build)


def narrow(x, start: int, stop: int, axis: int = 1) -> Tensor:
    """Contiguous slice along ``axis``."""
    x = as_tensor(x)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def build(out):
        def prop(g):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[idx] = g
                x.accumulate(full)
        return prop

    return _make("narrow", x.data[idx].copy(), (x,), build)


def gather_cols(x, indices) -> Tensor:
    """Column gather (axis 1) for routing channel subsets."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=int)

    def build(out):
        def prop(g):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                np.add.at(full, (slice(None), idx), g)
                x.accumulate(full)
        return prop

    return _make("gather_cols", x.data[:, idx].copy(), (x,), build)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.data.shape

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g.reshape(old))
        return prop

    return _make("reshape", x.data.reshape(shape), (x,), build)


def scale_tanh_channels(x, indices, scales) -> Tensor:
    """Replace columns ``indices`` by ``scales * tanh(col)``, other columns
    pass through (fused bounded-output head)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=int)
    sc = np.asarray(scales, dtype=x.data.dtype)
    y = x.data.copy()
    th = np.tanh(x.data[:, idx])
    y[:, idx] = sc * th

    def build(out):
        def prop(g):
            if x.requires_grad:
                full = g.copy()
                full[:, idx] = g[:, idx] * sc * (1.0 - th * th)
                x.accumulate(full)
        return prop

    return _make("scale_tanh_channels", y, (x,), build)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g * (1.0 - out.data * out.data))
        return prop

    return _make("tanh", y, (x,), build)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.where(
            x.data >= 0,
            1.0 / (1.0 + np.exp(-np.abs(x.data))),
            np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
        )

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g * out.data * (1.0 - out.data))
        return prop

    return _make("sigmoid", y, (x,), build)


def relu(x) -> Tensor:
    x = as_tensor(x)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g * (x.data > 0))
        return prop

    return _make("relu", np.maximum(x.data, 0.0), (x,), build)


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = as_tensor(x)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g * np.where(x.data > 0, 1.0, slope))
        return prop

    return _make("leaky_relu", np.where(x.data > 0, x.data, slope * x.data), (x,), build)


def activation(x, kind: str) -> Tensor:
    fns = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "leaky_relu": leaky_relu}
    if kind not in fns:
        raise ValueError(f"unknown activation {kind!r}")
    return fns[kind](x)


def abs_(x) -> Tensor:
    x = as_tensor(x)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g * np.sign(x.data))
        return prop

    return _make("abs", np.abs(x.data), (x,), build)


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.log(x.data)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g / x.data)
        return prop

    return _make("log", y, (x,), build)


def clamp(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    mask = (x.data > lo) & (x.data < hi)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(g * mask)
        return prop

    return _make("clamp", np.clip(x.data, lo, hi), (x,), build)


def sum_(x) -> Tensor:
    x = as_tensor(x)

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(np.full_like(x.data, float(g)))
        return prop

    return _make("sum", np.asarray(x.data.sum()), (x,), build)


def mean_(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(np.full_like(x.data, float(g) / n))
        return prop

    return _make("mean", np.asarray(x.data.mean()), (x,), build)


def l1(x, y) -> Tensor:
    """Mean absolute difference."""
    x, y = as_tensor(x), as_tensor(y)
    if x.data.shape != y.data.shape:
        raise ValueError(f"l1 shape mismatch: {x.data.shape} vs {y.data.shape}")
    return mean_(abs_(sub(x, y)))


def bce(probs, targets) -> Tensor:
    """Binary cross-entropy on probabilities, clamped away from {0, 1}."""
    p, t = as_tensor(probs), as_tensor(targets)
    if p.data.shape != t.data.shape:
        raise ValueError(f"bce shape mismatch: {p.data.shape} vs {t.data.shape}")
    p = clamp(p, 1e-7, 1.0 - 1e-7)
    pos = mul(t, log(p))
    neg = mul(sub(Tensor(np.ones_like(t.data)), t), log(sub(Tensor(np.ones_like(p.data)), p)))
    return mul(mean_(add(pos, neg)), -1.0)


def bce_logits(logits, targets) -> Tensor:
    """Binary cross-entropy on pre-sigmoid logits (numerically stable; the
    gradient sigmoid(l) - y never saturates to exactly zero)."""
    x = as_tensor(logits)
    y = np.asarray(targets, dtype=x.data.dtype)
    if x.data.shape != y.shape:
        raise ValueError(f"bce_logits shape mismatch: {x.data.shape} vs {y.shape}")
    l = x.data
    loss = np.maximum(l, 0.0) - y * l + np.log1p(np.exp(-np.abs(l)))
    n = l.size
    with np.errstate(over="ignore"):
        la = np.abs(l)
        sig = np.where(l >= 0, 1.0 / (1.0 + np.exp(-la)), np.exp(-la) / (1.0 + np.exp(-la)))

    def build(out):
        def prop(g):
            if x.requires_grad:
                x.accumulate(float(g) * (sig - y) / n)
        return prop

    return _make("bce_logits", np.asarray(loss.mean()), (x,), build)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of integer ``labels`` given (n, C) logits."""
    x = as_tensor(logits)
    y = np.asarray(labels, dtype=int)
    n = x.data.shape[0]
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(n), y].mean()
    probs = np.exp(logp)

    def build(out):
        def prop(g):
            if x.requires_grad:
                grad = probs.copy()
                grad[np.arange(n), y] -= 1.0
                x.accumulate(float(g) * grad / n)
        return prop

    return _make("softmax_cross_entropy", np.asarray(loss), (x,), build)


def lstm_cell(x, h_prev, c_prev, w, b):
    """One LSTM step: sigmoid input/forget/output gates, tanh candidate.

    ``w`` has shape (in + hidden, 4*hidden) with gate blocks ordered
    (input, forget, candidate, output); ``b`` has shape (4*hidden,).
    Implemented as one fused tape primitive (recurrent scans dominate
    training cost, so the cell carries a hand-written backward).
    """
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    w, b = as_tensor(w), as_tensor(b)
    hidden = h_prev.data.shape[-1]
    if w.data.shape != (x.data.shape[-1] + hidden, 4 * hidden):
        raise ValueError(
            f"lstm_cell weight shape {w.data.shape} incompatible with "
            f"input {x.data.shape} and hidden {hidden}"
        )
    cat = np.concatenate([x.data, h_prev.data], axis=1)
    z = cat @ w.data + b.data
    with np.errstate(over="ignore"):
        za = np.abs(z)
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-za)), np.exp(-za) / (1.0 + np.exp(-za)))
    i = sig[:, :hidden]
    f = sig[:, hidden:2 * hidden]
    g = np.tanh(z[:, 2 * hidden:3 * hidden])
    o = sig[:, 3 * hidden:]
    c_data = f * c_prev.data + i * g
    tc = np.tanh(c_data)
    h_data = o * tc
    _check_finite("lstm_cell", h_data)
    _check_finite("lstm_cell", c_data)

    needs = any(t.requires_grad for t in (x, h_prev, c_prev, w, b))
    h_out = Tensor(h_data, requires_grad=needs)
    c_out = Tensor(c_data, requires_grad=needs)
    tape = _active_tape()
    if tape is not None and needs:
        in_dim = x.data.shape[-1]

        def _backward():
            dh = h_out.grad
            dc_acc = c_out.grad
            if dh is None and dc_acc is None:
                return
            dc = dc_acc.copy() if dc_acc is not None else np.zeros_like(c_data)
            if dh is not None:
                dc += dh * o * (1.0 - tc * tc)
                dz_o = dh * tc * o * (1.0 - o)
            else:
                dz_o = np.zeros_like(o)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev.data * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dz_o,
            ], axis=1)
            if w.requires_grad:
                w.accumulate(cat.T @ dz)
            if b.requires_grad:
                b.accumulate(dz.sum(axis=0))
            dcat = dz @ w.data.T
            if x.requires_grad:
                x.accumulate(dcat[:, :in_dim])
            if h_prev.requires_grad:
                h_prev.accumulate(dcat[:, in_dim:])
            if c_prev.requires_grad:
                c_prev.accumulate(dc * f)

        tape.record(_backward)
    return h_out, c_out


def backward(tape: Tape, loss: Tensor):
    """Accumulate gradients of a scalar loss into all reachable parameters.

    The tape is cleared afterwards; each recorded op runs exactly once.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for record in reversed(tape._records):
        record()
    tape.clear()


class ParamStore:
    """Named parameters with seeded, reproducible initialization."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, shape: tuple, init: str = "glorot", dtype=np.float32) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        if init == "zeros":
            data = np.zeros(shape, dtype=dtype)
        elif init == "glorot":
            fan_in = shape[0] if len(shape) > 1 else shape[0]
            fan_out = shape[1] if len(shape) > 1 else shape[0]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            data = self._rng.uniform(-limit, limit, size=shape).astype(dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t

    def add_linear(self, name: str, fan_in: int, fan_out: int, dtype=np.float32):
        w = self.add(f"{name}.w", (fan_in, fan_out), "glorot", dtype)
        b = self.add(f"{name}.b", (fan_out,), "zeros", dtype)
        return w, b

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def set_trainable(self, flag: bool):
        for t in self.params.values():
            t.requires_grad = flag

    def grad_norm(self) -> float:
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
        return math.sqrt(total)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for name, t in self.params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()

    def copy(self) -> "ParamStore":
        dup = ParamStore(self.seed)
        for name, t in self.params.items():
            dup.params[name] = Tensor(t.data.copy(), requires_grad=t.requires_grad)
        return dup


def init_params(layer_sizes, seed: int) -> ParamStore:
    """MLP parameters for consecutive ``layer_sizes``; glorot weights, zero biases."""
    store = ParamStore(seed)
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        store.add_linear(f"layer{i}", fan_in, fan_out)
    return store


def clip_global_norm(stores, max_norm: float) -> float:
    """Scale all gradients so their joint norm is at most ``max_norm``."""
    if isinstance(stores, ParamStore):
        stores = [stores]
    total = 0.0
    for s in stores:
        total += s.grad_norm() ** 2
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for s in stores:
            for t in s.params.values():
                if t.grad is not None:
                    t.grad *= scale
    return norm


class Adam:
    """Adaptive-moment optimizer with bias correction."""

    def __init__(self, store: ParamStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {n: np.zeros_like(p.data) for n, p in store.params.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in store.params.items()}

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.store.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, stores: dict[str, ParamStore], step: int = 0, extra: dict | None = None):
    """Write named parameter stores as versioned gzip JSON (base64 payloads)."""
    doc = {
        "format": "posetraj-checkpoint",
        "version": CHECKPOINT_VERSION,
        "step": step,
        "extra": extra or {},
        "stores": {},
    }
    for store_name, store in stores.items():
        entry = {"seed": store.seed, "params": {}}
        for name, t in store.params.items():
            entry["params"][name] = {
                "shape": list(t.data.shape),
                "dtype": str(t.data.dtype),
                "data": base64.b64encode(np.ascontiguousarray(t.data).tobytes()).decode(),
            }
        doc["stores"][store_name] = entry
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[dict[str, ParamStore], int, dict]:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "posetraj-checkpoint":
        raise ValueError("not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    stores = {}
    for store_name, entry in doc["stores"].items():
        store = ParamStore(entry["seed"])
        for name, meta in entry["params"].items():
            arr = np.frombuffer(base64.b64decode(meta["data"]), dtype=meta["dtype"])
            arr = arr.reshape(meta["shape"]).copy()
            store.params[name] = Tensor(arr, requires_grad=True)
        stores[store_name] = store
    return stores, doc.get("step", 0), doc.get("extra", {})


def load_checkpoint_into(path, stores: dict[str, ParamStore]) -> int:
    """Load a checkpoint into existing stores; architecture must match."""
    loaded, step, _ = load_checkpoint(path)
    if set(loaded) != set(stores):
        raise ValueError(f"checkpoint stores {sorted(loaded)} != expected {sorted(stores)}")
    for store_name, src in loaded.items():
        dst = stores[store_name]
        if src.names() != dst.names():
            raise ValueError(f"parameter names differ in store {store_name!r}")
        for name in src.names():
            if src[name].data.shape != dst[name].data.shape:
                raise ValueError(
                    f"shape mismatch for {store_name}.{name}: "
                    f"{src[name].data.shape} vs {dst[name].data.shape}"
                )
            dst[name].data = src[name].data.astype(dst[name].data.dtype)
    return step
