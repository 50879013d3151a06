"""Small dense feed-forward networks with softmax / sigmoid output heads.

Everything here is plain numpy. Parameters keep whatever dtype they were
created with; checkpoints always store float32.
"""

from __future__ import annotations

import copy
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

ACTIVATIONS = ("sigmoid", "relu", "linear")
HEAD_KINDS = ("categorical", "bernoulli")

CHECKPOINT_MAGIC = b"LEM1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    def __init__(self, batch_index: int, loss: float):
        super().__init__(f"non-finite loss {loss} at batch {batch_index}")
        self.batch_index = batch_index
        self.loss = loss


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias length must match the weight matrix's rows")

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Head:
    kind: str
    size: int

    def __post_init__(self) -> None:
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("head size must be positive")


@dataclass
class TrainConfig:
    learning_rate: float
    batch_size: int
    max_epochs: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Network:
    layers: list[Dense]
    heads: tuple[Head, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.heads = tuple(self.heads)
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.n_in != a.n_out:
                raise ValueError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")
        if sum(h.size for h in self.heads) != self.n_out:
            raise ValueError("head partition does not cover the output layer")
        if self.layers[-1].activation != "linear":
            raise ValueError("the output layer must be linear; heads apply softmax/sigmoid")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def head_partition(self) -> list[int]:
        return [h.size for h in self.heads]

    @property
    def dtype(self) -> np.dtype:
        return self.layers[0].weight.dtype

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "Network":
        layers = [Dense(l.weight.astype(dtype), l.bias.astype(dtype), l.activation) for l in self.layers]
        return Network(layers, self.heads, copy.deepcopy(self.metadata))

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.n_in}")
        return x

    def logits(self, x: np.ndarray) -> np.ndarray:
        a = self._check_input(x)
        for layer in self.layers:
            a = _activate(a @ layer.weight.T + layer.bias, layer.activation)
        return a

    def split(self, z: np.ndarray) -> list[np.ndarray]:
        bounds = np.cumsum(self.head_partition)[:-1]
        return np.split(z, bounds, axis=-1)

    def forward_heads(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-head probabilities for a single input or a batch of inputs."""
        out = []
        for head, z in zip(self.heads, self.split(self.logits(x))):
            out.append(_softmax(z) if head.kind == "categorical" else _sigmoid(z))
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate(self.forward_heads(x), axis=-1)

    def loss_and_grads(
        self, x: np.ndarray, targets: Sequence[np.ndarray]
    ) -> tuple[float, list[np.ndarray]]:
        """Mean over the batch of the summed per-head cross-entropies.

        ``targets`` holds one array per head: class indices (N,) for a
        categorical head, 0/1 values (N, size) for a Bernoulli head.
        """
        x = self._check_input(x)
        if x.ndim == 1:
            x = x[None, :]
        n = x.shape[0]
        acts = [x]
        pre = []
        a = x
        for layer in self.layers:
            z = a @ layer.weight.T + layer.bias
            pre.append(z)
            a = _activate(z, layer.activation)
            acts.append(a)

        loss = 0.0
        dz_parts = []
        for head, z, t in zip(self.heads, self.split(a), targets):
            if head.kind == "categorical":
                t = np.asarray(t, dtype=np.int64).reshape(n)
                if t.min() < 0 or t.max() >= head.size:
                    raise ValueError("target index outside head range")
                logp = _log_softmax(z)
                loss -= logp[np.arange(n), t].sum()
                g = np.exp(logp)
                g[np.arange(n), t] -= 1.0
            else:
                t = np.asarray(t, dtype=z.dtype).reshape(n, head.size)
                # BCE on logits: softplus(z) - t z
                loss += (np.logaddexp(0.0, z) - t * z).sum()
                g = _sigmoid(z) - t
            dz_parts.append(g)
        loss = float(loss) / n
        dz = np.concatenate(dz_parts, axis=1) / n

        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            grads[2 * k] = dz.T @ acts[k]
            grads[2 * k + 1] = dz.sum(axis=0)
            if k == 0:
                break
            da = dz @ layer.weight
            prev = self.layers[k - 1].activation
            if prev == "sigmoid":
                s = acts[k]
                dz = da * s * (1.0 - s)
            elif prev == "relu":
                dz = da * (pre[k - 1] > 0)
            else:
                dz = da
        return loss, grads

    def loss(self, x: np.ndarray, targets: Sequence[np.ndarray]) -> float:
        x = self._check_input(x)
        if x.ndim == 1:
            x = x[None, :]
        n = x.shape[0]
        total = 0.0
        for head, z, t in zip(self.heads, self.split(self.logits(x)), targets):
            if head.kind == "categorical":
                t = np.asarray(t, dtype=np.int64).reshape(n)
                total -= _log_softmax(z)[np.arange(n), t].sum()
            else:
                t = np.asarray(t, dtype=z.dtype).reshape(n, head.size)
                total += (np.logaddexp(0.0, z) - t * z).sum()
        return float(total) / n


def init_network(
    sizes: Sequence[int],
    hidden_activation: str,
    heads: Sequence[Head],
    seed: int = 0,
    dtype=np.float32,
) -> Network:
    """Build a network ``sizes[0] -> ... -> sizes[-1]`` with fan-in uniform weights.

    Hidden relu layers start with bias 0.01 so no unit is dead at init.
    """
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(sizes) - 1
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = hidden_activation if k < n_layers - 1 else "linear"
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)
        b = np.full(n_out, 0.01 if act == "relu" else 0.0, dtype=dtype)
        layers.append(Dense(w, b, act))
    return Network(layers, tuple(heads))


class Adam:
    """Adam with the usual (0.9, 0.999, 1e-8) defaults; updates in place."""

    def __init__(self, net: Network, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.params()]
        self.v = [np.zeros_like(p) for p in net.params()]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if self.learning_rate == 0:
            return
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.learning_rate * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for p, g, m, v in zip(self.net.params(), grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.dtype, copy=False)


def train_step(
    net: Network,
    inputs: np.ndarray,
    targets: Sequence[np.ndarray],
    optimizer: Adam,
    batch_index: int = 0,
) -> float:
    """One optimiser step on one batch; returns the pre-update loss."""
    if len(inputs) == 0:
        raise ValueError("empty batch")
    loss, grads = net.loss_and_grads(inputs, targets)
    if not np.isfinite(loss):
        raise TrainingDiverged(batch_index, loss)
    optimizer.step(grads)
    return loss


# -- checkpoints ------------------------------------------------------------


def dumps_network(net: Network) -> bytes:
    """Serialise a network.

    Layout: b"LEM1", u32 version, u32 JSON length, JSON metadata, then every
    layer's row-major weight matrix and bias as little-endian float32, then a
    u32 CRC32 of everything after the magic.
    """
    header = {
        "layers": [{"in": l.n_in, "out": l.n_out, "activation": l.activation} for l in net.layers],
        "heads": [{"kind": h.kind, "size": h.size} for h in net.heads],
        "metadata": net.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob]
    for layer in net.layers:
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    payload = b"".join(parts)
    return CHECKPOINT_MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def loads_network(data: bytes) -> Network:
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad magic; not a network checkpoint")
    if len(data) < 16:
        raise CheckpointError("truncated checkpoint")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 12 + hlen
    if len(data) < start + 4:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[12:start].decode("utf-8"))
        dims = [(int(l["out"]), int(l["in"]), l["activation"]) for l in header["layers"]]
        heads = tuple(Head(h["kind"], int(h["size"])) for h in header["heads"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError("corrupt checkpoint header") from exc
    n_floats = sum(o * i + o for o, i, _ in dims)
    expected = start + 4 * n_floats + 4
    if len(data) < expected:
        raise CheckpointError(f"truncated checkpoint: {len(data)} bytes, header implies {expected}")
    if len(data) > expected:
        raise CheckpointError(f"checkpoint has {len(data) - expected} bytes beyond the declared weights")
    (crc,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(data[4 : expected - 4]) != crc:
        raise CheckpointError("checksum mismatch")
    flat = np.frombuffer(data, dtype="<f4", count=n_floats, offset=start).astype(np.float32)
    layers = []
    pos = 0
    for o, i, act in dims:
        w = flat[pos : pos + o * i].reshape(o, i).copy()
        pos += o * i
        b = flat[pos : pos + o].copy()
        pos += o
        layers.append(Dense(w, b, act))
    try:
        return Network(layers, heads, header.get("metadata", {}))
    except ValueError as exc:
        raise CheckpointError(f"inconsistent architecture: {exc}") from exc


def save_checkpoint(net: Network, path: str | Path) -> None:
    Path(path).write_bytes(dumps_network(net))


def load_checkpoint(path: str | Path) -> Network:
    return loads_network(Path(path).read_bytes())
