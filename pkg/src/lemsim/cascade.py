"""The three-stage next-event model: type -> (accuracy, goal) -> (x, y, time, side)."""

from __future__ import annotations

import functools
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .events import COORD_BINS, N_TYPES, STATE_DIM, EventVocabulary, PredictedEvent, default_vocabulary
from .nnet import CheckpointError, Head, Network, dumps_network, loads_network

TYPE_IN = STATE_DIM
ACC_IN = STATE_DIM + N_TYPES
DATA_IN = ACC_IN + 2
N_TIME_BINS = 60
DATA_SPLIT = (COORD_BINS, COORD_BINS, N_TIME_BINS, 2)

TYPE_HEADS = (Head("categorical", N_TYPES),)
ACC_HEADS = (Head("bernoulli", 2),)
DATA_HEADS = tuple(Head("categorical", n) for n in DATA_SPLIT)

# uniforms consumed per sampled event, in this order
U_TYPE, U_ACC, U_GOAL, U_X, U_Y, U_TIME, U_HOME = range(7)
DRAWS_PER_EVENT = 7

CASCADE_MAGIC = b"LEMK"
CASCADE_VERSION = 1


@dataclass
class ModelCascade:
    type_net: Network
    accuracy_net: Network
    data_net: Network
    vocabulary: EventVocabulary = field(default_factory=default_vocabulary)
    time_bin_seconds: float = 60.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, net, n_in, heads in (
            ("type", self.type_net, TYPE_IN, TYPE_HEADS),
            ("accuracy", self.accuracy_net, ACC_IN, ACC_HEADS),
            ("data", self.data_net, DATA_IN, DATA_HEADS),
        ):
            if net.n_in != n_in or tuple(net.heads) != heads:
                raise ValueError(
                    f"{name} network is {net.n_in}->{net.head_partition}, expected {n_in}->{[h.size for h in heads]}"
                )
        if self.time_bin_seconds <= 0:
            raise ValueError("time_bin_seconds must be positive")

    @functools.cached_property
    def _f64(self) -> tuple[Network, Network, Network]:
        # inference runs in float64 so sampled outcomes do not depend on batch layout
        return (self.type_net.astype(np.float64), self.accuracy_net.astype(np.float64),
                self.data_net.astype(np.float64))

    def invalidate(self) -> None:
        """Drop cached inference copies after the weights were changed in place."""
        self.__dict__.pop("_f64", None)

    def nets(self) -> tuple[Network, Network, Network]:
        return self.type_net, self.accuracy_net, self.data_net


def _check_onehot(type_onehot: np.ndarray) -> np.ndarray:
    t = np.asarray(type_onehot, dtype=np.float64)
    if t.shape[-1] != N_TYPES:
        raise ValueError(f"type one-hot must have length {N_TYPES}")
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=-1) == 1)):
        raise ValueError("type encoding is not one-hot")
    return t


def predict_type(c: ModelCascade, state: np.ndarray) -> np.ndarray:
    return c._f64[0].forward_heads(state)[0]


def predict_accuracy(c: ModelCascade, state: np.ndarray, type_onehot: np.ndarray) -> np.ndarray:
    """(p_accurate, p_goal); p_goal is zero for types that cannot score."""
    t = _check_onehot(type_onehot)
    x = np.concatenate([np.asarray(state, dtype=np.float64), t], axis=-1)
    p = c._f64[1].forward_heads(x)[0].copy()
    capable = t @ c.vocabulary.goal_mask.astype(np.float64)
    p[..., 1] *= capable
    return p


def predict_data(
    c: ModelCascade, state: np.ndarray, type_onehot: np.ndarray, acc_pair: np.ndarray
) -> list[np.ndarray]:
    """Distributions over x bin (101), y bin (101), time bin (60), home side (2)."""
    t = _check_onehot(type_onehot)
    x = np.concatenate([np.asarray(state, dtype=np.float64), t, np.asarray(acc_pair, dtype=np.float64)], axis=-1)
    return c._f64[2].forward_heads(x)


def _inverse_cdf(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p, axis=1)
    idx = (cdf <= u[:, None] * cdf[:, -1:]).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def _softmax_t(z: np.ndarray, temperature: float) -> np.ndarray:
    if temperature != 1.0:
        z = z / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid_t(z: np.ndarray, temperature: float) -> np.ndarray:
    if temperature != 1.0:
        z = z / temperature
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sample_events(
    c: ModelCascade, states: np.ndarray, uniforms: np.ndarray, temperature: float = 1.0
) -> dict[str, np.ndarray]:
    """Sample one event per row of ``states`` from the cascade.

    ``uniforms`` is (n, 7) in [0, 1); column order is type, accuracy, goal,
    x, y, time, side. Each stage conditions on the values sampled before it.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = states.shape[0]
    type_net, acc_net, data_net = c._f64
    buf = np.zeros((n, DATA_IN))
    buf[:, :STATE_DIM] = states

    z = type_net.logits(buf[:, :TYPE_IN])
    type_id = _inverse_cdf(_softmax_t(z, temperature), uniforms[:, U_TYPE])
    buf[np.arange(n), STATE_DIM + type_id] = 1.0

    p = _sigmoid_t(acc_net.logits(buf[:, :ACC_IN]), temperature)
    is_accurate = (uniforms[:, U_ACC] < p[:, 0]).astype(np.int64)
    is_goal = ((uniforms[:, U_GOAL] < p[:, 1]) & c.vocabulary.goal_mask[type_id]).astype(np.int64)
    buf[:, ACC_IN] = is_accurate
    buf[:, ACC_IN + 1] = is_goal

    zx, zy, zt, zh = data_net.split(data_net.logits(buf))
    return {
        "type_id": type_id,
        "is_accurate": is_accurate,
        "is_goal": is_goal,
        "x_bin": _inverse_cdf(_softmax_t(zx, temperature), uniforms[:, U_X]),
        "y_bin": _inverse_cdf(_softmax_t(zy, temperature), uniforms[:, U_Y]),
        "time_bin": _inverse_cdf(_softmax_t(zt, temperature), uniforms[:, U_TIME]),
        "is_home": _inverse_cdf(_softmax_t(zh, temperature), uniforms[:, U_HOME]),
    }


def sample_event(
    c: ModelCascade, state: np.ndarray, rng: np.random.Generator, temperature: float = 1.0
) -> PredictedEvent:
    u = rng.random(DRAWS_PER_EVENT)
    out = sample_events(c, np.asarray(state, dtype=np.float64)[None, :], u[None, :], temperature)
    return PredictedEvent(**{k: int(v[0]) for k, v in out.items()})


def constant_cascade(vocabulary: EventVocabulary | None = None, time_bin_seconds: float = 60.0) -> ModelCascade:
    """A cascade with one linear layer per stage and every parameter zero.

    Each stage starts out uniform; tests and tools set the biases to pin
    down specific distributions.
    """
    from .nnet import Dense

    def zero(n_in, heads):
        n_out = sum(h.size for h in heads)
        return Network([Dense(np.zeros((n_out, n_in), np.float32), np.zeros(n_out, np.float32))], heads)

    return ModelCascade(zero(TYPE_IN, TYPE_HEADS), zero(ACC_IN, ACC_HEADS), zero(DATA_IN, DATA_HEADS),
                        vocabulary or default_vocabulary(), time_bin_seconds)


# -- container --------------------------------------------------------------


def dumps_cascade(c: ModelCascade) -> bytes:
    """b"LEMK", u32 version, u32 JSON length, JSON, three u64-length-prefixed
    network checkpoints (type, accuracy, data), u32 CRC32 of everything after
    the magic."""
    header = {
        "vocabulary": c.vocabulary.to_dict(),
        "time_bin_seconds": c.time_bin_seconds,
        "data_split": list(DATA_SPLIT),
        "metadata": c.metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<II", CASCADE_VERSION, len(blob)), blob]
    for net in c.nets():
        raw = dumps_network(net)
        parts += [struct.pack("<Q", len(raw)), raw]
    payload = b"".join(parts)
    return CASCADE_MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def loads_cascade(data: bytes) -> ModelCascade:
    if data[:4] != CASCADE_MAGIC:
        raise CheckpointError("bad magic; not a cascade checkpoint")
    if len(data) < 16:
        raise CheckpointError("truncated cascade checkpoint")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[4:-4]) != crc:
        raise CheckpointError("cascade checksum mismatch (truncated or corrupt)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != CASCADE_VERSION:
        raise CheckpointError(f"unsupported cascade version {version}")
    pos = 12 + hlen
    header = json.loads(data[12:pos].decode("utf-8"))
    if tuple(header.get("data_split", DATA_SPLIT)) != DATA_SPLIT:
        raise CheckpointError(f"unsupported data head split {header['data_split']}")
    nets = []
    for _ in range(3):
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        nets.append(loads_network(data[pos : pos + n]))
        pos += n
    if pos != len(data) - 4:
        raise CheckpointError("cascade payload length mismatch")
    vocab = EventVocabulary.from_dict(header["vocabulary"])
    try:
        return ModelCascade(*nets, vocabulary=vocab, time_bin_seconds=float(header["time_bin_seconds"]),
                            metadata=header.get("metadata", {}))
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc


def save_cascade(c: ModelCascade, path: str | Path) -> None:
    Path(path).write_bytes(dumps_cascade(c))


def load_cascade(path: str | Path) -> ModelCascade:
    return loads_cascade(Path(path).read_bytes())
