"""Training pairs, fine-tuning subsets and the training loops for the cascade."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Iterator

import numpy as np

from .cascade import (
    ACC_HEADS,
    ACC_IN,
    DATA_HEADS,
    DATA_IN,
    N_TIME_BINS,
    TYPE_HEADS,
    TYPE_IN,
    ModelCascade,
)
from .events import N_TYPES, STATE_DIM, coord_bin, encode_states, time_bin
from .ingest import Corpus
from .nnet import Adam, Network, init_network, train_step

logger = logging.getLogger(__name__)


class FineTuneError(ValueError):
    pass


# -- pairs ------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingPair:
    context: np.ndarray
    type_id: int
    is_accurate: int
    is_goal: int
    x_bin: int
    y_bin: int
    time_bin: int
    is_home: int
    match_id: Hashable
    target_index: int
    team_id: Hashable
    player_id: Hashable

    @property
    def key(self) -> tuple[Hashable, int]:
        return self.match_id, self.target_index


_ARRAYS = ("states", "type_id", "is_accurate", "is_goal", "x_bin", "y_bin", "time_bin", "is_home",
           "match_id", "target_index", "team_id", "player_id", "home_team_id", "away_team_id")


@dataclass
class PairSet:
    """Column store of (context state, next-event target) pairs."""

    states: np.ndarray
    type_id: np.ndarray
    is_accurate: np.ndarray
    is_goal: np.ndarray
    x_bin: np.ndarray
    y_bin: np.ndarray
    time_bin: np.ndarray
    is_home: np.ndarray
    match_id: np.ndarray
    target_index: np.ndarray
    team_id: np.ndarray
    player_id: np.ndarray
    home_team_id: np.ndarray
    away_team_id: np.ndarray
    time_bin_seconds: float = 60.0

    def __len__(self) -> int:
        return len(self.type_id)

    def subset(self, index: np.ndarray) -> "PairSet":
        return PairSet(*(getattr(self, a)[index] for a in _ARRAYS), time_bin_seconds=self.time_bin_seconds)

    def __iter__(self) -> Iterator[TrainingPair]:
        for i in range(len(self)):
            yield TrainingPair(
                self.states[i], int(self.type_id[i]), int(self.is_accurate[i]), int(self.is_goal[i]),
                int(self.x_bin[i]), int(self.y_bin[i]), int(self.time_bin[i]), int(self.is_home[i]),
                self.match_id[i], int(self.target_index[i]), self.team_id[i], self.player_id[i],
            )

    def keys(self) -> list[tuple[Hashable, int]]:
        return list(zip(self.match_id.tolist(), self.target_index.tolist()))


def build_pairs(corpus: Corpus, time_bin_seconds: float = 60.0) -> PairSet:
    """One pair per consecutive event adjacency inside each match."""
    ctx_cols = {k: [] for k in ("type_id", "period", "minute", "x", "y", "is_home", "is_accurate", "is_goal",
                                "home_score", "away_score")}
    tgt = {k: [] for k in ("type_id", "is_accurate", "is_goal", "x", "y", "dt", "is_home", "match_id",
                           "target_index", "team_id", "player_id", "home_team_id", "away_team_id")}
    for m in corpus.matches:
        ev = m.events
        for k in range(len(ev) - 1):
            a, b = ev[k], ev[k + 1]
            for name in ctx_cols:
                ctx_cols[name].append(getattr(a, name))
            tgt["type_id"].append(b.type_id)
            tgt["is_accurate"].append(b.is_accurate)
            tgt["is_goal"].append(b.is_goal)
            tgt["x"].append(b.x)
            tgt["y"].append(b.y)
            tgt["dt"].append(b.minute - a.minute)
            tgt["is_home"].append(b.is_home)
            tgt["match_id"].append(m.match_id)
            tgt["target_index"].append(k + 1)
            tgt["team_id"].append(b.team_id)
            tgt["player_id"].append(b.player_id)
            tgt["home_team_id"].append(m.home_team_id)
            tgt["away_team_id"].append(m.away_team_id)
    n = len(tgt["type_id"])
    states = encode_states(*(np.asarray(ctx_cols[k]) if n else np.zeros(0, dtype=np.int64) for k in ctx_cols))
    ints = np.int64
    objs = _object_array
    return PairSet(
        states=states.astype(np.float32),
        type_id=np.asarray(tgt["type_id"], dtype=ints),
        is_accurate=np.asarray(tgt["is_accurate"], dtype=ints),
        is_goal=np.asarray(tgt["is_goal"], dtype=ints),
        x_bin=coord_bin(np.asarray(tgt["x"], dtype=np.float64)),
        y_bin=coord_bin(np.asarray(tgt["y"], dtype=np.float64)),
        time_bin=time_bin(np.asarray(tgt["dt"], dtype=np.float64), time_bin_seconds, N_TIME_BINS),
        is_home=np.asarray(tgt["is_home"], dtype=ints),
        match_id=objs(tgt["match_id"]),
        target_index=np.asarray(tgt["target_index"], dtype=ints),
        team_id=objs(tgt["team_id"]),
        player_id=objs(tgt["player_id"]),
        home_team_id=objs(tgt["home_team_id"]),
        away_team_id=objs(tgt["away_team_id"]),
        time_bin_seconds=time_bin_seconds,
    )


def _object_array(values: list) -> np.ndarray:
    out = np.empty(len(values), dtype=object)
    out[:] = values
    return out


# -- fine-tuning subsets ----------------------------------------------------


class FineTuneKind(str, enum.Enum):
    TEAM = "team"
    PLAYER = "player"
    PLAYER_ADDITION = "player_addition"
    PLAYER_REPLACEMENT = "player_replacement"

    @classmethod
    def parse(cls, value: "str | FineTuneKind") -> "FineTuneKind":
        if isinstance(value, cls):
            return value
        norm = str(value).replace("-", "_").replace(" ", "_")
        # accept CamelCase spellings such as "PlayerAddition"
        norm = "".join("_" + ch.lower() if ch.isupper() else ch for ch in norm).lstrip("_").replace("__", "_")
        return cls(norm)


@dataclass(frozen=True)
class FineTuneSpec:
    """Which pairs enter a fine-tune.

    ``team_scope`` controls the team side: ``"events"`` keeps pairs whose
    target event the team performed, ``"matches"`` every pair from the team's
    matches (both sides act). ``home_only`` restricts the team side to the
    team's home matches.
    """

    kind: FineTuneKind
    team_id: Hashable = None
    player_id: Hashable = None
    replaced_player_id: Hashable = None
    home_only: bool = True
    team_scope: str = "events"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FineTuneKind.parse(self.kind))
        need = {
            FineTuneKind.TEAM: ("team_id",),
            FineTuneKind.PLAYER: ("player_id",),
            FineTuneKind.PLAYER_ADDITION: ("team_id", "player_id"),
            FineTuneKind.PLAYER_REPLACEMENT: ("team_id", "player_id", "replaced_player_id"),
        }[self.kind]
        missing = [f for f in need if getattr(self, f) is None]
        if missing:
            raise FineTuneError(f"{self.kind.value} fine-tune requires {', '.join(missing)}")
        if self.team_scope not in ("matches", "events"):
            raise FineTuneError("team_scope must be 'matches' or 'events'")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _team_mask(pairs: PairSet, spec: FineTuneSpec) -> np.ndarray:
    home = pairs.home_team_id == spec.team_id
    if spec.team_scope == "events":
        mask = pairs.team_id == spec.team_id
        if spec.home_only:
            mask &= home
        return mask
    if spec.home_only:
        return home
    return home | (pairs.away_team_id == spec.team_id)


def select_finetune_pairs(pairs: PairSet, spec: FineTuneSpec) -> PairSet:
    """Membership is decided per pair by its target event and match."""
    kind = spec.kind
    if kind is FineTuneKind.TEAM:
        mask = _team_mask(pairs, spec)
    elif kind is FineTuneKind.PLAYER:
        mask = pairs.player_id == spec.player_id
    else:
        mask = _team_mask(pairs, spec) | (pairs.player_id == spec.player_id)
        if kind is FineTuneKind.PLAYER_REPLACEMENT:
            mask &= pairs.player_id != spec.replaced_player_id
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise FineTuneError(f"{kind.value} selection is empty; nothing to fine-tune on")
    return pairs.subset(np.flatnonzero(mask))


def finetune_batch_size(n: int) -> int:
    """``2 * log2(n)`` rounded, clamped to [32, 256]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return int(min(max(math.floor(2.0 * math.log2(n) + 0.5), 32), 256))


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class NetSpec:
    n_in: int
    n_out: int
    hidden: tuple[int, ...]
    learning_rate: float
    batch_size: int
    activation: str


STAGE_SPECS = {
    "type": NetSpec(TYPE_IN, N_TYPES, (256,), 0.0010, 32, "sigmoid"),
    "accuracy": NetSpec(ACC_IN, 2, (128,), 0.0410, 1024, "sigmoid"),
    "data": NetSpec(DATA_IN, 264, (64, 256, 256), 0.0063, 1024, "relu"),
}
_HEADS = {"type": TYPE_HEADS, "accuracy": ACC_HEADS, "data": DATA_HEADS}
STAGES = ("type", "accuracy", "data")


def init_cascade(seed: int = 0, specs: dict[str, NetSpec] = STAGE_SPECS, time_bin_seconds: float = 60.0) -> ModelCascade:
    nets = [
        init_network((s.n_in, *s.hidden, s.n_out), s.activation, _HEADS[name], seed=seed + k)
        for k, (name, s) in enumerate((n, specs[n]) for n in STAGES)
    ]
    return ModelCascade(*nets, time_bin_seconds=time_bin_seconds)


def stage_batch(pairs: PairSet, idx: np.ndarray, stage: str) -> tuple[np.ndarray, list[np.ndarray]]:
    """Inputs and per-head targets of one stage for the pairs at ``idx``.

    Later stages are fed the true values of earlier stages (teacher forcing).
    """
    n = len(idx)
    if stage == "type":
        return pairs.states[idx], [pairs.type_id[idx]]
    width = ACC_IN if stage == "accuracy" else DATA_IN
    x = np.zeros((n, width), dtype=np.float32)
    x[:, :STATE_DIM] = pairs.states[idx]
    x[np.arange(n), STATE_DIM + pairs.type_id[idx]] = 1.0
    acc = pairs.is_accurate[idx]
    goal = pairs.is_goal[idx]
    if stage == "accuracy":
        return x, [np.stack([acc, goal], axis=1)]
    x[:, ACC_IN] = acc
    x[:, ACC_IN + 1] = goal
    return x, [pairs.x_bin[idx], pairs.y_bin[idx], pairs.time_bin[idx], pairs.is_home[idx]]


def evaluate(net: Network, pairs: PairSet, stage: str, chunk: int = 8192) -> float:
    total = 0.0
    for start in range(0, len(pairs), chunk):
        idx = np.arange(start, min(start + chunk, len(pairs)))
        x, t = stage_batch(pairs, idx, stage)
        total += net.loss(x, t) * len(idx)
    return total / max(len(pairs), 1)


def fit(
    net: Network,
    pairs: PairSet,
    stage: str,
    learning_rate: float,
    batch_size: int,
    epochs: int,
    seed: int,
    val: PairSet | None = None,
    keep_best: bool = False,
    schedule: str = "constant",
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[Network, list[dict]]:
    """Minibatch Adam on one stage. Mutates ``net``; returns the kept weights.

    ``schedule="cosine"`` anneals the step size from ``learning_rate`` down to
    1% of it over the whole run. With ``keep_best`` and a validation set the
    epoch with the lowest validation loss is returned, otherwise the final
    weights.
    """
    if schedule not in ("constant", "cosine"):
        raise ValueError(f"unknown schedule {schedule!r}")
    rng = np.random.default_rng(seed)
    opt = Adam(net, learning_rate)
    history: list[dict] = []
    best, best_loss = net, math.inf
    n = len(pairs)
    total_steps = epochs * math.ceil(n / batch_size)
    step = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        running = 0.0
        for start in range(0, n, batch_size):
            if schedule == "cosine":
                frac = step / max(total_steps - 1, 1)
                opt.learning_rate = learning_rate * (0.01 + 0.99 * 0.5 * (1.0 + math.cos(math.pi * frac)))
            idx = order[start : start + batch_size]
            x, t = stage_batch(pairs, idx, stage)
            running += train_step(net, x, t, opt, batch_index=step) * len(idx)
            step += 1
        row = {"stage": stage, "epoch": epoch, "train_loss": running / n}
        if val is not None and len(val):
            row["val_loss"] = evaluate(net, val, stage)
            if keep_best and row["val_loss"] < best_loss:
                best, best_loss = net.copy(), row["val_loss"]
        history.append(row)
        logger.info("%s epoch %d: %s", stage, epoch, row)
        if on_epoch:
            on_epoch(row)
    if keep_best and best is not net:
        return best, history
    return net, history


def _spec_dict(spec: NetSpec) -> dict[str, Any]:
    # JSON-native so metadata compares equal before and after a checkpoint round trip
    d = asdict(spec)
    d["hidden"] = list(spec.hidden)
    return d


def _as_pairs(data: Corpus | PairSet, time_bin_seconds: float) -> PairSet:
    return build_pairs(data, time_bin_seconds) if isinstance(data, Corpus) else data


def train_base(
    train: Corpus | PairSet,
    val: Corpus | PairSet | None = None,
    *,
    epochs: int = 10,
    seed: int = 0,
    specs: dict[str, NetSpec] = STAGE_SPECS,
    time_bin_seconds: float = 60.0,
    stages: tuple[str, ...] = STAGES,
    schedule: str = "cosine",
) -> tuple[ModelCascade, list[dict]]:
    """Train the three stages with their own hyperparameters.

    The listed learning rates are peak rates, annealed by ``schedule``. Each
    stage keeps the epoch with the best validation loss when a validation set
    is given. ``stages`` limits which stages are trained; the rest keep their
    initial weights.
    """
    train_pairs = _as_pairs(train, time_bin_seconds)
    val_pairs = _as_pairs(val, time_bin_seconds) if val is not None else None
    if not len(train_pairs):
        raise ValueError("training corpus has no event pairs")
    cascade = init_cascade(seed, specs, time_bin_seconds)
    nets = dict(zip(STAGES, cascade.nets()))
    history: list[dict] = []
    for k, stage in enumerate(STAGES):
        if stage not in stages:
            continue
        s = specs[stage]
        nets[stage], h = fit(nets[stage], train_pairs, stage, s.learning_rate, s.batch_size, epochs,
                             seed=seed * 1000 + k, val=val_pairs, keep_best=True, schedule=schedule)
        history += h
    meta = {
        "kind": "base",
        "seed": seed,
        "epochs": epochs,
        "schedule": schedule,
        "n_train_pairs": len(train_pairs),
        "n_val_pairs": len(val_pairs) if val_pairs is not None else 0,
        "hyperparameters": {name: _spec_dict(specs[name]) for name in STAGES},
        "history": history,
    }
    for stage in STAGES:
        nets[stage].metadata = {"stage": stage, **_spec_dict(specs[stage])}
    return ModelCascade(nets["type"], nets["accuracy"], nets["data"], cascade.vocabulary,
                        time_bin_seconds, meta), history


def finetune(
    base: ModelCascade,
    pairs: PairSet,
    spec: FineTuneSpec | None = None,
    *,
    epochs: int = 25,
    seed: int = 0,
    lr_scale: float = 0.1,
    specs: dict[str, NetSpec] = STAGE_SPECS,
) -> ModelCascade:
    """Continue training a copy of ``base`` on ``pairs``.

    Learning rates are the base ones times ``lr_scale``; the batch size comes
    from :func:`finetune_batch_size`. All epochs run and the final weights are
    kept. ``base`` is never modified.
    """
    if not len(pairs):
        raise FineTuneError("no pairs to fine-tune on")
    if pairs.time_bin_seconds != base.time_bin_seconds:
        raise FineTuneError("pairs and base cascade use different time bins")
    batch = finetune_batch_size(len(pairs))
    nets = {}
    history: list[dict] = []
    lrs = {}
    for k, (stage, net) in enumerate(zip(STAGES, base.nets())):
        lrs[stage] = specs[stage].learning_rate * lr_scale
        nets[stage], h = fit(net.copy(), pairs, stage, lrs[stage], batch, epochs, seed=seed * 1000 + k)
        history += h
    meta = dict(base.metadata)
    meta["finetune"] = {
        "spec": spec.to_dict() if spec else None,
        "seed": seed,
        "epochs": epochs,
        "batch_size": batch,
        "learning_rates": lrs,
        "n_pairs": len(pairs),
        "history": history,
    }
    return ModelCascade(nets["type"], nets["accuracy"], nets["data"], base.vocabulary,
                        base.time_bin_seconds, meta)


# -- job descriptors --------------------------------------------------------


@dataclass
class FineTuneJob:
    spec: FineTuneSpec
    base: str
    corpus: str
    output: str
    seed: int = 0
    epochs: int = 25
    repeats: int = 1
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        d = {"spec": self.spec.to_dict(), "base": self.base, "corpus": self.corpus, "output": self.output,
             "seed": self.seed, "epochs": self.epochs, "repeats": self.repeats, **self.extra}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FineTuneJob":
        d = json.loads(text)
        spec = FineTuneSpec(**d.pop("spec"))
        known = {k: d.pop(k) for k in ("base", "corpus", "output", "seed", "epochs", "repeats") if k in d}
        return cls(spec=spec, extra=d, **known)

    @classmethod
    def load(cls, path: str | Path) -> "FineTuneJob":
        return cls.from_json(Path(path).read_text())
