"""Event data model, game-state encoding and the state interpretation step.

A game state is a flat 42-vector::

    [0:33]  one-hot event type
    33      period (0 first half, 1 second half)
    34      minute within the period / 60
    35, 36  x, y in the acting team's attacking frame, [0, 1]
    37      is_home
    38      is_accurate
    39      is_goal
    40, 41  home score / 10, away score / 10 (scores clamped at 10)
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Hashable, Mapping

import numpy as np

N_TYPES = 33
STATE_DIM = N_TYPES + 9

PERIOD = 33
MINUTE = 34
X = 35
Y = 36
IS_HOME = 37
IS_ACCURATE = 38
IS_GOAL = 39
HOME_SCORE = 40
AWAY_SCORE = 41

MINUTE_SCALE = 60.0
SCORE_SCALE = 10
COORD_BINS = 101


@dataclass(frozen=True)
class EventVocabulary:
    """The fixed 33-type vocabulary plus the raw-feed mapping table."""

    version: str
    names: tuple[str, ...]
    goal_capable: frozenset[int]
    kickoff: int
    mapping: Mapping[tuple[int, int | None], int] = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.names) != N_TYPES or len(set(self.names)) != N_TYPES:
            raise ValueError(f"vocabulary needs {N_TYPES} distinct names, got {len(self.names)}")

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown event type {name!r}") from None

    def name_of(self, type_id: int) -> str:
        return self.names[type_id]

    @functools.cached_property
    def goal_mask(self) -> np.ndarray:
        mask = np.zeros(N_TYPES, dtype=bool)
        mask[list(self.goal_capable)] = True
        mask.flags.writeable = False
        return mask

    def lookup(self, event_id: int, sub_event_id: int | None) -> int | None:
        """Map a raw (event id, sub-event id) pair to a type id, or None."""
        hit = self.mapping.get((event_id, sub_event_id))
        if hit is None:
            hit = self.mapping.get((event_id, None))
        return hit

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "types": list(self.names),
            "goal_capable": [self.names[i] for i in sorted(self.goal_capable)],
            "kickoff": self.names[self.kickoff],
            "mapping": [
                {"event_id": e, "sub_event_id": s, "type": self.names[t]}
                for (e, s), t in self.mapping.items()
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "EventVocabulary":
        names = tuple(doc["types"])
        index = {n: i for i, n in enumerate(names)}
        mapping = {}
        for row in doc.get("mapping", []):
            mapping[(int(row["event_id"]), _opt_int(row.get("sub_event_id")))] = index[row["type"]]
        return cls(
            version=str(doc["version"]),
            names=names,
            goal_capable=frozenset(index[n] for n in doc["goal_capable"]),
            kickoff=index[doc["kickoff"]],
            mapping=mapping,
        )


def _opt_int(v: Any) -> int | None:
    if v is None or v == "":
        return None
    return int(v)


def load_vocabulary(path: str | Path | None = None) -> EventVocabulary:
    if path is None:
        text = resources.files("lemsim").joinpath("data/event_types.json").read_text()
    else:
        text = Path(path).read_text()
    return EventVocabulary.from_dict(json.loads(text))


@functools.lru_cache(maxsize=1)
def default_vocabulary() -> EventVocabulary:
    return load_vocabulary()


@dataclass(frozen=True, slots=True)
class Event:
    type_id: int
    period: int
    minute: float
    x: float
    y: float
    is_home: int
    is_accurate: int
    is_goal: int
    home_score: int
    away_score: int
    team_id: Hashable = None
    player_id: Hashable = None
    match_id: Hashable = None


@dataclass(frozen=True, slots=True)
class PredictedEvent:
    type_id: int
    is_accurate: int
    is_goal: int
    x_bin: int
    y_bin: int
    time_bin: int
    is_home: int


def encode_states(
    type_id: np.ndarray,
    period: np.ndarray,
    minute: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    is_home: np.ndarray,
    is_accurate: np.ndarray,
    is_goal: np.ndarray,
    home_score: np.ndarray,
    away_score: np.ndarray,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Vectorised :func:`encode_state` over column arrays."""
    type_id = np.asarray(type_id)
    n = type_id.shape[0]
    if n and (type_id.min() < 0 or type_id.max() >= N_TYPES):
        raise ValueError("event type id out of range")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if n and (x.min() < 0 or y.min() < 0 or x.max() > 1 or y.max() > 1):
        raise ValueError("coordinates must lie in [0, 1]")
    if out is None:
        out = np.zeros((n, STATE_DIM))
    else:
        out[:, :N_TYPES] = 0.0
    out[np.arange(n), type_id] = 1.0
    out[:, PERIOD] = period
    out[:, MINUTE] = np.asarray(minute, dtype=np.float64) / MINUTE_SCALE
    out[:, X] = x
    out[:, Y] = y
    out[:, IS_HOME] = is_home
    out[:, IS_ACCURATE] = is_accurate
    out[:, IS_GOAL] = is_goal
    out[:, HOME_SCORE] = np.minimum(home_score, SCORE_SCALE) / SCORE_SCALE
    out[:, AWAY_SCORE] = np.minimum(away_score, SCORE_SCALE) / SCORE_SCALE
    return out


def encode_state(event: Event) -> np.ndarray:
    if not 0 <= event.type_id < N_TYPES:
        raise ValueError(f"event type id {event.type_id} out of range")
    if not (0.0 <= event.x <= 1.0 and 0.0 <= event.y <= 1.0):
        raise ValueError(f"coordinates ({event.x}, {event.y}) outside [0, 1]")
    if event.minute < 0 or event.home_score < 0 or event.away_score < 0:
        raise ValueError("minute and scores must be non-negative")
    state = np.zeros(STATE_DIM)
    state[event.type_id] = 1.0
    state[PERIOD] = event.period
    state[MINUTE] = event.minute / MINUTE_SCALE
    state[X] = event.x
    state[Y] = event.y
    state[IS_HOME] = event.is_home
    state[IS_ACCURATE] = event.is_accurate
    state[IS_GOAL] = event.is_goal
    state[HOME_SCORE] = min(event.home_score, SCORE_SCALE) / SCORE_SCALE
    state[AWAY_SCORE] = min(event.away_score, SCORE_SCALE) / SCORE_SCALE
    state.flags.writeable = False
    return state


def decode_state(state: np.ndarray) -> dict[str, Any]:
    """Recover the modelled event fields from a state vector."""
    state = np.asarray(state)
    if state.shape != (STATE_DIM,):
        raise ValueError(f"expected a {STATE_DIM}-vector, got shape {state.shape}")
    hot = np.flatnonzero(state[:N_TYPES] == 1.0)
    if hot.size != 1 or np.count_nonzero(state[:N_TYPES]) != 1:
        raise ValueError("type block is not one-hot")
    return {
        "type_id": int(hot[0]),
        "period": int(state[PERIOD]),
        "minute": float(state[MINUTE] * MINUTE_SCALE),
        "x": float(state[X]),
        "y": float(state[Y]),
        "is_home": int(state[IS_HOME]),
        "is_accurate": int(state[IS_ACCURATE]),
        "is_goal": int(state[IS_GOAL]),
        "home_score": int(round(state[HOME_SCORE] * SCORE_SCALE)),
        "away_score": int(round(state[AWAY_SCORE] * SCORE_SCALE)),
    }


def apply_prediction(
    state: np.ndarray, pred: PredictedEvent, time_bin_seconds: float = 60.0
) -> np.ndarray:
    """Return the state that follows ``state`` once ``pred`` has happened.

    Period changes and the half-time clock reset are the simulator's job.
    """
    if not 0 <= pred.type_id < N_TYPES:
        raise ValueError(f"event type id {pred.type_id} out of range")
    new = np.array(state, dtype=np.float64)
    new[:N_TYPES] = 0.0
    new[pred.type_id] = 1.0
    new[MINUTE] = (state[MINUTE] * MINUTE_SCALE + pred.time_bin * time_bin_seconds / 60.0) / MINUTE_SCALE
    new[X] = pred.x_bin / (COORD_BINS - 1)
    new[Y] = pred.y_bin / (COORD_BINS - 1)
    new[IS_HOME] = pred.is_home
    new[IS_ACCURATE] = pred.is_accurate
    new[IS_GOAL] = pred.is_goal
    if pred.is_goal:
        col = HOME_SCORE if pred.is_home else AWAY_SCORE
        goals = int(round(state[col] * SCORE_SCALE))
        new[col] = min(goals + 1, SCORE_SCALE) / SCORE_SCALE
    new.flags.writeable = False
    return new


def coord_bin(v: np.ndarray | float) -> np.ndarray:
    """Quantise a [0, 1] coordinate to its percent bin."""
    return np.clip(np.rint(np.asarray(v, dtype=np.float64) * (COORD_BINS - 1)), 0, COORD_BINS - 1).astype(np.int64)


def time_bin(delta_minutes: np.ndarray | float, time_bin_seconds: float = 60.0, n_bins: int = 60) -> np.ndarray:
    """Discretise elapsed time into ``n_bins`` bins of ``time_bin_seconds``."""
    raw = np.floor(np.asarray(delta_minutes, dtype=np.float64) * 60.0 / time_bin_seconds + 1e-9)
    return np.clip(raw, 0, n_bins - 1).astype(np.int64)

