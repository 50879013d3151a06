"""Monte Carlo match simulation driven by a model cascade.

Matches in a batch advance in lockstep so every cascade stage runs as one
matrix product per step. Each simulation owns a counter-based random stream
keyed by its seed: the k-th uniform of simulation ``s`` is a fixed function
of ``(s, k)``, so results do not depend on how simulations are grouped into
chunks or worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from .cascade import DRAWS_PER_EVENT, ModelCascade, sample_events
from .events import COORD_BINS, N_TYPES, PredictedEvent, encode_states

logger = logging.getLogger(__name__)

EVENT_DTYPE = np.dtype(
    [
        ("type_id", "i1"),
        ("is_accurate", "i1"),
        ("is_goal", "i1"),
        ("x_bin", "i1"),
        ("y_bin", "i1"),
        ("time_bin", "i1"),
        ("is_home", "i1"),
        ("period", "i1"),
        ("minute", "<f8"),
    ]
)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seeds: Sequence[int] | np.ndarray) -> np.ndarray:
    seeds = np.asarray(seeds, dtype=np.int64).astype(np.uint64)
    return _mix64(seeds * _GOLDEN + _GOLDEN)


def stream_uniforms(keys: np.ndarray, start: np.ndarray, width: int) -> np.ndarray:
    """Uniforms ``start .. start + width - 1`` of each keyed stream, shape (n, width)."""
    counters = np.asarray(start, dtype=np.uint64)[:, None] + np.arange(1, width + 1, dtype=np.uint64)
    z = _mix64(keys[:, None] + counters * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass
class BatchConfig:
    n_simulations: int = 2500
    base_seed: int = 0
    max_events_per_match: int = 4000
    half_length_minutes: float = 47.0
    temperature: float = 1.0
    chunk_size: int = 2500
    workers: int = 1
    keep_events: bool = True

    def __post_init__(self) -> None:
        if self.n_simulations < 1 or self.max_events_per_match < 1 or self.chunk_size < 1 or self.workers < 1:
            raise ValueError("simulation counts, guards and chunk sizes must be positive")
        if not self.half_length_minutes > 0 or not self.temperature > 0:
            raise ValueError("half length and temperature must be positive")


@dataclass(eq=False)
class SimulationResult:
    seed: int
    final_home_goals: int
    final_away_goals: int
    home_counts: np.ndarray  # per-type event counts, home side
    away_counts: np.ndarray
    n_events: int
    truncated: bool = False
    events: np.ndarray | None = field(default=None, repr=False)

    @property
    def points_home(self) -> int:
        if self.final_home_goals > self.final_away_goals:
            return 3
        if self.final_home_goals == self.final_away_goals:
            return 1
        return 0

    def iter_events(self) -> Iterator[tuple[PredictedEvent, int, float]]:
        """Yield ``(event, period, minute within period)``."""
        if self.events is None:
            return
        for row in self.events:
            pred = PredictedEvent(*(int(row[k]) for k in ("type_id", "is_accurate", "is_goal", "x_bin",
                                                          "y_bin", "time_bin", "is_home")))
            yield pred, int(row["period"]), float(row["minute"])

    def fingerprint(self) -> bytes:
        head = np.array([self.seed, self.final_home_goals, self.final_away_goals, self.n_events,
                         int(self.truncated)], dtype="<i8").tobytes()
        body = self.home_counts.astype("<i8").tobytes() + self.away_counts.astype("<i8").tobytes()
        ev = b"" if self.events is None else self.events.tobytes()
        return head + body + ev

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SimulationResult):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()


def _kickoff(arrs: dict[str, np.ndarray], rows: np.ndarray, kickoff_type: int, is_home: int) -> None:
    arrs["type_id"][rows] = kickoff_type
    arrs["minute"][rows] = 0.0
    arrs["x"][rows] = 0.5
    arrs["y"][rows] = 0.5
    arrs["is_home"][rows] = is_home
    arrs["is_accurate"][rows] = 1
    arrs["is_goal"][rows] = 0


def simulate_seeds(c: ModelCascade, seeds: Sequence[int], cfg: BatchConfig) -> list[SimulationResult]:
    """Simulate one match per seed, all advancing in lockstep."""
    seeds = np.asarray(seeds, dtype=np.int64)
    n = len(seeds)
    keys = stream_keys(seeds)
    bin_minutes = c.time_bin_seconds / 60.0
    half = cfg.half_length_minutes
    arrs = {
        "type_id": np.zeros(n, np.int64),
        "period": np.zeros(n, np.int64),
        "minute": np.zeros(n),
        "x": np.zeros(n),
        "y": np.zeros(n),
        "is_home": np.zeros(n, np.int64),
        "is_accurate": np.zeros(n, np.int64),
        "is_goal": np.zeros(n, np.int64),
        "home_score": np.zeros(n, np.int64),
        "away_score": np.zeros(n, np.int64),
    }
    _kickoff(arrs, np.arange(n), c.vocabulary.kickoff, 1)
    n_events = np.zeros(n, np.int64)
    truncated = np.zeros(n, bool)
    active = np.ones(n, bool)
    log: list[tuple[np.ndarray, dict[str, np.ndarray], np.ndarray, np.ndarray]] = []

    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        states = encode_states(*(arrs[k][idx] for k in ("type_id", "period", "minute", "x", "y", "is_home",
                                                        "is_accurate", "is_goal", "home_score", "away_score")))
        u = stream_uniforms(keys[idx], n_events[idx] * DRAWS_PER_EVENT, DRAWS_PER_EVENT)
        ev = sample_events(c, states, u, cfg.temperature)

        arrs["minute"][idx] += ev["time_bin"] * bin_minutes
        arrs["type_id"][idx] = ev["type_id"]
        arrs["x"][idx] = ev["x_bin"] / (COORD_BINS - 1)
        arrs["y"][idx] = ev["y_bin"] / (COORD_BINS - 1)
        arrs["is_home"][idx] = ev["is_home"]
        arrs["is_accurate"][idx] = ev["is_accurate"]
        arrs["is_goal"][idx] = ev["is_goal"]
        arrs["home_score"][idx] += ev["is_goal"] & ev["is_home"]
        arrs["away_score"][idx] += ev["is_goal"] & (1 - ev["is_home"])
        n_events[idx] += 1
        log.append((idx, ev, arrs["period"][idx].copy(), arrs["minute"][idx].copy()))

        over = arrs["minute"][idx] >= half
        halftime = idx[over & (arrs["period"][idx] == 0)]
        fulltime = idx[over & (arrs["period"][idx] == 1)]
        arrs["period"][halftime] = 1
        _kickoff(arrs, halftime, c.vocabulary.kickoff, 0)
        active[fulltime] = False
        guard = idx[active[idx] & (n_events[idx] >= cfg.max_events_per_match)]
        truncated[guard] = True
        active[guard] = False

    sim_idx = np.concatenate([entry[0] for entry in log]) if log else np.zeros(0, np.int64)
    table = np.empty(sim_idx.size, dtype=EVENT_DTYPE)
    for name in ("type_id", "is_accurate", "is_goal", "x_bin", "y_bin", "time_bin", "is_home"):
        table[name] = np.concatenate([entry[1][name] for entry in log])
    table["period"] = np.concatenate([entry[2] for entry in log])
    table["minute"] = np.concatenate([entry[3] for entry in log])
    order = np.argsort(sim_idx, kind="stable")
    table = table[order]
    bounds = np.cumsum(n_events)[:-1]
    per_sim = np.split(table, bounds)

    results = []
    for i in range(n):
        evs = per_sim[i]
        home = evs["is_home"] == 1
        results.append(
            SimulationResult(
                seed=int(seeds[i]),
                final_home_goals=int(arrs["home_score"][i]),
                final_away_goals=int(arrs["away_score"][i]),
                home_counts=np.bincount(evs["type_id"][home], minlength=N_TYPES),
                away_counts=np.bincount(evs["type_id"][~home], minlength=N_TYPES),
                n_events=int(n_events[i]),
                truncated=bool(truncated[i]),
                events=evs.copy() if cfg.keep_events else None,
            )
        )
    return results


def simulate_match(c: ModelCascade, cfg: BatchConfig | None = None, seed: int = 0) -> SimulationResult:
    return simulate_seeds(c, [seed], cfg or BatchConfig(n_simulations=1))[0]


def points_summary(points: np.ndarray) -> dict[str, float]:
    """Expected points and its standard error from per-match points."""
    points = np.asarray(points, dtype=np.int64)
    n = points.size
    mean = float(points.sum()) / n
    se = float(np.std(points, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {"expected_points": mean, "std_error": se}


@dataclass(eq=False)
class BatchResult:
    results: list[SimulationResult]
    config: BatchConfig

    @property
    def points(self) -> np.ndarray:
        return np.array([r.points_home for r in self.results], dtype=np.int64)

    def summary(self) -> dict[str, Any]:
        pts = self.points
        out: dict[str, Any] = {"n_simulations": len(self.results), "base_seed": self.config.base_seed}
        out.update(points_summary(pts))
        out["wins"] = int((pts == 3).sum())
        out["draws"] = int((pts == 1).sum())
        out["losses"] = int((pts == 0).sum())
        out["mean_home_goals"] = float(np.mean([r.final_home_goals for r in self.results]))
        out["mean_away_goals"] = float(np.mean([r.final_away_goals for r in self.results]))
        out["mean_events"] = float(np.mean([r.n_events for r in self.results]))
        out["truncated_rate"] = float(np.mean([r.truncated for r in self.results]))
        return out


def _run_chunk(args: tuple[ModelCascade, np.ndarray, BatchConfig]) -> list[SimulationResult]:
    c, seeds, cfg = args
    return simulate_seeds(c, seeds, cfg)


def simulate_batch(c: ModelCascade, cfg: BatchConfig) -> BatchResult:
    """Run ``cfg.n_simulations`` matches seeded ``base_seed + i``.

    Chunks may run in worker processes; results come back in index order.
    """
    seeds = cfg.base_seed + np.arange(cfg.n_simulations, dtype=np.int64)
    chunks = [seeds[i : i + cfg.chunk_size] for i in range(0, len(seeds), cfg.chunk_size)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, [(c, ch, cfg) for ch in chunks]))
    else:
        parts = [simulate_seeds(c, ch, cfg) for ch in chunks]
    results = [r for part in parts for r in part]
    truncated = sum(r.truncated for r in results)
    if truncated:
        logger.warning("%d of %d simulations hit the event guard", truncated, len(results))
    return BatchResult(results, cfg)


def write_results_csv(batch: BatchResult, path: str | Path, type_names: Sequence[str]) -> None:
    """One row per simulation: seed, goals, points, guard flag and per-type counts."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["simulation_index", "seed", "home_goals", "away_goals", "points_home", "truncated", "n_events"]
                   + [f"home:{n}" for n in type_names] + [f"away:{n}" for n in type_names])
        for i, r in enumerate(batch.results):
            w.writerow([i, r.seed, r.final_home_goals, r.final_away_goals, r.points_home, int(r.truncated),
                        r.n_events, *r.home_counts.tolist(), *r.away_counts.tolist()])


def read_results_csv(path: str | Path) -> list[SimulationResult]:
    """Load per-simulation rows written by :func:`write_results_csv` (no event streams)."""
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        n_types = (len(header) - 7) // 2
        for row in rows:
            vals = [int(v) for v in row]
            out.append(
                SimulationResult(
                    seed=vals[1], final_home_goals=vals[2], final_away_goals=vals[3],
                    home_counts=np.array(vals[7 : 7 + n_types]), away_counts=np.array(vals[7 + n_types :]),
                    n_events=vals[6], truncated=bool(vals[5]),
                )
            )
    return out


def write_summary_json(batch: BatchResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(batch.summary(), indent=2, sort_keys=True) + "\n")
