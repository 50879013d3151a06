"""League projections, per-game statistics and points distributions."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .events import EventVocabulary, default_vocabulary
from .sim import BatchResult, SimulationResult

HOME_FIXTURES = 19

STAT_GROUPS = {
    "passes": ("cross", "hand pass", "head pass", "high pass", "launch", "simple pass", "smart pass"),
    "attacking_duels": ("ground attacking duel",),
    "defensive_duels": ("ground defending duel",),
    "aerial_duels": ("air duel",),
    "shots": ("shot", "free kick shot", "penalty"),
}
STAT_COLUMNS = [f"{g}_{side}" for g in (*STAT_GROUPS, "goals") for side in ("home", "away")]


class AnalyticsError(ValueError):
    pass


def _points(batch: Any) -> np.ndarray:
    if isinstance(batch, BatchResult):
        return batch.points
    if isinstance(batch, Sequence) and batch and isinstance(batch[0], SimulationResult):
        return np.array([r.points_home for r in batch], dtype=np.int64)
    return np.asarray(batch, dtype=np.int64).ravel()


def expected_points(batch: Any) -> float:
    if isinstance(batch, Mapping):
        return float(batch["expected_points"])
    if isinstance(batch, (int, float)):
        return float(batch)
    pts = _points(batch)
    if pts.size == 0:
        raise AnalyticsError("empty batch")
    return float(pts.sum()) / pts.size


# -- league projection ------------------------------------------------------


@dataclass(frozen=True)
class ProjectionRow:
    team: str
    expected_points: float
    season_home_points: float
    expected_rank: int
    reference_rank: int
    reference_home_rank: int | None
    displacement: int
    home_displacement: int | None


@dataclass(frozen=True)
class LeagueProjection:
    rows: tuple[ProjectionRow, ...]
    top_k: int
    avg_displacement: float
    top_k_displacement: float
    avg_home_displacement: float | None
    top_k_home_displacement: float | None


def displacement(expected_ranks: Sequence[int], reference_ranks: Sequence[int]) -> float:
    """Mean absolute rank difference."""
    if len(expected_ranks) != len(reference_ranks) or not expected_ranks:
        raise AnalyticsError("rank lists must be non-empty and the same length")
    return float(np.mean(np.abs(np.asarray(expected_ranks) - np.asarray(reference_ranks))))


def project_league(
    batches: Mapping[str, Any],
    reference: Mapping[str, Any],
    top_k: int = 6,
    home_fixtures: int = HOME_FIXTURES,
) -> LeagueProjection:
    """Rank teams by expected home points and compare with actual tables.

    ``batches`` maps team -> simulated batch (a :class:`BatchResult`, a list
    of results, per-match points, a summary dict or the expected points
    themselves). ``reference`` maps team -> full-table rank, or a
    ``(full_rank, home_rank)`` pair.
    """
    if set(batches) != set(reference):
        missing = sorted(set(batches) ^ set(reference))
        raise AnalyticsError(f"teams differ between simulations and reference table: {missing}")
    exp = {team: expected_points(b) for team, b in batches.items()}
    order = sorted(exp, key=lambda t: (-exp[t], str(t)))
    rows = []
    for rank, team in enumerate(order, start=1):
        ref = reference[team]
        full, home = (ref, None) if isinstance(ref, (int, np.integer)) else (int(ref[0]), ref[1])
        rows.append(
            ProjectionRow(
                team=team,
                expected_points=exp[team],
                season_home_points=home_fixtures * exp[team],
                expected_rank=rank,
                reference_rank=int(full),
                reference_home_rank=None if home is None else int(home),
                displacement=abs(rank - int(full)),
                home_displacement=None if home is None else abs(rank - int(home)),
            )
        )
    k = min(top_k, len(rows))
    has_home = all(r.home_displacement is not None for r in rows)
    return LeagueProjection(
        rows=tuple(rows),
        top_k=k,
        avg_displacement=float(np.mean([r.displacement for r in rows])),
        top_k_displacement=float(np.mean([r.displacement for r in rows[:k]])),
        avg_home_displacement=float(np.mean([r.home_displacement for r in rows])) if has_home else None,
        top_k_home_displacement=float(np.mean([r.home_displacement for r in rows[:k]])) if has_home else None,
    )


def write_projection_csv(proj: LeagueProjection, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["team", "exp_points", "exp_rank", "ref_rank", "displacement", "season_home_points",
                    "ref_home_rank", "home_displacement"])
        for r in proj.rows:
            w.writerow([r.team, repr(r.expected_points), r.expected_rank, r.reference_rank, r.displacement,
                        repr(r.season_home_points), "" if r.reference_home_rank is None else r.reference_home_rank,
                        "" if r.home_displacement is None else r.home_displacement])
        w.writerow(["avg_displacement", "", "", "", repr(proj.avg_displacement), "", "",
                    "" if proj.avg_home_displacement is None else repr(proj.avg_home_displacement)])
        w.writerow([f"top{proj.top_k}_avg_displacement", "", "", "", repr(proj.top_k_displacement), "", "",
                    "" if proj.top_k_home_displacement is None else repr(proj.top_k_home_displacement)])


# -- per-game statistics ----------------------------------------------------


def match_stats(results: Sequence[SimulationResult], vocabulary: EventVocabulary | None = None) -> dict[str, float]:
    """Per-game averages of passes, duels, shots and goals for both sides.

    Side attribution follows each event's home flag: ``*_home`` is the home
    team's output, ``*_away`` its opponents'.
    """
    if not results:
        raise AnalyticsError("no simulation results")
    vocab = vocabulary or default_vocabulary()
    home = np.sum([r.home_counts for r in results], axis=0)
    away = np.sum([r.away_counts for r in results], axis=0)
    n = len(results)
    out = {}
    for group, names in STAT_GROUPS.items():
        ids = [vocab.id_of(name) for name in names]
        out[f"{group}_home"] = float(home[ids].sum()) / n
        out[f"{group}_away"] = float(away[ids].sum()) / n
    out["goals_home"] = float(sum(r.final_home_goals for r in results)) / n
    out["goals_away"] = float(sum(r.final_away_goals for r in results)) / n
    return out


def write_stats_csv(stats: Mapping[str, Mapping[str, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["team", *STAT_COLUMNS])
        for team, row in stats.items():
            w.writerow([team, *(repr(row[c]) for c in STAT_COLUMNS)])


# -- points distributions ---------------------------------------------------


@dataclass(frozen=True)
class ScenarioDistribution:
    scenario: str
    n: int
    share: dict[int, float]  # points value -> fraction of matches
    mean: float
    variance: float
    season_mean: float
    season_sd: float
    season_quantiles: dict[str, float]
    delta_mean: float
    delta_variance: float
    points: np.ndarray

    def row(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "p0": self.share[0],
            "p1": self.share[1],
            "p3": self.share[3],
            "mean": self.mean,
            "variance": self.variance,
            "season_mean": self.season_mean,
            "season_sd": self.season_sd,
            **{f"season_{k}": v for k, v in self.season_quantiles.items()},
            "delta_mean": self.delta_mean,
            "delta_variance": self.delta_variance,
        }


def _exact_mean(points: np.ndarray) -> Fraction:
    return Fraction(int(points.sum()), int(points.size))


def _exact_variance(points: np.ndarray) -> Fraction:
    mean = _exact_mean(points)
    return Fraction(int((points.astype(np.int64) ** 2).sum()), int(points.size)) - mean * mean


def points_distribution(
    baseline: Any,
    scenarios: Mapping[str, Any],
    *,
    n_bootstrap: int = 2000,
    fixtures: int = HOME_FIXTURES,
    seed: int = 0,
    baseline_name: str = "baseline",
) -> list[ScenarioDistribution]:
    """Empirical per-match and season-aggregate points distributions.

    Means, variances and their deltas against the baseline are computed in
    exact rational arithmetic before rounding to float. The season aggregate
    is a bootstrap of ``fixtures`` per-match draws.
    """
    base = _points(baseline)
    if base.size == 0:
        raise AnalyticsError("empty baseline batch")
    base_mean, base_var = _exact_mean(base), _exact_variance(base)
    rng = np.random.default_rng(seed)
    out = []
    for name, batch in ((baseline_name, baseline), *scenarios.items()):
        pts = _points(batch)
        if pts.size == 0:
            raise AnalyticsError(f"scenario {name!r} has no simulations")
        if not np.isin(pts, (0, 1, 3)).all():
            raise AnalyticsError(f"scenario {name!r} has points outside {{0, 1, 3}}")
        mean, var = _exact_mean(pts), _exact_variance(pts)
        season = rng.choice(pts, size=(n_bootstrap, fixtures), replace=True).sum(axis=1)
        out.append(
            ScenarioDistribution(
                scenario=name,
                n=int(pts.size),
                share={v: float(np.count_nonzero(pts == v)) / pts.size for v in (0, 1, 3)},
                mean=float(mean),
                variance=float(var),
                season_mean=float(season.mean()),
                season_sd=float(season.std(ddof=1)) if n_bootstrap > 1 else 0.0,
                season_quantiles={f"q{q:02d}": float(np.percentile(season, q)) for q in (5, 25, 50, 75, 95)},
                delta_mean=float(mean - base_mean),
                delta_variance=float(var - base_var),
                points=pts,
            )
        )
    return out


def write_distribution_csv(dists: Sequence[ScenarioDistribution], path: str | Path) -> None:
    """Long format: scenario, simulation_index, points."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "simulation_index", "points"])
        for d in dists:
            for i, p in enumerate(d.points.tolist()):
                w.writerow([d.scenario, i, p])


def write_distribution_summary_csv(dists: Sequence[ScenarioDistribution], path: str | Path) -> None:
    rows = [d.row() for d in dists]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
