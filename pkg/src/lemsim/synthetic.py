"""Markov-chain event generator with known conditional distributions.

Used to produce corpora whose true next-event law is known exactly, for
checking that training recovers it, and to make demo inputs when no real
event feed is at hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .events import N_TYPES, Event, EventVocabulary, default_vocabulary
from .ingest import Corpus, Match


@dataclass
class Style:
    """How matches played in this style unfold.

    ``transitions[a][b]`` is P(next type = b | current type = a). Types not
    listed in ``accuracy``/``goal`` use the defaults. ``x_bin`` pins the
    x location of every event when set; otherwise x and y are uniform on the
    percent grid. ``gap_minutes[k]`` is P(next event is k whole minutes later).
    """

    transitions: Mapping[str, Mapping[str, float]]
    accuracy: Mapping[str, float] = field(default_factory=dict)
    goal: Mapping[str, float] = field(default_factory=dict)
    default_accuracy: float = 0.7
    default_goal: float = 0.1
    keep_possession: float = 0.6
    gap_minutes: Sequence[float] = (0.5, 0.4, 0.1)
    x_bin: int | None = None

    def matrix(self, vocab: EventVocabulary) -> np.ndarray:
        m = np.zeros((N_TYPES, N_TYPES))
        for a, row in self.transitions.items():
            for b, p in row.items():
                m[vocab.id_of(a), vocab.id_of(b)] = p
        live = m.sum(axis=1) > 0
        if not np.allclose(m[live].sum(axis=1), 1.0):
            raise ValueError("transition rows must sum to 1")
        return m


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def generate_match(
    style: Style,
    rng: np.random.Generator,
    match_id: Hashable,
    home_team: Hashable,
    away_team: Hashable,
    rosters: Mapping[Hashable, Sequence[Hashable]],
    *,
    league: str = "SYN",
    season: str = "synthetic",
    half_length: float = 45.0,
    vocabulary: EventVocabulary | None = None,
) -> Match:
    vocab = vocabulary or default_vocabulary()
    trans = style.matrix(vocab)
    live = np.flatnonzero(trans.sum(axis=1) > 0)
    acc = np.full(N_TYPES, style.default_accuracy)
    for name, p in style.accuracy.items():
        acc[vocab.id_of(name)] = p
    goal = np.zeros(N_TYPES)
    for i in vocab.goal_capable:
        goal[i] = style.default_goal
    for name, p in style.goal.items():
        goal[vocab.id_of(name)] = p
    trans_cdf = np.cumsum(trans, axis=1)
    gap_cdf = np.cumsum(np.asarray(style.gap_minutes, dtype=np.float64))

    kickoff = vocab.kickoff if vocab.kickoff in live else int(live[0])
    t, home = kickoff, 1
    events = []
    hs = aw = 0
    for period in (0, 1):
        minute = 0.0
        while minute < half_length:
            if events:
                t = _draw(trans_cdf[t], rng)
                if rng.random() >= style.keep_possession:
                    home = 1 - home
            is_goal = int(rng.random() < goal[t])
            if is_goal:
                hs, aw = (hs + 1, aw) if home else (hs, aw + 1)
            team = home_team if home else away_team
            x = style.x_bin if style.x_bin is not None else int(rng.integers(0, 101))
            events.append(
                Event(
                    type_id=t,
                    period=period,
                    minute=minute,
                    x=x / 100.0,
                    y=int(rng.integers(0, 101)) / 100.0,
                    is_home=home,
                    is_accurate=int(rng.random() < acc[t]),
                    is_goal=is_goal,
                    home_score=hs,
                    away_score=aw,
                    team_id=team,
                    player_id=rosters[team][int(rng.integers(len(rosters[team])))],
                    match_id=match_id,
                )
            )
            minute += float(_draw(gap_cdf, rng))
    return Match(match_id, league, season, home_team, away_team, tuple(events))


def generate_corpus(
    styles: Mapping[Hashable, Style],
    n_events: int,
    seed: int = 0,
    *,
    teams: Sequence[Hashable] | None = None,
    players_per_team: int = 11,
    league: str = "SYN",
    season: str = "synthetic",
    first_match_id: int = 1,
    vocabulary: EventVocabulary | None = None,
) -> Corpus:
    """Round-robin matches until at least ``n_events`` events exist.

    Each match is played in the style of its home team (``styles`` maps team
    id -> :class:`Style`; teams without an entry use the ``None`` key).
    """
    rng = np.random.default_rng(seed)
    teams = list(teams) if teams is not None else [t for t in styles if t is not None]
    if len(teams) < 2:
        raise ValueError("need at least two teams")
    rosters = {t: [f"{t}-p{k}" for k in range(players_per_team)] for t in teams}
    fixtures = [(h, a) for h in teams for a in teams if h != a]
    matches = []
    total = 0
    match_id = first_match_id
    while total < n_events:
        for h, a in fixtures:
            style = styles[h] if h in styles else styles[None]
            m = generate_match(style, rng, match_id, h, a, rosters, league=league, season=season,
                               vocabulary=vocabulary)
            matches.append(m)
            total += len(m.events)
            match_id += 1
            if total >= n_events:
                break
    return Corpus(tuple(matches), (vocabulary or default_vocabulary()).version)


def stationary_frequency(style: Style, vocabulary: EventVocabulary | None = None) -> np.ndarray:
    """Long-run share of each event type under the style's transition chain."""
    m = style.matrix(vocabulary or default_vocabulary())
    live = np.flatnonzero(m.sum(axis=1) > 0)
    sub = m[np.ix_(live, live)]
    w, v = np.linalg.eig(sub.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    pi = pi / pi.sum()
    out = np.zeros(N_TYPES)
    out[live] = pi
    return out


def demo_styles() -> dict[str, Style]:
    """Two contrasting styles for demo corpora: short passing and direct play."""
    possession = Style(
        {
            "simple pass": {"simple pass": 0.70, "smart pass": 0.06, "cross": 0.04, "shot": 0.03,
                            "ground attacking duel": 0.09, "ball out of the field": 0.08},
            "smart pass": {"simple pass": 0.50, "shot": 0.20, "ground attacking duel": 0.30},
            "cross": {"air duel": 0.50, "shot": 0.20, "clearance": 0.30},
            "shot": {"goal kick": 0.40, "save attempt": 0.40, "corner": 0.20},
            "ground attacking duel": {"ground defending duel": 0.70, "foul": 0.10, "simple pass": 0.20},
            "ground defending duel": {"simple pass": 0.80, "clearance": 0.20},
            "air duel": {"air duel": 0.40, "head pass": 0.30, "clearance": 0.30},
            "head pass": {"simple pass": 0.70, "air duel": 0.30},
            "clearance": {"throw in": 0.40, "simple pass": 0.60},
            "foul": {"free kick": 1.0},
            "free kick": {"simple pass": 0.85, "free kick shot": 0.15},
            "free kick shot": {"goal kick": 0.50, "save attempt": 0.50},
            "save attempt": {"simple pass": 0.50, "corner": 0.50},
            "corner": {"air duel": 0.70, "shot": 0.30},
            "goal kick": {"simple pass": 0.40, "air duel": 0.60},
            "throw in": {"simple pass": 0.90, "air duel": 0.10},
            "ball out of the field": {"throw in": 0.70, "goal kick": 0.15, "corner": 0.15},
        },
        accuracy={"simple pass": 0.88, "smart pass": 0.60, "cross": 0.35, "shot": 0.45},
        goal={"shot": 0.11, "free kick shot": 0.06},
        gap_minutes=(0.7, 0.25, 0.05),
    )
    rows = {a: dict(r) for a, r in possession.transitions.items()}
    rows["simple pass"] = {"simple pass": 0.45, "high pass": 0.15, "cross": 0.10, "shot": 0.06,
                           "ground attacking duel": 0.12, "ball out of the field": 0.12}
    rows["high pass"] = {"air duel": 0.60, "simple pass": 0.25, "shot": 0.05, "ball out of the field": 0.10}
    direct = Style(
        rows,
        accuracy={"simple pass": 0.78, "high pass": 0.45, "cross": 0.30, "shot": 0.40},
        goal={"shot": 0.10, "free kick shot": 0.06},
        gap_minutes=(0.65, 0.28, 0.07),
    )
    return {"possession": possession, "direct": direct}
