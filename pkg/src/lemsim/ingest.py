"""Wyscout-style event ingestion, corpus splitting and the columnar event file."""

from __future__ import annotations

import csv
import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Hashable, Iterator, Mapping, Sequence

import numpy as np

from .events import Event, EventVocabulary, default_vocabulary

logger = logging.getLogger(__name__)

TAG_GOAL = 101
TAG_OWN_GOAL = 102
TAG_ACCURATE = 1801
PERIODS = {"1H": 0, "2H": 1}

EVENT_FILE_MAGIC = b"LEMEV"
EVENT_FILE_VERSION = 1


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class Match:
    match_id: Hashable
    league: str
    season: str
    home_team_id: Hashable
    away_team_id: Hashable
    events: tuple[Event, ...]

    @property
    def final_score(self) -> tuple[int, int]:
        if not self.events:
            return 0, 0
        last = self.events[-1]
        return last.home_score, last.away_score


@dataclass(frozen=True)
class Corpus:
    matches: tuple[Match, ...]
    vocabulary_version: str = "wyscout-v1"
    dropped: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.matches)

    @property
    def n_events(self) -> int:
        return sum(len(m.events) for m in self.matches)

    def events(self) -> Iterator[Event]:
        for m in self.matches:
            yield from m.events

    def leagues(self) -> list[str]:
        return sorted({m.league for m in self.matches})

    def select(self, keep) -> "Corpus":
        return Corpus(tuple(m for m in self.matches if keep(m)), self.vocabulary_version)

    def merge(self, *others: "Corpus") -> "Corpus":
        matches = list(self.matches)
        seen = {m.match_id for m in matches}
        for other in others:
            if other.vocabulary_version != self.vocabulary_version:
                raise IngestError("cannot merge corpora built with different type vocabularies")
            for m in other.matches:
                if m.match_id in seen:
                    raise IngestError(f"match {m.match_id!r} present in more than one corpus")
                seen.add(m.match_id)
                matches.append(m)
        return Corpus(tuple(matches), self.vocabulary_version)


@dataclass(frozen=True)
class MatchInfo:
    home_team_id: Hashable
    away_team_id: Hashable
    label: str = ""


def _load_json(raw: bytes | str | IO) -> Any:
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, bytes):
        text = raw.decode("utf-8")
    else:
        text = raw
    if not text.strip():
        return []
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise IngestError(f"malformed JSON at byte {offset}: {exc.msg}") from exc


def parse_matches(raw: bytes | str | IO) -> dict[Hashable, MatchInfo]:
    """Read a Wyscout matches file into ``match_id -> MatchInfo``."""
    out = {}
    for rec in _load_json(raw):
        sides = {v.get("side"): k for k, v in rec.get("teamsData", {}).items()}
        if "home" not in sides or "away" not in sides:
            raise IngestError(f"match {rec.get('wyId')} lacks home/away team data")
        home, away = _id(sides["home"]), _id(sides["away"])
        out[rec["wyId"]] = MatchInfo(home, away, rec.get("label", ""))
    return out


def _id(v: Any) -> Hashable:
    # teamsData keys are strings in the public dump; events carry ints
    if isinstance(v, str) and v.lstrip("-").isdigit():
        return int(v)
    return v


def parse_events(
    raw: bytes | str | IO,
    vocabulary: EventVocabulary | None = None,
    *,
    league: str = "",
    season: str = "",
    matches: Mapping[Hashable, MatchInfo] | None = None,
    on_unknown: str = "drop",
) -> Corpus:
    """Parse a Wyscout event array into a :class:`Corpus`.

    Records that cannot be represented are dropped; drop reasons are logged
    and counted in ``Corpus.dropped``. With ``on_unknown="error"`` an unmapped
    event type raises instead.

    Without ``matches`` metadata the home side of a match is taken to be the
    team of its first first-half event.
    """
    if on_unknown not in ("drop", "error"):
        raise ValueError("on_unknown must be 'drop' or 'error'")
    vocab = vocabulary or default_vocabulary()
    records = _load_json(raw)
    if not isinstance(records, list):
        raise IngestError("expected a JSON array of event records")

    dropped: Counter[str] = Counter()
    by_match: dict[Hashable, list[tuple[int, float, int, dict, int]]] = {}
    for seq, rec in enumerate(records):
        period = PERIODS.get(rec.get("matchPeriod"))
        if period is None:
            dropped["period"] += 1
            logger.debug("record %s dropped: period %r", rec.get("id"), rec.get("matchPeriod"))
            continue
        type_id = vocab.lookup(int(rec["eventId"]), _sub_id(rec.get("subEventId")))
        if type_id is None:
            if on_unknown == "error":
                raise IngestError(
                    f"unknown event type ({rec.get('eventId')}, {rec.get('subEventId')}) in record {rec.get('id')}"
                )
            dropped["unknown_type"] += 1
            logger.debug("record %s dropped: unknown type", rec.get("id"))
            continue
        try:
            minute = float(rec["eventSec"]) / 60.0
            match_id = rec["matchId"]
            team_id = rec["teamId"]
        except (KeyError, TypeError, ValueError):
            dropped["missing_field"] += 1
            logger.debug("record %s dropped: missing clock or ids", rec.get("id"))
            continue
        by_match.setdefault(match_id, []).append((period, minute, seq, rec, type_id))

    out = []
    for match_id, rows in by_match.items():
        rows.sort(key=lambda r: r[:3])
        info = (matches or {}).get(match_id)
        if info is None:
            first = next((r for r in rows if r[0] == 0), rows[0])
            teams = []
            for r in rows:
                if r[3]["teamId"] not in teams:
                    teams.append(r[3]["teamId"])
            home = first[3]["teamId"]
            others = [t for t in teams if t != home]
            info = MatchInfo(home, others[0] if others else None)
        out.append(_build_match(match_id, rows, info, vocab, league, season, dropped))
    return Corpus(tuple(out), vocab.version, dict(dropped))


def _sub_id(v: Any) -> int | None:
    if v is None or v == "":
        return None
    return int(v)


def _build_match(match_id, rows, info: MatchInfo, vocab, league, season, dropped) -> Match:
    teams = {info.home_team_id, info.away_team_id}
    events = []
    home_score = away_score = 0
    x, y = 0.5, 0.5
    for period, minute, _seq, rec, type_id in rows:
        team = rec["teamId"]
        if team not in teams:
            dropped["foreign_team"] += 1
            logger.debug("record %s dropped: team %r not in match %r", rec.get("id"), team, match_id)
            continue
        positions = rec.get("positions") or []
        if positions and positions[0].get("x") is not None and positions[0].get("y") is not None:
            x = min(max(float(positions[0]["x"]), 0.0), 100.0) / 100.0
            y = min(max(float(positions[0]["y"]), 0.0), 100.0) / 100.0
        tags = {t.get("id") for t in rec.get("tags") or []}
        is_home = int(team == info.home_team_id)
        is_goal = int(TAG_GOAL in tags and type_id in vocab.goal_capable)
        if is_goal:
            if is_home:
                home_score += 1
            else:
                away_score += 1
        elif TAG_OWN_GOAL in tags:
            if is_home:
                away_score += 1
            else:
                home_score += 1
        events.append(
            Event(
                type_id=type_id,
                period=period,
                minute=minute,
                x=x,
                y=y,
                is_home=is_home,
                is_accurate=int(TAG_ACCURATE in tags),
                is_goal=is_goal,
                home_score=home_score,
                away_score=away_score,
                team_id=team,
                player_id=rec.get("playerId"),
                match_id=match_id,
            )
        )
    return Match(match_id, league, season, info.home_team_id, info.away_team_id, tuple(events))


def _selector_hits(selectors: Sequence[str], m: Match) -> bool:
    for sel in selectors:
        league, _, season = sel.partition("@")
        if m.league == league and (not season or m.season == season):
            return True
    return False


def split_corpus(
    corpus: Corpus,
    train: Sequence[str],
    validation: Sequence[str] = (),
    pool: Sequence[str] = (),
) -> tuple[Corpus, Corpus, Corpus]:
    """Partition matches by league selectors (``"EPL"`` or ``"EPL@2017/18"``).

    A match claimed by more than one selector list is an error, as is any
    selector that matches nothing.
    """
    for sel in (*train, *validation, *pool):
        if not any(_selector_hits([sel], m) for m in corpus.matches):
            raise IngestError(f"selector {sel!r} matches zero matches")
    parts: list[list[Match]] = [[], [], []]
    for m in corpus.matches:
        hits = [i for i, sels in enumerate((train, validation, pool)) if _selector_hits(sels, m)]
        if len(hits) > 1:
            raise IngestError(f"match {m.match_id!r} selected by more than one split")
        if hits:
            parts[hits[0]].append(m)
    v = corpus.vocabulary_version
    return Corpus(tuple(parts[0]), v), Corpus(tuple(parts[1]), v), Corpus(tuple(parts[2]), v)


# -- columnar event file ----------------------------------------------------

_COLUMNS = [
    ("match", "<i4"),
    ("type_id", "<i1"),
    ("period", "<i1"),
    ("minute", "<f8"),
    ("x", "<f8"),
    ("y", "<f8"),
    ("is_home", "<i1"),
    ("is_accurate", "<i1"),
    ("is_goal", "<i1"),
    ("home_score", "<i2"),
    ("away_score", "<i2"),
    ("team", "<i4"),
    ("player", "<i4"),
]


class _Codes:
    def __init__(self) -> None:
        self.values: list[Hashable] = []
        self.index: dict[Hashable, int] = {}

    def __call__(self, v: Hashable) -> int:
        key = (type(v).__name__, v)
        code = self.index.get(key)
        if code is None:
            code = self.index[key] = len(self.values)
            self.values.append(v)
        return code


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the little-endian columnar event file.

    Layout: magic, u32 header length, UTF-8 JSON header, then each column in
    header order as a contiguous little-endian array.
    """
    teams, players = _Codes(), _Codes()
    cols: dict[str, list] = {name: [] for name, _ in _COLUMNS}
    match_meta = []
    for mi, m in enumerate(corpus.matches):
        match_meta.append(
            {
                "match_id": m.match_id,
                "league": m.league,
                "season": m.season,
                "home": teams(m.home_team_id),
                "away": teams(m.away_team_id),
                "n_events": len(m.events),
            }
        )
        for e in m.events:
            cols["match"].append(mi)
            for name in ("type_id", "period", "minute", "x", "y", "is_home", "is_accurate",
                         "is_goal", "home_score", "away_score"):
                cols[name].append(getattr(e, name))
            cols["team"].append(teams(e.team_id))
            cols["player"].append(players(e.player_id))
    header = {
        "format": "lemsim-events",
        "version": EVENT_FILE_VERSION,
        "vocabulary_version": corpus.vocabulary_version,
        "n_rows": len(cols["match"]),
        "columns": [{"name": n, "dtype": d} for n, d in _COLUMNS],
        "teams": teams.values,
        "players": players.values,
        "matches": match_meta,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(EVENT_FILE_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, dtype in _COLUMNS:
            fh.write(np.asarray(cols[name], dtype=dtype).tobytes())


def read_corpus(path: str | Path) -> Corpus:
    data = Path(path).read_bytes()
    if not data.startswith(EVENT_FILE_MAGIC):
        raise IngestError(f"{path}: not a lemsim event file")
    pos = len(EVENT_FILE_MAGIC)
    if len(data) < pos + 4:
        raise IngestError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestError(f"{path}: corrupt header") from exc
    if header.get("version") != EVENT_FILE_VERSION:
        raise IngestError(f"{path}: unsupported event file version {header.get('version')}")
    pos += hlen
    n = header["n_rows"]
    cols = {}
    for spec in header["columns"]:
        dt = np.dtype(spec["dtype"])
        size = n * dt.itemsize
        if pos + size > len(data):
            raise IngestError(f"{path}: truncated column {spec['name']}")
        cols[spec["name"]] = np.frombuffer(data, dtype=dt, count=n, offset=pos)
        pos += size
    if pos != len(data):
        raise IngestError(f"{path}: {len(data) - pos} trailing bytes")
    teams, players = header["teams"], header["players"]
    matches = []
    start = 0
    for mi, meta in enumerate(header["matches"]):
        stop = start + meta["n_events"]
        events = tuple(
            Event(
                type_id=int(cols["type_id"][i]),
                period=int(cols["period"][i]),
                minute=float(cols["minute"][i]),
                x=float(cols["x"][i]),
                y=float(cols["y"][i]),
                is_home=int(cols["is_home"][i]),
                is_accurate=int(cols["is_accurate"][i]),
                is_goal=int(cols["is_goal"][i]),
                home_score=int(cols["home_score"][i]),
                away_score=int(cols["away_score"][i]),
                team_id=teams[cols["team"][i]],
                player_id=players[cols["player"][i]],
                match_id=meta["match_id"],
            )
            for i in range(start, stop)
        )
        matches.append(
            Match(meta["match_id"], meta["league"], meta["season"], teams[meta["home"]],
                  teams[meta["away"]], events)
        )
        start = stop
    return Corpus(tuple(matches), header["vocabulary_version"])


CSV_FIELDS = ["match_id", "league", "season", "type_id", "type", "period", "minute", "x", "y",
              "is_home", "is_accurate", "is_goal", "home_score", "away_score", "team_id", "player_id"]


def export_csv(corpus: Corpus, out: str | Path | IO[str], vocabulary: EventVocabulary | None = None) -> None:
    vocab = vocabulary or default_vocabulary()
    own = isinstance(out, (str, Path))
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for m in corpus.matches:
            for e in m.events:
                w.writerow([m.match_id, m.league, m.season, e.type_id, vocab.name_of(e.type_id), e.period,
                            repr(e.minute), repr(e.x), repr(e.y), e.is_home, e.is_accurate, e.is_goal,
                            e.home_score, e.away_score, e.team_id, e.player_id])
    finally:
        if own:
            fh.close()


def to_wyscout_records(corpus: Corpus) -> tuple[list[dict], list[dict]]:
    """Render a corpus back into Wyscout-style (events, matches) records.

    Used to produce demo input files from synthetic corpora.
    """
    vocab = default_vocabulary()
    reverse: dict[int, tuple[int, int | None]] = {}
    for key, t in vocab.mapping.items():
        reverse.setdefault(t, key)
    events, matches = [], []
    next_id = 1
    for m in corpus.matches:
        matches.append(
            {
                "wyId": m.match_id,
                "label": f"{m.home_team_id} - {m.away_team_id}",
                "teamsData": {str(m.home_team_id): {"side": "home"}, str(m.away_team_id): {"side": "away"}},
            }
        )
        for e in m.events:
            event_id, sub_id = reverse[e.type_id]
            tags = []
            if e.is_accurate:
                tags.append({"id": TAG_ACCURATE})
            if e.is_goal:
                tags.append({"id": TAG_GOAL})
            events.append(
                {
                    "id": next_id,
                    "eventId": event_id,
                    "subEventId": "" if sub_id is None else sub_id,
                    "matchId": m.match_id,
                    "teamId": e.team_id,
                    "playerId": e.player_id,
                    "matchPeriod": "1H" if e.period == 0 else "2H",
                    "eventSec": e.minute * 60.0,
                    "positions": [{"x": e.x * 100.0, "y": e.y * 100.0}],
                    "tags": tags,
                }
            )
            next_id += 1
    return events, matches

