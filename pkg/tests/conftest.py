from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lemsim.cascade import constant_cascade
from lemsim.events import default_vocabulary

settings.register_profile("lemsim", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lemsim")

HOME, AWAY = 100, 200

# (eventId, subEventId) for the raw records used in fixtures
RAW = {
    "simple pass": (8, 85),
    "shot": (10, 100),
    "ground attacking duel": (1, 11),
    "ground defending duel": (1, 12),
    "free kick shot": (3, 33),
    "free kick": (3, 31),
    "clearance": (7, 71),
    "offside": (6, ""),
}


def raw_event(rec_id, match_id, team, player, kind, period, sec, x=50, y=50, tags=(), positions=True):
    event_id, sub = RAW[kind]
    return {
        "id": rec_id,
        "matchId": match_id,
        "teamId": team,
        "playerId": player,
        "eventId": event_id,
        "subEventId": sub,
        "matchPeriod": "1H" if period == 0 else "2H",
        "eventSec": sec,
        "positions": [{"x": x, "y": y}, {"x": 0, "y": 0}] if positions else [],
        "tags": [{"id": t} for t in tags],
    }


def ten_event_match(match_id=1):
    """Hand-built match: two home goals (one shot, one free-kick shot), no away goals."""
    rows = [
        (HOME, 11, "simple pass", 0, 0.0, 50, 50, (1801,)),
        (HOME, 12, "simple pass", 0, 4.0, 60, 40, (1801,)),
        (HOME, 13, "shot", 0, 9.5, 88, 50, (101, 1801)),
        (AWAY, 21, "simple pass", 0, 70.0, 50, 50, (1801,)),
        (AWAY, 22, "ground attacking duel", 0, 190.0, 55, 30, ()),
        (HOME, 14, "ground defending duel", 0, 191.0, 45, 70, (1801,)),
        (AWAY, 21, "shot", 1, 30.0, 80, 45, ()),
        (HOME, 15, "clearance", 1, 33.0, 10, 50, ()),
        (HOME, 12, "free kick", 1, 600.0, 70, 20, (1801,)),
        (HOME, 13, "free kick shot", 1, 602.0, 75, 25, (101, 1801)),
    ]
    return [raw_event(i + 1, match_id, t, p, k, per, s, x, y, tags) for i, (t, p, k, per, s, x, y, tags) in
            enumerate(rows)]


def matches_record(match_id=1, home=HOME, away=AWAY):
    return {"wyId": match_id, "label": "H - A",
            "teamsData": {str(home): {"side": "home"}, str(away): {"side": "away"}}}


@pytest.fixture
def ten_event_raw():
    return json.dumps(ten_event_match()).encode()


@pytest.fixture(scope="session")
def vocab():
    return default_vocabulary()


def pinned_cascade(type_name="simple pass", time_bin=1, p_acc=0.5, p_goal=0.0, is_home_logit=0.0,
                   x_bin=None, time_bin_seconds=60.0):
    """Constant cascade with one-hot-ish distributions set through the output biases."""
    c = constant_cascade(time_bin_seconds=time_bin_seconds)
    big = 60.0
    if type_name is not None:
        c.type_net.layers[-1].bias[c.vocabulary.id_of(type_name)] = big
    c.accuracy_net.layers[-1].bias[:] = [_logit(p_acc), _logit(p_goal)]
    data_bias = c.data_net.layers[-1].bias
    if x_bin is not None:
        data_bias[x_bin] = big
    if time_bin is not None:
        data_bias[202 + time_bin] = big
    data_bias[262] = 0.0
    data_bias[263] = is_home_logit
    c.invalidate()
    return c


def _logit(p):
    if p <= 0:
        return -60.0
    if p >= 1:
        return 60.0
    return float(np.log(p / (1 - p)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
