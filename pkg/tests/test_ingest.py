from __future__ import annotations

import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import AWAY, HOME, matches_record, raw_event, ten_event_match
from lemsim.events import Event
from lemsim.ingest import (
    Corpus,
    IngestError,
    Match,
    export_csv,
    parse_events,
    parse_matches,
    read_corpus,
    split_corpus,
    to_wyscout_records,
    write_corpus,
)
from lemsim.synthetic import demo_styles, generate_corpus


def toy_league_corpus(leagues=("A", "B", "C")):
    matches = []
    for i, league in enumerate(leagues):
        ev = Event(0, 0, 0.0, 0.5, 0.5, 1, 1, 0, 0, 0, team_id=f"h{i}", player_id="p", match_id=i)
        matches.append(Match(i, league, "s1", f"h{i}", f"a{i}", (ev, ev)))
    return Corpus(tuple(matches))


class TestParseEvents:
    def test_ten_event_fixture_home_goals(self, ten_event_raw):
        c = parse_events(ten_event_raw, matches=parse_matches(json.dumps([matches_record()])))
        (m,) = c.matches
        assert len(m.events) == 10
        assert m.final_score == (2, 0)
        assert [e.home_score for e in m.events] == [0, 0, 1, 1, 1, 1, 1, 1, 1, 2]
        assert sum(e.is_goal for e in m.events) == 2

    def test_percent_coordinates(self, ten_event_raw):
        e = parse_events(ten_event_raw).matches[0].events[0]
        assert (e.x, e.y) == (0.5, 0.5)

    def test_empty_input(self):
        assert len(parse_events(b"")) == 0
        assert len(parse_events("[]")) == 0

    def test_malformed_json_reports_offset(self):
        with pytest.raises(IngestError, match="byte 10"):
            parse_events(b'[{"id": 1,, }]')

    def test_offset_counts_bytes_not_characters(self):
        with pytest.raises(IngestError, match="byte 9"):
            # error at character 7; each é is two bytes
            parse_events('["éé", ,]'.encode())

    def test_unknown_type_drop_and_error(self):
        recs = ten_event_match()
        recs[1]["eventId"], recs[1]["subEventId"] = 99, 1
        c = parse_events(json.dumps(recs))
        assert c.n_events == 9 and c.dropped == {"unknown_type": 1}
        with pytest.raises(IngestError, match="unknown event type"):
            parse_events(json.dumps(recs), on_unknown="error")

    def test_dropped_periods_are_counted(self):
        recs = ten_event_match()
        recs[0]["matchPeriod"] = "P"
        recs[1]["matchPeriod"] = "E1"
        c = parse_events(json.dumps(recs))
        assert c.dropped == {"period": 2} and c.n_events == 8

    def test_sorted_by_period_minute_sequence(self):
        recs = list(reversed(ten_event_match()))
        m = parse_events(json.dumps(recs)).matches[0]
        keys = [(e.period, e.minute) for e in m.events]
        assert keys == sorted(keys)

    def test_stable_for_equal_timestamps(self):
        recs = [raw_event(1, 1, HOME, 1, "simple pass", 0, 5.0), raw_event(2, 1, AWAY, 2, "shot", 0, 5.0)]
        m = parse_events(json.dumps(recs)).matches[0]
        assert [e.player_id for e in m.events] == [1, 2]

    def test_missing_coordinates_reuse_previous(self):
        recs = ten_event_match()
        recs[3]["positions"] = []
        recs[0]["positions"] = []
        m = parse_events(json.dumps(recs)).matches[0]
        assert (m.events[0].x, m.events[0].y) == (0.5, 0.5)
        assert (m.events[3].x, m.events[3].y) == (m.events[2].x, m.events[2].y)

    def test_own_goal_credits_opponent(self):
        recs = [raw_event(1, 1, HOME, 1, "simple pass", 0, 1.0),
                raw_event(2, 1, AWAY, 2, "clearance", 0, 5.0, tags=(102,))]
        m = parse_events(json.dumps(recs), matches=parse_matches(json.dumps([matches_record()]))).matches[0]
        assert m.final_score == (1, 0)
        assert m.events[1].is_goal == 0

    def test_goal_tag_on_non_shot_is_not_a_goal(self):
        recs = [raw_event(1, 1, HOME, 1, "simple pass", 0, 1.0, tags=(101,))]
        m = parse_events(json.dumps(recs)).matches[0]
        assert m.events[0].is_goal == 0 and m.final_score == (0, 0)

    def test_home_side_from_metadata(self):
        recs = ten_event_match()
        m = parse_events(json.dumps(recs), matches={1: parse_matches(json.dumps([matches_record(1, AWAY, HOME)]))[1]})
        assert m.matches[0].home_team_id == AWAY
        assert m.matches[0].final_score == (0, 2)

    def test_home_inferred_without_metadata(self):
        m = parse_events(json.dumps(ten_event_match())).matches[0]
        assert (m.home_team_id, m.away_team_id) == (HOME, AWAY)

    def test_foreign_team_dropped(self):
        recs = ten_event_match()
        recs[4]["teamId"] = 999
        c = parse_events(json.dumps(recs), matches=parse_matches(json.dumps([matches_record()])))
        assert c.dropped == {"foreign_team": 1}
        assert {e.team_id for e in c.events()} <= {HOME, AWAY}

    def test_reads_file_objects(self, ten_event_raw):
        assert parse_events(io.BytesIO(ten_event_raw)).n_events == 10

    def test_scores_never_decrease(self, ten_event_raw):
        m = parse_events(ten_event_raw).matches[0]
        for a, b in zip(m.events, m.events[1:]):
            assert b.home_score >= a.home_score and b.away_score >= a.away_score

    def test_parse_matches_requires_sides(self):
        with pytest.raises(IngestError):
            parse_matches(json.dumps([{"wyId": 1, "teamsData": {"1": {"side": "home"}}}]))


class TestSplit:
    def test_toy_one_match_each(self):
        train, val, pool = split_corpus(toy_league_corpus(), ["A"], ["B"], ["C"])
        assert [len(train), len(val), len(pool)] == [1, 1, 1]
        assert {m.league for m in pool.matches} == {"C"}

    def test_pool_holds_exactly_selected_leagues(self):
        c = toy_league_corpus(("L1", "BUN", "SA", "EPL", "LL"))
        train, val, pool = split_corpus(c, ["L1", "BUN"], ["SA"], ["EPL", "LL"])
        assert sorted(m.league for m in pool.matches) == ["EPL", "LL"]
        assert sorted(m.league for m in train.matches) == ["BUN", "L1"]

    def test_all_in_train(self):
        train, val, pool = split_corpus(toy_league_corpus(), ["A", "B", "C"])
        assert len(train) == 3 and len(val) == 0 and len(pool) == 0

    def test_season_selector(self):
        train, _, _ = split_corpus(toy_league_corpus(), ["A@s1"])
        assert len(train) == 1
        with pytest.raises(IngestError):
            split_corpus(toy_league_corpus(), ["A@s2"])

    def test_zero_match_selector(self):
        with pytest.raises(IngestError, match="zero matches"):
            split_corpus(toy_league_corpus(), ["A"], ["Z"])

    def test_overlap_rejected(self):
        with pytest.raises(IngestError, match="more than one split"):
            split_corpus(toy_league_corpus(), ["A"], ["A@s1"])

    @given(st.lists(st.sampled_from("ABCDE"), min_size=1, max_size=12),
           st.lists(st.integers(0, 2), min_size=5, max_size=5))
    def test_disjoint_and_complete(self, leagues, roles):
        c = toy_league_corpus(tuple(leagues))
        present = sorted(set(leagues))
        sels = [[lg for lg in present if roles["ABCDE".index(lg)] == r] for r in range(3)]
        parts = split_corpus(c, *sels)
        ids = [m.match_id for p in parts for m in p.matches]
        assert len(ids) == len(set(ids)) == len(c)


class TestEventFile:
    def test_round_trip(self, tmp_path, ten_event_raw):
        c = parse_events(ten_event_raw, league="EPL", season="2017/18")
        write_corpus(c, tmp_path / "c.lev")
        assert read_corpus(tmp_path / "c.lev") == c

    def test_round_trip_synthetic_mixed_ids(self, tmp_path):
        c = generate_corpus({"a": demo_styles()["direct"], 7: demo_styles()["possession"]}, 3000, seed=4)
        write_corpus(c, tmp_path / "c.lev")
        back = read_corpus(tmp_path / "c.lev")
        assert back == c
        assert {m.home_team_id for m in back.matches} == {"a", 7}

    def test_parse_serialize_parse_idempotent(self, tmp_path):
        c = generate_corpus({"X": demo_styles()["direct"], "Y": demo_styles()["direct"]}, 2000, seed=2)
        events, matches = to_wyscout_records(c)
        once = parse_events(json.dumps(events), matches=parse_matches(json.dumps(matches)), league="SYN",
                            season="synthetic")
        events2, matches2 = to_wyscout_records(once)
        twice = parse_events(json.dumps(events2), matches=parse_matches(json.dumps(matches2)), league="SYN",
                             season="synthetic")
        assert once == twice
        assert once == c

    def test_truncated_and_trailing(self, tmp_path, ten_event_raw):
        p = tmp_path / "c.lev"
        write_corpus(parse_events(ten_event_raw), p)
        data = p.read_bytes()
        p.write_bytes(data[:-3])
        with pytest.raises(IngestError, match="truncated"):
            read_corpus(p)
        p.write_bytes(data + b"\0")
        with pytest.raises(IngestError, match="trailing"):
            read_corpus(p)
        p.write_bytes(b"nope" + data)
        with pytest.raises(IngestError, match="not a lemsim event file"):
            read_corpus(p)

    def test_csv_export(self, tmp_path, ten_event_raw):
        p = tmp_path / "c.csv"
        export_csv(parse_events(ten_event_raw), p)
        lines = p.read_text().splitlines()
        assert len(lines) == 11
        assert lines[0].startswith("match_id,league,season,type_id,type")


class TestCorpus:
    def test_merge_rejects_duplicates(self):
        c = toy_league_corpus()
        with pytest.raises(IngestError):
            c.merge(c)

    def test_merge_and_leagues(self):
        a = toy_league_corpus(("A",))
        b = Corpus(tuple(Match(m.match_id + 10, m.league, m.season, m.home_team_id, m.away_team_id, m.events)
                         for m in toy_league_corpus(("B",)).matches))
        assert a.merge(b).leagues() == ["A", "B"]
