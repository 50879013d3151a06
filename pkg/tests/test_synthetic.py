from __future__ import annotations

import numpy as np
import pytest

from lemsim.synthetic import Style, demo_styles, generate_corpus, stationary_frequency


def two_state():
    return Style({"simple pass": {"simple pass": 0.75, "shot": 0.25}, "shot": {"simple pass": 1.0}})


class TestGenerator:
    def test_deterministic(self):
        s = {"A": two_state(), "B": two_state()}
        assert generate_corpus(s, 2000, seed=3) == generate_corpus(s, 2000, seed=3)

    def test_reaches_event_budget(self):
        c = generate_corpus({"A": two_state(), "B": two_state()}, 5000, seed=0)
        assert c.n_events >= 5000

    def test_empirical_transitions_match(self, vocab):
        c = generate_corpus({"A": two_state(), "B": two_state()}, 40000, seed=1)
        p, s = vocab.id_of("simple pass"), vocab.id_of("shot")
        after_pass = [b.type_id for m in c.matches for a, b in zip(m.events, m.events[1:]) if a.type_id == p]
        assert np.mean(np.array(after_pass) == s) == pytest.approx(0.25, abs=0.01)

    def test_stationary_frequency(self, vocab):
        f = stationary_frequency(two_state())
        assert f[vocab.id_of("shot")] == pytest.approx(0.2) and f.sum() == pytest.approx(1.0)

    def test_rows_must_sum_to_one(self, vocab):
        with pytest.raises(ValueError):
            Style({"shot": {"shot": 0.5}}).matrix(vocab)

    def test_demo_styles_differ(self, vocab):
        st = demo_styles()
        f = {k: stationary_frequency(v) for k, v in st.items()}
        assert f["direct"][vocab.id_of("high pass")] > 0 == f["possession"][vocab.id_of("high pass")]

    def test_needs_two_teams(self):
        with pytest.raises(ValueError):
            generate_corpus({"A": two_state()}, 100)
