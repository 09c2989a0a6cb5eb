import itertools
import math

import pytest

from forgetwin import twin
from forgetwin.config import PAPER_PATTERN, RunConfig
from forgetwin.patterns import (PatternCandidate, enumerate_patterns, grid_search, hold_start_line, read_ranking_csv,
                                score_pattern, write_ranking_csv)
from forgetwin.twin import TurnPattern


@pytest.fixture(scope="module")
def cfg():
    return RunConfig()


def test_enumeration_sizes():
    pats = list(enumerate_patterns([60, 64], 8, palindromic=True))
    assert len(pats) == 16 and len(set(pats)) == 16
    assert PAPER_PATTERN in pats
    assert all(p == p[::-1] for p in pats)
    assert len(list(enumerate_patterns([60, 64], 3, palindromic=False))) == 8
    with pytest.raises(ValueError):
        list(enumerate_patterns([], 8))


def test_single_candidate(cfg):
    best, ranking = grid_search(cfg, candidates=[60], n_turns=8)
    assert best.turn_durations == (60.0,) * 8 and len(ranking) == 1


def test_palindromes_net_zero(cfg):
    for p in enumerate_patterns([56, 60, 64, 68], 8):
        assert cfg.line.hold_speed * TurnPattern(p).signed_time(0, sum(p)) == pytest.approx(0.0, abs=1e-12)


def test_scoring_deterministic_and_paper_pattern_feasible(cfg):
    a, b = score_pattern(cfg, PAPER_PATTERN), score_pattern(cfg, PAPER_PATTERN)
    assert a == b and a.feasible and math.isfinite(a.score)


def test_infeasible_candidates(cfg):
    # a bar parked near the entry cannot back up a full turn
    near = RunConfig()
    near.hold.head_pos = 5.0
    assert not score_pattern(near, PAPER_PATTERN).feasible
    # a long forward run pushes the head past the shear
    assert not score_pattern(cfg, (1.0, 200.0)).feasible


def test_argmin_against_rescoring(cfg):
    best, ranking = grid_search(cfg, candidates=[56, 64], n_turns=4)
    feasible = [c for c in ranking if c.feasible]
    assert all(best.score <= c.score for c in feasible)
    manual = min((score_pattern(cfg, p) for p in itertools.product([56.0, 64.0], repeat=2)
                  for p in [p + p[::-1]]), key=PatternCandidate.sort_key)
    assert best == manual


def test_ranking_csv_roundtrip(cfg, tmp_path):
    _, ranking = grid_search(cfg, candidates=[60, 64], n_turns=4)
    ranking = ranking + [PatternCandidate((1.0, 200.0), math.inf, False)]
    write_ranking_csv(ranking, tmp_path / "ranking.csv")
    assert (tmp_path / "ranking.csv").read_text().splitlines()[0] == "pattern,feasible,score_C"
    assert read_ranking_csv(tmp_path / "ranking.csv") == ranking


def test_hold_line_layout(cfg):
    state, powers = hold_start_line(cfg, cfg.turn_pattern(), cfg.patterns.constant_power)
    twin.set_zone_powers(state, powers)
    assert [z.power for z in state.zones][2:] == [cfg.patterns.constant_power] * 3
