"""Grid search over warm-holding turn patterns at constant power."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import twin
from .config import RunConfig
from .twin import MovementError, TurnPattern


@dataclass(frozen=True)
class PatternCandidate:
    turn_durations: tuple[float, ...]
    score: float  # mean |T - target| at hold end, C; inf when infeasible
    feasible: bool = True

    @property
    def label(self) -> str:
        return "-".join(f"{d:g}" for d in self.turn_durations)

    def sort_key(self):
        return (not self.feasible, self.score, self.turn_durations)


def enumerate_patterns(candidates, n_turns: int, palindromic: bool = True):
    """Every assignment of durations to turns, optionally mirror-symmetric."""
    cands = sorted({float(c) for c in candidates})
    if not cands or n_turns < 1:
        raise ValueError("need a non-empty candidate set and n_turns >= 1")
    if not palindromic:
        yield from itertools.product(cands, repeat=n_turns)
        return
    half = (n_turns + 1) // 2
    for head in itertools.product(cands, repeat=half):
        yield head + tuple(reversed(head[: n_turns // 2]))


def hold_start_line(cfg: RunConfig, pattern: TurnPattern, constant_power: float):
    """Warm-holding line with the mean initial profile and fixed learnable powers."""
    state = cfg.new_line(cfg.hold_mode(pattern=pattern))
    state.add_bar(twin.new_bar(0, cfg.bar.length, cfg.bar.n_segments, cfg.hold.head_pos, cfg.hold.init_mean))
    powers = [z.power if not z.learnable else float(constant_power) for z in state.zones]
    return state, powers


def score_pattern(cfg: RunConfig, durations, constant_power: float | None = None) -> PatternCandidate:
    power = cfg.patterns.constant_power if constant_power is None else constant_power
    durations = tuple(float(d) for d in durations)
    state, powers = hold_start_line(cfg, TurnPattern(durations), power)
    n_steps = int(math.ceil(cfg.hold.duration / cfg.line.dt - 1e-9))
    try:
        for _ in range(n_steps):
            twin.step(state, powers)
            bar = state.bars[0] if state.bars else None
            if bar is None or bar.head_pos > cfg.line.band_length or bar.n_removed:
                return PatternCandidate(durations, math.inf, False)
    except MovementError:
        return PatternCandidate(durations, math.inf, False)
    mae = float(np.mean(np.abs(state.bars[0].temps - cfg.reward.target)))
    return PatternCandidate(durations, mae, True)


def grid_search(cfg: RunConfig, candidates=None, n_turns: int | None = None, palindromic: bool | None = None,
                constant_power: float | None = None):
    """Return ``(best, ranking)``; ranking is sorted best first, infeasible last."""
    p = cfg.patterns
    candidates = p.candidates if candidates is None else candidates
    n_turns = p.n_turns if n_turns is None else n_turns
    palindromic = p.palindromic if palindromic is None else palindromic
    ranking = [score_pattern(cfg, d, constant_power) for d in enumerate_patterns(candidates, n_turns, palindromic)]
    ranking.sort(key=PatternCandidate.sort_key)
    best = ranking[0]
    if not best.feasible:
        raise ValueError("no feasible pattern in the grid")
    return best, ranking


RANKING_HEADER = ["pattern", "feasible", "score_C"]


def write_ranking_csv(ranking, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RANKING_HEADER)
        for c in ranking:
            w.writerow([c.label, int(c.feasible), repr(c.score) if c.feasible else "inf"])


def read_ranking_csv(path) -> list[PatternCandidate]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != RANKING_HEADER:
            raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
        return [PatternCandidate(tuple(float(x) for x in r["pattern"].split("-")), float(r["score_C"]),
                                 bool(int(r["feasible"]))) for r in rd]
