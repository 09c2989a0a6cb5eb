"""MDP view of the heating line for a power-control agent.

Observation: ``[T_1..T_n, head, tail, t]`` scaled by the hard temperature
limit, the band length and the episode horizon. Actions live in ``[-1, 1]``
per learnable zone and are mapped affinely onto ``[0, p_max]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import twin
from .config import RunConfig
from .seeding import substream
from .twin import LineState, Piece, RawObservation, SteelBar

MODES = ("normal", "warm_holding")


class EpisodeDoneError(RuntimeError):
    pass


def normalize_mode(mode: str) -> str:
    m = mode.replace("-", "_").lower()
    if m not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return m


def observe_bar(state: LineState, bar: SteelBar) -> RawObservation:
    """Like :func:`twin.observe` but for a given bar, even after it has left."""
    temps = bar.temps.copy()
    temps.flags.writeable = False
    return RawObservation(temps=temps, head_pos=bar.head_pos, tail_pos=bar.tail_pos, time=state.time,
                          step_index=state.step_index, segment_length=bar.segment_length,
                          n_removed=bar.n_removed)


def encode_state(obs: RawObservation, cfg: RunConfig) -> np.ndarray:
    temps = np.asarray(obs.temps, dtype=np.float64)
    scalars = (obs.head_pos, obs.tail_pos, obs.step_index)
    if not (np.all(np.isfinite(temps)) and all(math.isfinite(s) for s in scalars)):
        raise ValueError("observation contains non-finite values")
    out = np.empty(len(temps) + 3)
    out[:-3] = temps / cfg.temps.max_temp
    out[-3] = obs.head_pos / cfg.line.band_length
    out[-2] = obs.tail_pos / cfg.line.band_length
    out[-1] = obs.step_index / cfg.reward.horizon_steps
    return out


def decode_action(action, p_max) -> np.ndarray:
    a = np.asarray(action, dtype=np.float64)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=np.float64), a.shape)
    return np.clip((a + 1.0) * 0.5 * p_max, 0.0, p_max)


def safety_mask(powers, obs: RawObservation, zones: Sequence[twin.Zone], cfg: RunConfig,
                reach: float = 0.0) -> np.ndarray:
    """Switch off every learnable zone that covers a segment near the hard limit.

    ``powers`` are the learnable-zone powers in zone order. ``reach`` widens
    each zone by the distance the bar can travel before the power is applied,
    so a hot segment about to slide under a zone also trips it.
    """
    out = np.array(powers, dtype=np.float64)
    limit = cfg.temps.max_temp - cfg.reward.mask_margin
    active = np.asarray(obs.temps[obs.n_removed:])
    hot = active >= limit
    if not hot.any():
        return out
    lo, hi = obs.segment_bounds()
    lo, hi = lo[hot], hi[hot]
    learnable = [z for z in zones if z.learnable]
    for j, z in enumerate(learnable):
        if np.any((hi > z.start - reach) & (lo < z.end + reach)):
            out[j] = 0.0
    return out


def reward_terms(obs: RawObservation, cfg: RunConfig) -> dict[str, float]:
    """Evenness, overheat and movement terms plus their sum."""
    r = cfg.reward
    temps = np.asarray(obs.temps)
    mae = float(np.mean(np.abs(temps - r.target)))
    r_even = float(np.clip(-math.log10(max(mae, 0.1)), r.even_clip_low, r.even_clip_high))
    active = temps[obs.n_removed:]
    hottest = float(active.max()) if active.size else float(temps.max())
    r_heat = r.heat_penalty if hottest > r.heat_threshold else 0.0
    r_move = float(np.clip(r.move_scale * max(obs.head_pos, 0.0) / cfg.line.band_length, 0.0, r.move_scale))
    return {"r_total": r_even + r_heat + r_move, "r_even": r_even, "r_heat": r_heat, "r_move": r_move,
            "mae": mae, "max_temp": hottest}


def reward_bounds(cfg: RunConfig) -> tuple[float, float]:
    r = cfg.reward
    return r.even_clip_low + min(r.heat_penalty, 0.0), r.even_clip_high + r.move_scale


def initial_profile(cfg: RunConfig, mode: str, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """(head position, per-segment temperatures) for a fresh episode."""
    n = cfg.bar.n_segments
    if mode == "warm_holding":
        h = cfg.hold
        temps = rng.normal(h.init_mean, h.init_std, n)
        bad = (temps < h.init_low) | (temps > h.init_high)
        while bad.any():
            temps[bad] = rng.normal(h.init_mean, h.init_std, int(bad.sum()))
            bad = (temps < h.init_low) | (temps > h.init_high)
        return h.head_pos, temps
    nm = cfg.normal
    if nm.profile == "preheated":
        return nm.entry_head_pos, rng.uniform(nm.preheat_low, nm.preheat_high, n)
    return nm.entry_head_pos, np.full(n, cfg.line.ambient_temp)


@dataclass
class EpisodeOutcome:
    pieces: list[Piece]
    total_reward: float
    step_count: int
    overheat_flag: bool
    max_temp: float = float("nan")
    steps: list[dict] = field(default_factory=list)


class ForgingEnv:
    """One bar per episode; ``mode`` is ``normal`` or ``warm_holding``."""

    def __init__(self, cfg: RunConfig, mode: str = "normal", record_steps: bool = False):
        self.cfg = cfg
        self.mode = normalize_mode(mode)
        self.record_steps = record_steps
        self.state: LineState | None = None
        self.bar: SteelBar | None = None
        self.done = True
        zones = cfg.build_zones()
        self.learnable_idx = [i for i, z in enumerate(zones) if z.learnable]
        self.fixed_powers = [z.power for z in zones]
        self.p_max = np.array([zones[i].p_max for i in self.learnable_idx])
        self.reach = max(cfg.line.normal_speed, cfg.line.hold_speed) * cfg.line.dt

    @property
    def obs_dim(self) -> int:
        return self.cfg.bar.n_segments + 3

    @property
    def act_dim(self) -> int:
        return len(self.learnable_idx)

    def reset(self, seed: int | None = None, mode: str | None = None) -> np.ndarray:
        if mode is not None:
            self.mode = normalize_mode(mode)
        cfg = self.cfg
        rng = substream(cfg.seed if seed is None else seed, "reset")
        head, temps = initial_profile(cfg, self.mode, rng)
        line_mode = cfg.hold_mode() if self.mode == "warm_holding" else None
        self.state = cfg.new_line(line_mode)
        self.bar = self.state.add_bar(twin.new_bar(0, cfg.bar.length, cfg.bar.n_segments, head, temps))
        self.done = False
        self.total_reward = 0.0
        self.max_temp_seen = float(temps.max())
        self.steps: list[dict] = []
        return encode_state(self.raw_observation(), cfg)

    def raw_observation(self) -> RawObservation:
        return observe_bar(self.state, self.bar)

    def step(self, action):
        if self.done:
            raise EpisodeDoneError("episode finished; call reset()")
        cfg, state = self.cfg, self.state
        obs = self.raw_observation()
        requested = decode_action(action, self.p_max)
        applied = requested
        if cfg.reward.mask_enabled:
            applied = safety_mask(requested, obs, state.zones, cfg, self.reach)
        powers = list(self.fixed_powers)
        for j, i in enumerate(self.learnable_idx):
            powers[i] = float(applied[j])
        n_pieces = len(state.sheared_pieces)
        twin.step(state, powers)
        new_obs = self.raw_observation()
        terms = reward_terms(new_obs, cfg)
        self.max_temp_seen = max(self.max_temp_seen, terms["max_temp"])
        self.total_reward += terms["r_total"]
        exited = self.bar.consumed
        truncated = not exited and state.step_index >= cfg.reward.horizon_steps
        self.done = exited or truncated
        info = dict(terms)
        info.update(requested=requested, applied=applied, pieces=state.sheared_pieces[n_pieces:],
                    temps=new_obs.temps, truncated=truncated, t=state.time)
        if self.record_steps:
            self.steps.append({"t": state.time, **{k: terms[k] for k in ("r_total", "r_even", "r_heat", "r_move")},
                               "powers": applied.copy(), "max_temp": terms["max_temp"]})
        return encode_state(new_obs, cfg), terms["r_total"], self.done, info

    def outcome(self) -> EpisodeOutcome:
        pieces = list(self.state.sheared_pieces)
        return EpisodeOutcome(pieces=pieces, total_reward=self.total_reward, step_count=self.state.step_index,
                              overheat_flag=self.max_temp_seen > self.cfg.temps.max_temp,
                              max_temp=self.max_temp_seen, steps=list(self.steps))


# --- CSV ------------------------------------------------------------------------

def write_steps_csv(outcome: EpisodeOutcome, zone_numbers: Sequence[int], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r_total", "R_even", "R_heat", "R_move"] + [f"P{k}" for k in zone_numbers] + ["max_temp"])
        for s in outcome.steps:
            w.writerow([repr(float(s["t"])), repr(s["r_total"]), repr(s["r_even"]), repr(s["r_heat"]),
                        repr(s["r_move"])] + [repr(float(p)) for p in s["powers"]] + [repr(s["max_temp"])])


PIECES_HEADER = ["episode", "piece_index", "exit_time", "min_temp", "mean_temp", "max_temp"]


def piece_rows(episode: int, pieces: Sequence[Piece]):
    for p in pieces:
        yield [episode, p.piece_index, repr(float(p.exit_time)), repr(float(p.temps.min())),
               repr(float(p.temps.mean())), repr(float(p.temps.max()))]


def write_pieces_csv(outcomes: Sequence[EpisodeOutcome], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PIECES_HEADER)
        for ep, out in enumerate(outcomes):
            w.writerows(piece_rows(ep, out.pieces))


def read_pieces_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != PIECES_HEADER:
            raise ValueError(f"{path}: unexpected header {r.fieldnames}")
        return [{"episode": int(row["episode"]), "piece_index": int(row["piece_index"]),
                 **{k: float(row[k]) for k in PIECES_HEADER[2:]}} for row in r]
