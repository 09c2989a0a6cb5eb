"""Discrete-event model of the induction heating line.

The line is a band of rollers with heating zones laid along it. Bars move
forward at constant speed (normal production) or oscillate in place
(warm holding). Each simulator step moves the bars, heats the segments that
sit under powered zones, and shears fixed-length pieces off any bar that
sticks out past the end of the band.

All operations mutate the :class:`LineState` they are given and return it,
so calls can be chained. Use :func:`copy.deepcopy` to branch a state.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._accel import HAS_NUMBA, njit
from .physics import Environment, MaterialParams, segment_mass, step_temperatures

POS_TOL = 1e-9


class MovementError(ValueError):
    """A warm-holding pattern would push a bar off the start of the band."""


class EmptyLineError(RuntimeError):
    """No bar is on the line."""


@dataclass
class Zone:
    index: int
    start: float
    end: float
    p_max: float
    power: float = 0.0
    learnable: bool = True

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class TurnPattern:
    """Alternating turn durations; the first turn moves backward."""

    turn_durations: tuple[float, ...]
    cyclic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "turn_durations", tuple(float(d) for d in self.turn_durations))
        if not self.turn_durations or any(d <= 0 for d in self.turn_durations):
            raise ValueError("turn pattern needs at least one positive duration")

    @property
    def period(self) -> float:
        return sum(self.turn_durations)

    def direction(self, elapsed: float) -> int:
        """-1 backward, +1 forward, 0 once a non-cyclic pattern is exhausted."""
        if self.cyclic:
            elapsed = math.fmod(elapsed, self.period)
        acc = 0.0
        for i, d in enumerate(self.turn_durations):
            acc += d
            if elapsed < acc:
                return -1 if i % 2 == 0 else 1
        return 0

    def signed_time(self, t0: float, t1: float) -> float:
        """Integral of the direction over ``[t0, t1]`` (seconds, signed)."""
        if t1 <= t0:
            return 0.0
        total = 0.0
        if self.cyclic:
            period = self.period
            base = math.floor(t0 / period) * period
        else:
            base = 0.0
        start = base
        for i in itertools.count():
            d = self.turn_durations[i % len(self.turn_durations)]
            if not self.cyclic and i >= len(self.turn_durations):
                break
            end = start + d
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                total += (hi - lo) * (-1.0 if i % 2 == 0 else 1.0)
            if end >= t1:
                break
            start = end
        return total


@dataclass(frozen=True)
class NormalMode:
    speed: float = 0.04

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("speed must be positive")


@dataclass(frozen=True)
class WarmHoldingMode:
    speed: float = 0.02
    pattern: TurnPattern = TurnPattern((64, 60, 60, 64, 64, 60, 60, 64))
    hold_duration: float = 540.0
    resume_speed: float = 0.04
    start_time: float = 0.0

    def __post_init__(self):
        if self.speed <= 0 or self.resume_speed <= 0:
            raise ValueError("speeds must be positive")
        if self.hold_duration < 0:
            raise ValueError("hold_duration must be non-negative")

    def displacement(self, t0: float, t1: float) -> float:
        """Distance moved between absolute times ``t0`` and ``t1``."""
        e0, e1 = t0 - self.start_time, t1 - self.start_time
        hold_end = self.hold_duration
        dx = self.speed * self.pattern.signed_time(min(e0, hold_end), min(e1, hold_end))
        dx += self.resume_speed * max(0.0, e1 - max(e0, hold_end))
        return dx


@dataclass
class Piece:
    piece_index: int
    exit_time: float
    temps: np.ndarray
    bar_id: int = 0

    @property
    def length_segments(self) -> int:
        return len(self.temps)


@dataclass
class SteelBar:
    """A bar split into ``n_segments`` equal segments, index 0 at the head.

    Sheared segments stay in ``temps`` (frozen at their exit temperature);
    ``n_removed`` counts them. ``head_pos`` always refers to the leading end
    of the material still on the line.
    """

    id: int
    length: float
    n_segments: int
    temps: np.ndarray
    head_pos: float
    history: list = field(default_factory=list)
    n_removed: int = 0

    def __post_init__(self):
        self.temps = np.array(self.temps, dtype=np.float64)
        if self.n_segments < 1 or self.temps.shape != (self.n_segments,):
            raise ValueError("temps must hold one value per segment")

    @property
    def segment_length(self) -> float:
        return self.length / self.n_segments

    @property
    def remaining_length(self) -> float:
        return (self.n_segments - self.n_removed) * self.segment_length

    @property
    def tail_pos(self) -> float:
        return self.head_pos - self.remaining_length

    @property
    def active_temps(self) -> np.ndarray:
        return self.temps[self.n_removed:]

    @property
    def consumed(self) -> bool:
        return self.n_removed >= self.n_segments

    def segment_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) position of every segment still on the line."""
        j = np.arange(self.n_segments - self.n_removed, dtype=np.float64)
        upper = self.head_pos - j * self.segment_length
        return upper - self.segment_length, upper

    def snapshot(self, time: float) -> None:
        self.history.append((time, self.head_pos, self.temps.copy()))


@dataclass
class RawObservation:
    """What a plant controller could actually measure for the lead bar."""

    temps: np.ndarray
    head_pos: float
    tail_pos: float
    time: float
    step_index: int
    segment_length: float
    n_removed: int

    def segment_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        n_active = len(self.temps) - self.n_removed
        upper = self.head_pos - np.arange(n_active) * self.segment_length
        return upper - self.segment_length, upper


@dataclass
class LineState:
    zones: list[Zone]
    band_length: float
    dt: float
    material: MaterialParams
    environment: Environment
    mode: NormalMode | WarmHoldingMode = field(default_factory=NormalMode)
    piece_length: float = 0.5
    bars: list[SteelBar] = field(default_factory=list)
    time: float = 0.0
    step_index: int = 0
    sheared_pieces: list[Piece] = field(default_factory=list)
    retired_bars: list[SteelBar] = field(default_factory=list)

    def __post_init__(self):
        if self.dt <= 0 or self.band_length <= 0 or self.piece_length <= 0:
            raise ValueError("dt, band_length and piece_length must be positive")
        self.zones = sorted(self.zones, key=lambda z: z.start)
        prev_end = 0.0
        for z in self.zones:
            if not (0.0 <= z.start < z.end <= self.band_length):
                raise ValueError(f"zone {z.index} range [{z.start}, {z.end}) outside the band")
            if z.start < prev_end - POS_TOL:
                raise ValueError(f"zone {z.index} overlaps its predecessor")
            if not (0.0 <= z.power <= z.p_max):
                raise ValueError(f"zone {z.index} power outside [0, p_max]")
            prev_end = z.end
        self._z_start = np.array([z.start for z in self.zones], dtype=np.float64)
        self._z_end = np.array([z.end for z in self.zones], dtype=np.float64)

    def add_bar(self, bar: SteelBar) -> SteelBar:
        """Place a bar on the line, keeping bars ordered head-first."""
        for other in self.bars:
            if bar.tail_pos < other.head_pos - POS_TOL and other.tail_pos < bar.head_pos - POS_TOL:
                raise ValueError(f"bar {bar.id} overlaps bar {other.id}")
        seg_len = bar.segment_length
        if seg_len <= 0 or abs(self.piece_length / seg_len - round(self.piece_length / seg_len)) > 1e-9:
            raise ValueError("piece_length must be a whole number of segments")
        self.bars.append(bar)
        self.bars.sort(key=lambda b: -b.head_pos)
        if not bar.history:
            bar.snapshot(self.time)
        return bar

    def zone_powers(self) -> np.ndarray:
        return np.array([z.power for z in self.zones], dtype=np.float64)


def new_bar(bar_id: int, length: float, n_segments: int, head_pos: float, temps) -> SteelBar:
    temps = np.broadcast_to(np.asarray(temps, dtype=np.float64), (n_segments,)).copy()
    return SteelBar(id=bar_id, length=length, n_segments=n_segments, temps=temps, head_pos=head_pos)


# --- zone share kernel -------------------------------------------------------

def _zone_shares_numpy(lo, hi, z_start, z_end, z_power):
    ov = np.minimum(hi[:, None], z_end[None, :]) - np.maximum(lo[:, None], z_start[None, :])
    ov = np.maximum(ov, 0.0)
    return ov @ (z_power / (z_end - z_start))


@njit(cache=True)
def _zone_shares_loop(lo, hi, z_start, z_end, z_power):
    n = lo.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for z in range(z_start.shape[0]):
            a = lo[i] if lo[i] > z_start[z] else z_start[z]
            b = hi[i] if hi[i] < z_end[z] else z_end[z]
            if b > a:
                acc += z_power[z] * (b - a) / (z_end[z] - z_start[z])
        out[i] = acc
    return out


_shares_kernel = _zone_shares_loop if HAS_NUMBA else _zone_shares_numpy


def segment_shares(lo: np.ndarray, hi: np.ndarray, zones: Sequence[Zone], powers=None) -> np.ndarray:
    """Coil power (W) received by each segment: zone power times covered fraction."""
    z_start = np.array([z.start for z in zones], dtype=np.float64)
    z_end = np.array([z.end for z in zones], dtype=np.float64)
    if powers is None:
        powers = [z.power for z in zones]
    return _shares_kernel(np.ascontiguousarray(lo, dtype=np.float64), np.ascontiguousarray(hi, dtype=np.float64),
                          z_start, z_end, np.asarray(powers, dtype=np.float64))


# --- step components ----------------------------------------------------------

def set_zone_powers(state: LineState, zone_powers: Sequence[float]) -> LineState:
    if len(zone_powers) != len(state.zones):
        raise ValueError(f"expected {len(state.zones)} zone powers, got {len(zone_powers)}")
    for z, p in zip(state.zones, zone_powers):
        p = float(p)
        if not math.isfinite(p) or p < 0.0 or p > z.p_max:
            raise ValueError(f"zone {z.index} power {p} outside [0, {z.p_max}]")
        if not z.learnable and p != z.power:
            raise ValueError(f"zone {z.index} has a fixed power of {z.power}")
    for z, p in zip(state.zones, zone_powers):
        z.power = float(p)
    return state


def advance_movement(state: LineState) -> LineState:
    mode = state.mode
    t0, t1 = state.time, state.time + state.dt
    if isinstance(mode, NormalMode):
        dx = mode.speed * state.dt
    else:
        dx = mode.displacement(t0, t1)
    if dx < 0:
        for bar in state.bars:
            if bar.tail_pos + dx < -POS_TOL:
                raise MovementError(
                    f"backward move of {-dx:.3f} m at t={t0:g}s pushes bar {bar.id} tail below 0"
                )
    for bar in state.bars:
        bar.head_pos += dx
    if isinstance(mode, WarmHoldingMode) and t1 - mode.start_time >= mode.hold_duration - POS_TOL:
        state.mode = NormalMode(mode.resume_speed)
    return state


def apply_heating(state: LineState) -> LineState:
    mat, env = state.material, state.environment
    powers = state.zone_powers()
    for bar in state.bars:
        lo, hi = bar.segment_bounds()
        shares = _shares_kernel(lo, hi, state._z_start, state._z_end, powers)
        m_seg = segment_mass(mat, bar.segment_length, bar.length)
        bar.temps[bar.n_removed:] = step_temperatures(
            bar.active_temps, shares, bar.segment_length, m_seg, mat, env, state.dt
        )
    return state


def shear_and_remove(state: LineState, piece_length: float | None = None, at_time: float | None = None) -> LineState:
    """Cut pieces off bars protruding at least ``piece_length`` past the band end."""
    piece_length = state.piece_length if piece_length is None else piece_length
    if piece_length <= 0:
        raise ValueError("piece_length must be positive")
    at_time = state.time if at_time is None else at_time
    kept = []
    for bar in state.bars:
        per_piece = int(round(piece_length / bar.segment_length))
        while not bar.consumed and bar.head_pos - state.band_length >= piece_length - POS_TOL:
            k = min(per_piece, bar.n_segments - bar.n_removed)
            temps = bar.temps[bar.n_removed:bar.n_removed + k].copy()
            state.sheared_pieces.append(
                Piece(piece_index=len(state.sheared_pieces), exit_time=at_time, temps=temps, bar_id=bar.id)
            )
            bar.n_removed += k
            bar.head_pos -= k * bar.segment_length
        if bar.consumed:
            state.retired_bars.append(bar)
        else:
            kept.append(bar)
    state.bars = kept
    return state


def step(state: LineState, zone_powers: Sequence[float] | None = None) -> LineState:
    """One simulator tick: set powers, move, heat, shear, advance the clock."""
    if zone_powers is not None:
        set_zone_powers(state, zone_powers)
    advance_movement(state)
    apply_heating(state)
    t_next = (state.step_index + 1) * state.dt
    live = list(state.bars)
    shear_and_remove(state, at_time=t_next)
    state.step_index += 1
    state.time = t_next
    for bar in live:
        bar.snapshot(state.time)
    return state


def lead_bar(state: LineState) -> SteelBar:
    if not state.bars:
        raise EmptyLineError("no bar on the line")
    return state.bars[0]


def observe(state: LineState) -> RawObservation:
    bar = lead_bar(state)
    temps = bar.temps.copy()
    temps.flags.writeable = False
    return RawObservation(
        temps=temps,
        head_pos=bar.head_pos,
        tail_pos=bar.tail_pos,
        time=state.time,
        step_index=state.step_index,
        segment_length=bar.segment_length,
        n_removed=bar.n_removed,
    )


def write_trajectory_csv(bar: SteelBar, path) -> None:
    """Bar history as ``time_s, head_pos_m, T_0 ... T_{n-1}``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "head_pos_m"] + [f"T_{i}" for i in range(bar.n_segments)])
        for t, head, temps in bar.history:
            w.writerow([repr(float(t)), repr(float(head))] + [repr(float(x)) for x in temps])


def read_trajectory_csv(path) -> list[tuple[float, float, np.ndarray]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:2] != ["time_s", "head_pos_m"]:
            raise ValueError(f"{path}: not a trajectory file")
        return [(float(row[0]), float(row[1]), np.array([float(x) for x in row[2:]])) for row in r]
