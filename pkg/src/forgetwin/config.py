"""Run configuration.

A config file is a flat YAML mapping of dotted keys to values, e.g.::

    bar.length: 4.0
    zones.p_max: 0.4e6
    ppo.clip_ratio: 0.02

Keys not given keep their defaults. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .physics import Environment, MaterialParams
from .twin import LineState, NormalMode, TurnPattern, WarmHoldingMode, Zone

PAPER_PATTERN = (64.0, 60.0, 60.0, 64.0, 64.0, 60.0, 60.0, 64.0)


class ConfigError(ValueError):
    pass


@dataclass
class LineSection:
    band_length: float = 30.0
    dt: float = 1.0
    normal_speed: float = 0.04
    hold_speed: float = 0.02
    piece_length: float = 0.5
    ambient_temp: float = 20.0


@dataclass
class BarSection:
    length: float = 4.0
    n_segments: int = 40
    mass: float = 412.0
    diameter: float = 0.1


@dataclass
class MaterialSection:
    specific_heat: float = 650.0
    emissivity: float = 0.15
    curie_temp: float = 800.0
    k_below: float = 0.90
    k_above: float = 0.20
    conv_coeff: float = 1.86
    conv_exponent: float = 1.3


@dataclass
class ZonesSection:
    starts: list = field(default_factory=lambda: [15.0, 19.0, 23.0, 25.0, 27.0])
    ends: list = field(default_factory=lambda: [19.0, 23.0, 25.0, 27.0, 29.0])
    fixed_powers: list = field(default_factory=lambda: [2.0e6, 4.2e6])
    p_max: float = 0.4e6


@dataclass
class TempsSection:
    max_temp: float = 1100.0
    required_low: float = 1010.0
    required_high: float = 1090.0
    desired_low: float = 1060.0
    desired_high: float = 1080.0


@dataclass
class HoldSection:
    duration: float = 540.0
    pattern: list = field(default_factory=lambda: list(PAPER_PATTERN))
    head_pos: float = 29.5
    init_mean: float = 1050.0
    init_std: float = 15.0
    init_low: float = 950.0
    init_high: float = 1090.0


@dataclass
class NormalSection:
    entry_head_pos: float = 0.0
    profile: str = "ambient"  # or "preheated"
    preheat_low: float = 20.0
    preheat_high: float = 80.0


@dataclass
class RewardSection:
    target: float = 1070.0
    even_clip_low: float = -2.0
    even_clip_high: float = 1.0
    move_scale: float = 3.0
    heat_penalty: float = -5.0
    heat_threshold: float = 1090.0
    mask_enabled: bool = True
    mask_margin: float = 10.0
    horizon_steps: int = 1200


@dataclass
class PpoSection:
    clip_ratio: float = 0.02
    lr_pi: float = 1e-4
    lr_v: float = 1e-3
    gamma: float = 0.99
    lam: float = 0.97
    steps_per_epoch: int = 4000
    epochs: int = 50
    train_pi_iters: int = 80
    train_v_iters: int = 80
    target_kl: float = 0.01
    hidden: list = field(default_factory=lambda: [64, 64])
    init_log_std: float = math.log(0.5)


@dataclass
class PatternsSection:
    candidates: list = field(default_factory=lambda: [56.0, 60.0, 64.0, 68.0])
    n_turns: int = 8
    palindromic: bool = True
    constant_power: float = 0.2e6


@dataclass
class RunConfig:
    line: LineSection = field(default_factory=LineSection)
    bar: BarSection = field(default_factory=BarSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    zones: ZonesSection = field(default_factory=ZonesSection)
    temps: TempsSection = field(default_factory=TempsSection)
    hold: HoldSection = field(default_factory=HoldSection)
    normal: NormalSection = field(default_factory=NormalSection)
    reward: RewardSection = field(default_factory=RewardSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    patterns: PatternsSection = field(default_factory=PatternsSection)
    seed: int = 1
    out_dir: str = "runs"

    # -- derived objects -----------------------------------------------------
    def material_params(self) -> MaterialParams:
        m = self.material
        return MaterialParams(
            specific_heat=m.specific_heat, emissivity=m.emissivity, curie_temp=m.curie_temp,
            k_below=m.k_below, k_above=m.k_above, bar_mass=self.bar.mass, bar_diameter=self.bar.diameter,
        )

    def environment(self) -> Environment:
        return Environment(ambient_temp=self.line.ambient_temp, conv_coeff=self.material.conv_coeff,
                           conv_exponent=self.material.conv_exponent)

    def n_fixed_zones(self) -> int:
        return len(self.zones.fixed_powers)

    def build_zones(self) -> list[Zone]:
        z = self.zones
        nf = self.n_fixed_zones()
        out = []
        for i, (s, e) in enumerate(zip(z.starts, z.ends)):
            if i < nf:
                p = float(z.fixed_powers[i])
                out.append(Zone(index=i + 1, start=float(s), end=float(e), p_max=p, power=p, learnable=False))
            else:
                out.append(Zone(index=i + 1, start=float(s), end=float(e), p_max=float(z.p_max)))
        return out

    def turn_pattern(self) -> TurnPattern:
        return TurnPattern(tuple(self.hold.pattern))

    def hold_mode(self, start_time: float = 0.0, pattern: TurnPattern | None = None) -> WarmHoldingMode:
        return WarmHoldingMode(speed=self.line.hold_speed, pattern=pattern or self.turn_pattern(),
                               hold_duration=self.hold.duration, resume_speed=self.line.normal_speed,
                               start_time=start_time)

    def new_line(self, mode=None) -> LineState:
        return LineState(
            zones=self.build_zones(), band_length=self.line.band_length, dt=self.line.dt,
            material=self.material_params(), environment=self.environment(),
            mode=mode or NormalMode(self.line.normal_speed), piece_length=self.line.piece_length,
        )

    @property
    def pieces_per_bar(self) -> int:
        return int(round(self.bar.length / self.line.piece_length))

    def validate(self) -> "RunConfig":
        errs = []

        def need(cond, key, msg):
            if not cond:
                errs.append(f"{key}: {msg}")

        L, b, t, r, p = self.line, self.bar, self.temps, self.reward, self.ppo
        for key in ("band_length", "dt", "normal_speed", "hold_speed", "piece_length"):
            need(getattr(L, key) > 0, f"line.{key}", "must be positive")
        need(b.length > 0, "bar.length", "must be positive")
        need(b.n_segments >= 1, "bar.n_segments", "must be >= 1")
        need(b.mass > 0, "bar.mass", "must be positive")
        need(b.diameter > 0, "bar.diameter", "must be positive")
        if b.length > 0 and b.n_segments >= 1 and L.piece_length > 0:
            ratio = L.piece_length / (b.length / b.n_segments)
            need(abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1, "line.piece_length",
                 "must be a whole number of segments")
        need(self.material.specific_heat > 0, "material.specific_heat", "must be positive")
        need(0 <= self.material.emissivity <= 1, "material.emissivity", "must lie in [0, 1]")
        need(0 < self.material.k_above <= self.material.k_below <= 1, "material.k_above",
             "need 0 < k_above <= k_below <= 1")
        z = self.zones
        need(len(z.starts) == len(z.ends), "zones.ends", "must match zones.starts in length")
        need(len(z.fixed_powers) < len(z.starts), "zones.fixed_powers", "at least one zone must be learnable")
        need(z.p_max > 0, "zones.p_max", "must be positive")
        need(all(p >= 0 for p in z.fixed_powers), "zones.fixed_powers", "must be non-negative")
        prev = 0.0
        for i, (s, e) in enumerate(zip(z.starts, z.ends)):
            need(0 <= s < e <= L.band_length, "zones.starts", f"zone {i + 1} range [{s}, {e}) invalid")
            need(s >= prev - 1e-9, "zones.starts", f"zone {i + 1} overlaps or is out of order")
            prev = e
        need(t.required_low < t.required_high, "temps.required_low", "required band is inverted")
        need(t.desired_low < t.desired_high, "temps.desired_low", "desired band is inverted")
        need(t.required_low <= t.desired_low and t.desired_high <= t.required_high, "temps.desired_low",
             "desired band must lie inside the required band")
        need(t.required_high <= t.max_temp, "temps.required_high", "must not exceed temps.max_temp")
        need(r.even_clip_low < r.even_clip_high, "reward.even_clip_low", "must be below even_clip_high")
        need(r.heat_threshold <= t.max_temp, "reward.heat_threshold", "must not exceed temps.max_temp")
        need(r.mask_margin >= 0, "reward.mask_margin", "must be non-negative")
        need(r.horizon_steps >= 1, "reward.horizon_steps", "must be >= 1")
        need(self.hold.duration >= 0, "hold.duration", "must be non-negative")
        need(len(self.hold.pattern) > 0 and all(d > 0 for d in self.hold.pattern), "hold.pattern",
             "needs positive durations")
        need(b.length < self.hold.head_pos < L.band_length, "hold.head_pos", "must lie in (bar.length, band_length)")
        need(self.hold.init_low < self.hold.init_high, "hold.init_low", "must be below hold.init_high")
        need(self.normal.profile in ("ambient", "preheated"), "normal.profile", "must be ambient or preheated")
        need(0 < p.clip_ratio < 1, "ppo.clip_ratio", "must lie in (0, 1)")
        need(0 < p.gamma <= 1, "ppo.gamma", "must lie in (0, 1]")
        need(0 <= p.lam <= 1, "ppo.lam", "must lie in [0, 1]")
        need(p.steps_per_epoch >= 1 and p.epochs >= 0, "ppo.steps_per_epoch", "must be >= 1")
        need(p.lr_pi > 0 and p.lr_v > 0, "ppo.lr_pi", "learning rates must be positive")
        need(len(self.patterns.candidates) > 0, "patterns.candidates", "must be non-empty")
        need(self.patterns.n_turns >= 1, "patterns.n_turns", "must be >= 1")
        if errs:
            raise ConfigError("invalid config: " + "; ".join(errs))
        return self


def flatten(cfg: RunConfig) -> dict[str, Any]:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            for g in fields(v):
                out[f"{f.name}.{g.name}"] = getattr(v, g.name)
        else:
            out[f.name] = v
    return out


def _coerce(key: str, current: Any, value: Any) -> Any:
    if isinstance(current, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(value, str) and not isinstance(current, str):
        value = yaml.safe_load(value)
    try:
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{key}: expected an integer, got {value!r}")
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{key}: expected a list, got {value!r}")
            return list(value)
        if isinstance(current, str):
            return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot use {value!r} ({exc})") from None
    return value


def apply_overrides(cfg: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    known = flatten(cfg)
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        new = _coerce(key, known[key], value)
        if "." in key:
            section, name = key.split(".", 1)
            setattr(getattr(cfg, section), name, new)
        else:
            setattr(cfg, key, new)
    return cfg


def load_config(path=None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    cfg = RunConfig()
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping of dotted keys")
        apply_overrides(cfg, data)
    if overrides:
        apply_overrides(cfg, overrides)
    return cfg.validate()


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(flatten(cfg), sort_keys=True))
