"""Command line entry points.

    forgetwin train --mode normal --config run.yaml --seed 1 --out runs/n
    forgetwin eval --checkpoint runs/n/final.npz --episodes 1000
    forgetwin pattern-search --config run.yaml
    forgetwin simulate --schedule powers.csv
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import twin
from .config import ConfigError, RunConfig, dump_config, load_config
from .env import ForgingEnv, normalize_mode, write_pieces_csv
from .nn import load_checkpoint
from .patterns import grid_search, write_ranking_csv
from .ppo import PpoConfig, evaluate, train

log = logging.getLogger("forgetwin")


def band_summary(outcomes, cfg: RunConfig) -> dict:
    """Per-piece band fractions (by piece mean temperature) and overheat counts."""
    means = np.array([p.temps.mean() for o in outcomes for p in o.pieces])
    peaks = np.array([p.temps.max() for o in outcomes for p in o.pieces])
    t = cfg.temps
    n = len(means)
    frac = (lambda m: float(np.mean(m)) if n else 0.0)
    return {
        "episodes": len(outcomes),
        "pieces": n,
        "frac_below_required": frac(means < t.required_low),
        "frac_in_required": frac((means >= t.required_low) & (means <= t.required_high)),
        "frac_above_required": frac(means > t.required_high),
        "frac_in_desired": frac((means >= t.desired_low) & (means <= t.desired_high)),
        "overheat_pieces": int(np.sum(peaks > t.max_temp)),
        "overheat_episodes": int(sum(o.overheat_flag for o in outcomes)),
        "max_temp": float(max((o.max_temp for o in outcomes), default=float("nan"))),
        "mean_return": float(np.mean([o.total_reward for o in outcomes])) if outcomes else float("nan"),
    }


def cmd_train(cfg: RunConfig, mode: str, out_dir, progress=None):
    mode = normalize_mode(mode)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    result = train(lambda: ForgingEnv(cfg, mode), PpoConfig.from_run_config(cfg), out,
                   meta={"mode": mode}, progress=progress)
    log.info("wrote %s", out)
    return result


def cmd_eval(cfg: RunConfig, checkpoint, n_episodes: int, out_dir, stochastic: bool = True,
             mode: str | None = None, seed: int | None = None):
    ckpt = Path(checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint {ckpt} not found")
    policy, _, _, _, meta = load_checkpoint(ckpt)
    mode = normalize_mode(mode or meta.get("mode", "normal"))
    outcomes = evaluate(policy, lambda: ForgingEnv(cfg, mode), n_episodes, stochastic,
                        seed=cfg.seed if seed is None else seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pieces_csv(outcomes, out / "pieces.csv")
    summary = {"mode": mode, "stochastic": stochastic, **band_summary(outcomes, cfg)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return outcomes, summary


def cmd_pattern_search(cfg: RunConfig, out_dir):
    best, ranking = grid_search(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ranking_csv(ranking, out / "ranking.csv")
    return best, ranking


def read_schedule(path, n_learnable: int) -> np.ndarray:
    """Per-step learnable-zone powers (W), one row per step, header required."""
    rows = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise ValueError(f"{path}: empty schedule") from None
        if len(header) != n_learnable:
            raise ValueError(f"{path}: expected {n_learnable} power columns, got {len(header)}")
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric power") from None
            if len(vals) != n_learnable:
                raise ValueError(f"{path}:{lineno}: expected {n_learnable} values")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: schedule has no rows")
    return np.array(rows)


def cmd_simulate(cfg: RunConfig, schedule_path, out_dir, mode: str = "normal", init_temp: float | None = None,
                 head_pos: float | None = None):
    """Open-loop run of a power schedule; writes the bar's trajectory."""
    mode = normalize_mode(mode)
    zones = cfg.build_zones()
    learnable = [i for i, z in enumerate(zones) if z.learnable]
    sched = read_schedule(schedule_path, len(learnable))
    state = cfg.new_line(cfg.hold_mode() if mode == "warm_holding" else None)
    if head_pos is None:
        head_pos = cfg.hold.head_pos if mode == "warm_holding" else cfg.normal.entry_head_pos
    if init_temp is None:
        init_temp = cfg.hold.init_mean if mode == "warm_holding" else cfg.line.ambient_temp
    bar = state.add_bar(twin.new_bar(0, cfg.bar.length, cfg.bar.n_segments, head_pos, init_temp))
    powers = [z.power for z in zones]
    for row in sched:
        if bar.consumed:
            break
        for j, i in enumerate(learnable):
            powers[i] = row[j]
        twin.step(state, powers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    twin.write_trajectory_csv(bar, out / "trajectory.csv")
    return state, bar


def run_pipeline(cfg: RunConfig, out_dir, eval_episodes: int = 10):
    """pattern-search -> train both models -> evaluate both, all under ``out_dir``."""
    out = Path(out_dir)
    best, _ = cmd_pattern_search(cfg, out / "patterns")
    cfg.hold.pattern = list(best.turn_durations)
    results = {}
    for mode in ("normal", "warm_holding"):
        res = cmd_train(cfg, mode, out / f"train_{mode}")
        _, summary = cmd_eval(cfg, res.final_checkpoint, eval_episodes, out / f"eval_{mode}", mode=mode)
        results[mode] = summary
    return results


# --- argument parsing -----------------------------------------------------------

def _parse_sets(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config_from_args(args) -> RunConfig:
    overrides = _parse_sets(getattr(args, "set", None))
    flag_map = {"seed": "seed", "p_max": "zones.p_max", "epochs": "ppo.epochs",
                "steps_per_epoch": "ppo.steps_per_epoch"}
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forgetwin", description="Induction heating line twin and PPO power control")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, default=None, help="flat dotted-key YAML file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        sp.add_argument("--p-max", type=float, default=None, help="power limit of learnable zones (W)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("train", help="train a power-control policy")
    common(sp)
    sp.add_argument("--mode", choices=["normal", "warm-holding"], default="normal")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--steps-per-epoch", type=int, default=None)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--episodes", type=int, default=1000)
    sp.add_argument("--deterministic", action="store_true", help="use the mean action")
    sp.add_argument("--mode", choices=["normal", "warm-holding"], default=None)

    sp = sub.add_parser("pattern-search", help="grid search warm-holding turn patterns")
    common(sp)

    sp = sub.add_parser("simulate", help="open-loop run of a power schedule")
    common(sp)
    sp.add_argument("--schedule", type=Path, required=True, help="CSV, one column per learnable zone (W)")
    sp.add_argument("--mode", choices=["normal", "warm-holding"], default="normal")
    sp.add_argument("--init-temp", type=float, default=None)
    sp.add_argument("--head-pos", type=float, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _config_from_args(args)
        out = args.out or Path(cfg.out_dir)
        if args.command == "train":
            res = cmd_train(cfg, args.mode, out,
                            progress=lambda r: print(f"epoch {r['epoch']:4d}  return {r['mean_return']:9.2f}  "
                                                     f"trailing100 {r['trailing100_return']:9.2f}", flush=True))
            print(f"checkpoints: {res.final_checkpoint}, {res.best_checkpoint}")
        elif args.command == "eval":
            _, summary = cmd_eval(cfg, args.checkpoint, args.episodes, out, stochastic=not args.deterministic,
                                  mode=args.mode)
            print(json.dumps(summary, indent=2, sort_keys=True))
        elif args.command == "pattern-search":
            best, ranking = cmd_pattern_search(cfg, out)
            print(f"best pattern {best.label}  score {best.score:.3f} C  ({len(ranking)} candidates)")
        elif args.command == "simulate":
            _, bar = cmd_simulate(cfg, args.schedule, out, args.mode, args.init_temp, args.head_pos)
            print(f"wrote {out / 'trajectory.csv'} ({len(bar.history)} snapshots)")
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"forgetwin: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
