import json
import os
import subprocess
import sys

import numpy as np
import pytest

from forgetwin import twin
from forgetwin.config import RunConfig
from forgetwin.twin import NormalMode, TurnPattern, WarmHoldingMode, Zone


@pytest.fixture
def cfg():
    return RunConfig()


def fresh_line(cfg, head=0.0, temps=20.0, mode=None):
    state = cfg.new_line(mode)
    state.add_bar(twin.new_bar(0, cfg.bar.length, cfg.bar.n_segments, head, temps))
    return state


def test_normal_move_per_step(cfg):
    state = fresh_line(cfg)
    twin.advance_movement(state)
    assert state.bars[0].head_pos == pytest.approx(0.04)


def test_turn_pattern_flip_at_64s():
    p = TurnPattern((64, 60))
    assert p.direction(63.0) == -1
    assert p.direction(64.0) == 1
    mode = WarmHoldingMode(speed=0.02, pattern=p, hold_duration=540)
    assert mode.displacement(63, 64) == pytest.approx(-0.02)
    assert mode.displacement(64, 65) == pytest.approx(0.02)
    # a step straddling the flip nets out
    assert mode.displacement(63.5, 64.5) == pytest.approx(0.0, abs=1e-15)


def test_symmetric_pattern_nets_zero():
    mode = WarmHoldingMode(pattern=TurnPattern((64, 60, 60, 64, 64, 60, 60, 64)))
    assert mode.displacement(0, 496) == pytest.approx(0.0, abs=1e-12)
    # stationary after the pattern until the hold ends, then resumes
    assert mode.displacement(496, 540) == 0.0
    assert mode.displacement(540, 541) == pytest.approx(0.04)


def test_hold_switches_to_normal(cfg):
    state = fresh_line(cfg, head=cfg.hold.head_pos, temps=1050.0, mode=cfg.hold_mode())
    heads = []
    for _ in range(545):
        twin.step(state)
        heads.append(state.bars[0].head_pos)
    assert isinstance(state.mode, NormalMode)
    assert heads[495] == pytest.approx(cfg.hold.head_pos, abs=1e-9)
    assert heads[544] - heads[539] == pytest.approx(5 * 0.04)


def test_backward_past_entry_raises(cfg):
    state = fresh_line(cfg, head=4.5, mode=cfg.hold_mode())
    with pytest.raises(twin.MovementError):
        for _ in range(64):
            twin.step(state)


def test_uniform_share_and_half_overlap():
    zones = [Zone(0, 0.0, 4.0, 4e5, power=4e5)]
    lo = np.arange(40) * 0.1
    shares = twin.segment_shares(lo, lo + 0.1, zones)
    np.testing.assert_allclose(shares, 1e4)
    # segment [3.95, 4.05] sits half inside the zone
    half = twin.segment_shares(np.array([3.95]), np.array([4.05]), zones)
    assert half[0] == pytest.approx(0.5 * 1e4, rel=1e-12)
    assert twin.segment_shares(np.array([5.0]), np.array([5.1]), zones)[0] == 0.0


def test_share_kernels_agree():
    rng = np.random.default_rng(0)
    lo = np.sort(rng.uniform(10, 30, 200))
    hi = lo + 0.1
    zs, ze = np.array([15.0, 19, 23, 25, 27]), np.array([19.0, 23, 25, 27, 29])
    p = rng.uniform(0, 4e6, 5)
    np.testing.assert_allclose(twin._zone_shares_numpy(lo, hi, zs, ze, p), twin._zone_shares_loop(lo, hi, zs, ze, p),
                               rtol=1e-12)


def test_bar_exits_after_850_steps(cfg):
    state = fresh_line(cfg)
    for i in range(849):
        twin.step(state)
        assert state.bars, f"bar left early at step {i + 1}"
    twin.step(state)
    assert not state.bars
    assert len(state.sheared_pieces) == 8
    assert state.time == 850.0


def test_no_piece_at_band_end(cfg):
    state = fresh_line(cfg, head=cfg.line.band_length)
    twin.shear_and_remove(state)
    assert not state.sheared_pieces


def test_piece_temps_match_bar(cfg):
    temps = np.linspace(900, 1100, 40)
    state = fresh_line(cfg, head=30.55, temps=temps)
    twin.shear_and_remove(state)
    assert len(state.sheared_pieces) == 1
    np.testing.assert_array_equal(state.sheared_pieces[0].temps, temps[:5])
    assert state.bars[0].n_removed == 5
    assert state.bars[0].head_pos == pytest.approx(30.05)


def test_empty_line_step(cfg):
    state = cfg.new_line()
    twin.step(state)
    assert state.time == 1.0 and not state.bars and not state.sheared_pieces
    with pytest.raises(twin.EmptyLineError):
        twin.observe(state)


def test_step_is_composition(cfg):
    a, b = fresh_line(cfg, head=20.0, temps=700.0), fresh_line(cfg, head=20.0, temps=700.0)
    powers = [z.power for z in a.zones]
    powers[2:] = [1e5, 2e5, 3e5]
    twin.step(a, powers)
    twin.set_zone_powers(b, powers)
    twin.advance_movement(b)
    twin.apply_heating(b)
    twin.shear_and_remove(b)
    np.testing.assert_array_equal(a.bars[0].temps, b.bars[0].temps)
    assert a.bars[0].head_pos == b.bars[0].head_pos


def test_set_powers_validation(cfg):
    state = cfg.new_line()
    ok = [z.power for z in state.zones]
    bad = list(ok)
    bad[-1] = 1e9
    with pytest.raises(ValueError):
        twin.set_zone_powers(state, bad)
    bad = list(ok)
    bad[0] = 0.0
    with pytest.raises(ValueError):
        twin.set_zone_powers(state, bad)
    with pytest.raises(ValueError):
        twin.set_zone_powers(state, ok[:2])


def test_observe(cfg):
    state = fresh_line(cfg, head=10.0, temps=300.0)
    o1, o2 = twin.observe(state), twin.observe(state)
    assert len(o1.temps) == cfg.bar.n_segments
    assert o1.tail_pos == pytest.approx(o1.head_pos - cfg.bar.length)
    np.testing.assert_array_equal(o1.temps, o2.temps)
    with pytest.raises(ValueError):
        o1.temps[0] = 0.0


def test_deterministic_trajectories(cfg):
    def run():
        state = fresh_line(cfg, temps=np.linspace(20, 200, 40))
        rng = np.random.default_rng(7)
        for _ in range(600):
            p = [z.power for z in state.zones]
            p[2:] = rng.uniform(0, 4e5, 3)
            twin.step(state, p)
        return state.bars[0].temps.copy(), [h for _, h, _ in state.bars[0].history]

    (t1, h1), (t2, h2) = run(), run()
    np.testing.assert_array_equal(t1, t2)
    assert h1 == h2


def test_trajectory_csv_roundtrip(cfg, tmp_path):
    state = fresh_line(cfg, head=14.0, temps=500.0)
    for _ in range(20):
        twin.step(state)
    bar = state.bars[0]
    path = tmp_path / "trajectory.csv"
    twin.write_trajectory_csv(bar, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:3] == ["time_s", "head_pos_m", "T_0"] and len(header) == 2 + cfg.bar.n_segments
    rows = twin.read_trajectory_csv(path)
    assert len(rows) == len(bar.history)
    for (t, h, temps), (t2, h2, temps2) in zip(rows, bar.history):
        assert (t, h) == (t2, h2)
        np.testing.assert_array_equal(temps, temps2)


def test_numpy_fallback_matches_jit():
    code = ("import json; from forgetwin import twin; from forgetwin._accel import HAS_NUMBA; "
            "from forgetwin.config import RunConfig; cfg = RunConfig(); s = cfg.new_line(); "
            "b = s.add_bar(twin.new_bar(0, 4.0, 40, 0.0, 20.0)); [twin.step(s) for _ in range(700)]; "
            "print(json.dumps([HAS_NUMBA, b.temps.tolist()]))")
    runs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, FORGETWIN_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        runs[flag] = json.loads(out.stdout)
    assert runs["1"][0] is False
    np.testing.assert_allclose(runs["0"][1], runs["1"][1], rtol=1e-10)
