"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``FORGETWIN_NO_NUMBA``.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from forgetwin import twin
from forgetwin._accel import HAS_NUMBA
from forgetwin.config import RunConfig
from forgetwin.physics import step_temperatures
from forgetwin.ppo import compute_gae

repeat = int(sys.argv[1])
cfg = RunConfig()
mat, env = cfg.material_params(), cfg.environment()
rng = np.random.default_rng(0)


def best_of(fn):
    fn()  # warm up (jit compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def heat():
    temps = rng.uniform(20, 1080, 40)
    shares = rng.uniform(0, 5e4, 40)
    for _ in range(2000):
        temps = step_temperatures(temps, shares, 0.1, 10.3, mat, env, 1.0)


def line():
    state = cfg.new_line()
    state.add_bar(twin.new_bar(0, cfg.bar.length, cfg.bar.n_segments, 0.0, 20.0))
    for _ in range(800):
        twin.step(state)


def gae():
    r = rng.standard_normal(4000)
    v = rng.standard_normal(4001)
    d = (rng.random(4000) < 0.01).astype(float)
    for _ in range(50):
        compute_gae(r, v, d, 0.99, 0.97)


out = {"numba": HAS_NUMBA, "heat_2000_steps": best_of(heat), "line_800_steps": best_of(line),
       "gae_50x4000": best_of(gae)}
print(json.dumps(out))
"""


def run(no_numba: bool, repeat: int) -> dict:
    env = dict(os.environ, FORGETWIN_NO_NUMBA="1" if no_numba else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    jit, ref = run(False, args.repeat), run(True, args.repeat)
    print(f"{'kernel':<18}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for k in ("heat_2000_steps", "line_800_steps", "gae_50x4000"):
        print(f"{k:<18}{jit[k]:10.4f}{ref[k]:10.4f}{ref[k] / jit[k]:9.1f}")
    if not jit["numba"]:
        print("note: numba unavailable, both columns ran the numpy path")


if __name__ == "__main__":
    main()
