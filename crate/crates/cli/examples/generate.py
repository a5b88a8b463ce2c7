#!/usr/bin/env python3
"""Regenerate the bundled run configurations and the 36-point truth file.

Each tag path is a closed loop through 36 turning points, walked at constant
speed and repeated until the run is long enough for >= 10^4 fixes at 10 fixes/s.
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
WIDTH, HEIGHT = 1.2192, 0.6096
SPEED = 0.05
MIN_DURATION = 1050.0


def turning_points(seed, x_lo, x_hi, y_lo, y_hi, n=36):
    rng = random.Random(seed)
    cx, cy = (x_lo + x_hi) / 2, (y_lo + y_hi) / 2
    pts = []
    for k in range(n):
        # jittered ellipse so the loop never crosses itself badly
        a = 2 * math.pi * k / n
        r = rng.uniform(0.55, 1.0)
        pts.append((round(cx + r * (x_hi - x_lo) / 2 * math.cos(a), 4),
                    round(cy + r * (y_hi - y_lo) / 2 * math.sin(a), 4)))
    return pts


def loop_waypoints(pts):
    t, out = 0.0, []
    cycle = pts + [pts[0]]
    while True:
        for i, (x, y) in enumerate(cycle):
            if out and i == 0:
                continue
            if out:
                px, py = out[-1]["x"], out[-1]["y"]
                t += math.hypot(x - px, y - py) / SPEED
            out.append({"t": round(t, 6), "x": x, "y": y})
        if t >= MIN_DURATION:
            return out


def config(pts, obstacles, rate, per_fix, clock, seed):
    return {
        "arena": {
            "width_m": WIDTH,
            "height_m": HEIGHT,
            "anchors": [
                {"x": 0.0, "y": 0.0}, {"x": WIDTH, "y": 0.0},
                {"x": WIDTH, "y": HEIGHT}, {"x": 0.0, "y": HEIGHT},
                {"x": WIDTH / 2, "y": 0.0}, {"x": WIDTH, "y": HEIGHT / 2},
                {"x": WIDTH / 2, "y": HEIGHT}, {"x": 0.0, "y": HEIGHT / 2},
            ],
            "obstacles": obstacles,
            "tag_height_m": 0.05,
        },
        "noise": {
            "mode": "position_noise",
            "los_mean_m": 0.162,
            "los_sigma_m": 0.076,
            "nlos_mean_m": 0.356,
            "nlos_sigma_m": 0.270,
        },
        "trajectory": {"waypoints": loop_waypoints(pts), "max_speed_mps": 0.06},
        "superframe": {
            "superframe_s": 0.1,
            "slots_per_superframe": 15,
            "update_rate_hz": rate,
            "ranges_per_fix": per_fix,
        },
        "clock": clock,
        "seed": seed,
    }


def main():
    open_pts = turning_points(36, 0.12, 1.10, 0.08, 0.53)
    left_pts = turning_points(37, 0.06, 0.50, 0.06, 0.55)
    ideal = {"drift_ppm": 0.0, "sync_offset_s": 0.0, "sigma_tof_s": 0.0}
    realistic = {"drift_ppm": 2.0, "sync_offset_s": 20e-12, "sigma_tof_s": 10e-12}
    wall = [{"x_min": 0.58, "y_min": 0.0, "x_max": 0.60, "y_max": HEIGHT}]
    presets = {
        # all eight anchors per fix, open arena
        "paper_figure2.json": config(open_pts, [], 80.0, 8, ideal, 2),
        # three fresh ranges per fix with clock noise
        "los_baseline.json": config(open_pts, [], 30.0, 3, realistic, 1),
        # wall hiding the five right-hand anchors from the left half
        "nlos_wall.json": config(left_pts, wall, 80.0, 8, realistic, 3),
    }
    for name, cfg in presets.items():
        (HERE / name).write_text(json.dumps(cfg, indent=2) + "\n")

    rows = ["t,x_m,y_m,label"]
    for w, k in zip(loop_waypoints(open_pts)[:36], range(1, 37)):
        rows.append(f"{w['t']},{w['x']},{w['y']},turn {k:02d}")
    (HERE / "truth_36.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
