"""Regenerate the golden world files under fixtures/worlds/.

Each entry of index.json names a world file, the parameters it was generated
with, and one reference frame rendered from a fixed pose, so the tests can
detect any drift in generation or sensing.
"""
import argparse
import dataclasses
import json
from pathlib import Path

import numpy as np

from planarnav.geometry import Pose
from planarnav.worldsim import (SensorConfig, WorldParams, frame_to_dict, generate_world,
                                inflate, render_frame, save_world)

CASES = [
    ("default_s7", 7, WorldParams()),
    ("dense_s3", 3, WorldParams(density=0.2, n_landmarks=24)),
    ("empty_s0", 0, WorldParams(nx=12, ny=12, density=0.0, n_landmarks=8)),
    ("small_s42", 42, WorldParams(nx=16, ny=24, resolution=0.25, density=0.1, n_landmarks=12)),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "fixtures" / "worlds"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for name, seed, params in CASES:
        w = generate_world(seed, params)
        save_world(w, out / f"{name}.json")
        # reference pose: first cell (C order) with a free cell of clearance around it
        i, j = np.argwhere(~inflate(w.grid, 1))[0]
        x, y = w.cell_center(int(i), int(j))
        pose = Pose(x, y, 0.25)
        frame = render_frame(w, pose, SensorConfig(), 0)
        index.append({"file": f"{name}.json", "seed": seed, "params": dataclasses.asdict(params),
                      "pose": list(pose.as_tuple()), "frame": frame_to_dict(frame)})
    (out / "index.json").write_text(json.dumps(index, indent=1) + "\n")
    print(f"wrote {len(index)} worlds to {out}")


if __name__ == "__main__":
    main()
