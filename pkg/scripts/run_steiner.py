"""Run the shipped boundary configs and compare against the classical
Steiner tree lengths.

Usage: python3 scripts/run_steiner.py [--config configs/triangle.json ...]
"""

import argparse
import json
import math
from pathlib import Path

from plateau.driver import config_from_json, minimize

TARGETS = {
    "segment": 1.0,
    "triangle": math.sqrt(3.0),
    "square": 1.0 + math.sqrt(3.0),
}


def main():
    ap = argparse.ArgumentParser()
    root = Path(__file__).parents[1] / "configs"
    ap.add_argument("--config", nargs="+",
                    default=[root / f"{k}.json" for k in TARGETS])
    args = ap.parse_args()

    for path in args.config:
        path = Path(path)
        with open(path) as fh:
            cfg = config_from_json(json.load(fh))
        res = minimize(cfg)
        best = min(r.energy_after for r in res.reports if r.accepted)
        target = TARGETS.get(path.stem)
        line = f"{path.stem:10s} energy {best:.6f}"
        if target is not None:
            line += f"  target {target:.6f}  rel {(best - target) / target:+.3%}"
        print(line)
        for r in res.reports:
            print(f"  k={r.k} scale 2^-{r.finest_scale} cells {r.n_cells:5d}"
                  f"  {r.energy_before:.6f} -> {r.energy_after:.6f}"
                  f"  pruned {r.pruned:3d}"
                  f"  {'accepted' if r.accepted else 'rejected'}")
        print(f"  audits ok: {res.audits['ok']}"
              f"  ahlfors [{res.audits['ahlfors']['min_ratio']:.3f},"
              f" {res.audits['ahlfors']['max_ratio']:.3f}]")


if __name__ == "__main__":
    main()
