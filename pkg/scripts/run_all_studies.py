#!/usr/bin/env python3
"""Runs every bundled study config and renders the standard figures.

The silhouette studies use step schedules and take the longest; pass
--quick to clamp every schedule to its two coarsest meshes for a smoke run.
"""

import argparse
import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.abspath(os.path.join(HERE, os.pardir))

STUDIES = [
    "body_fitted.cfg",
    "ex11_dirichlet_circle.cfg",
    "ex12_neumann_circle.cfg",
    "ex13_annulus_mixed.cfg",
    "complex_blob.cfg",
    "complex_heart.cfg",
]


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="coarsest two meshes only")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default=os.path.join(ROOT, "results"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    sys.path.insert(0, os.path.join(ROOT, "src"))
    from thbsbm.config import load_config, serialize_config

    for name in STUDIES:
        cfg_path = os.path.join(ROOT, "configs", name)
        cfg = load_config(cfg_path)
        if args.quick:
            if cfg.schedule_mode == "halve":
                cfg.span_end = min(cfg.span_end, cfg.span_start * 2)
            else:
                cfg.span_end = min(cfg.span_end, cfg.span_start + 1)
        cfg.out_csv = os.path.join(args.out, os.path.basename(cfg.out_csv))
        tmp_cfg = os.path.join(args.out, "_current.cfg")
        with open(tmp_cfg, "w") as fh:
            fh.write(serialize_config(cfg))
        print(f"== {name}")
        rc = subprocess.call([sys.executable, "-m", "thbsbm.cli", "study",
                              "--config", tmp_cfg, "--threads", str(args.threads)],
                             cwd=ROOT)
        if rc != 0:
            print(f"study {name} reported failures (exit {rc})", file=sys.stderr)
        csv_path = cfg.out_csv
        for norm in ("l2", "h1"):
            fig = csv_path.replace(".csv", f"_{norm}.svg")
            subprocess.call([sys.executable, os.path.join(ROOT, "plots", "render.py"),
                             "--csv", csv_path, "--x", "h", "--norm", norm,
                             "--out", fig], cwd=ROOT)
    os.remove(os.path.join(args.out, "_current.cfg"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
