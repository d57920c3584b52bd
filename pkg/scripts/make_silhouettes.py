#!/usr/bin/env python3
"""Regenerates the bundled silhouette polylines (blob and heart, ~500 vertices).

Both curves are smooth, closed, non-self-intersecting and sit well inside
the unit square so a 20x20 background mesh already resolves them.
"""

import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, os.pardir, "configs", "geometry")


def blob(n=500):
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = 0.16 + 0.035 * np.sin(3 * t) + 0.02 * np.cos(5 * t) + 0.012 * np.sin(7 * t + 0.4)
    return np.stack([0.5 + r * np.cos(t), 0.5 + r * np.sin(t)], axis=1)


def heart(n=500):
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    x = 16 * np.sin(t) ** 3
    y = 13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t)
    scale = 0.175 / 16.0
    return np.stack([0.5 + scale * x, 0.52 + scale * y], axis=1)


def write(path, pts):
    with open(path, "w") as fh:
        for x, y in pts:
            fh.write(f"{x:.12f} {y:.12f}\n")
    print(f"wrote {path} ({len(pts)} vertices)")


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    write(os.path.join(OUT, "blob_silhouette.txt"), blob())
    write(os.path.join(OUT, "heart_silhouette.txt"), heart())
