#!/usr/bin/env python3
"""Render every entry of index.json next to this script as a PNG.

Usage: python3 plot.py [NAME_SUBSTRING ...]
Requires numpy and matplotlib.
"""
import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


def groups(data, key):
    if key is None:
        yield None, np.ones(len(next(iter(data.values()))), dtype=bool)
        return
    for g in np.unique(data[key]):
        yield g, data[key] == g


def surface(ax_list, data, entry):
    xs, ys = np.unique(data["x"]), np.unique(data["y"])
    for ax, col in zip(ax_list, entry["y"]):
        z = np.full((len(xs), len(ys)), np.nan)
        i = np.searchsorted(xs, data["x"])
        j = np.searchsorted(ys, data["y"])
        z[i, j] = data[col]
        m = ax.pcolormesh(xs, ys, z.T, shading="auto")
        ax.figure.colorbar(m, ax=ax)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(col)


def render(entry):
    data = read(os.path.join(HERE, entry["file"]))
    if not data:
        return False
    kind = entry["kind"]
    if kind == "surface":
        fig, axes = plt.subplots(1, len(entry["y"]), figsize=(5 * len(entry["y"]), 4), squeeze=False)
        surface(axes[0], data, entry)
    else:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        if kind == "bars":
            lo, hi = data["bin_lo"], data["bin_hi"]
            ax.bar(lo, data["density"], width=hi - lo, align="edge", edgecolor="k", linewidth=0.3)
            ax.set_xlabel("lambda")
            ax.set_ylabel("density")
        else:
            for _, sel in groups(data, entry.get("group")):
                for col in entry["y"]:
                    x, y = data[entry["x"]][sel], data[col][sel]
                    label = col if entry.get("group") is None else None
                    if kind == "scatter":
                        ax.plot(x, y, ",", ms=1, label=label)
                    else:
                        ax.plot(x, y, "-o" if len(x) < 20 else "-", lw=0.8, label=label)
            ax.set_xlabel(entry["x"])
            ax.set_ylabel(", ".join(entry["y"]))
            if entry.get("group") is None and len(entry["y"]) > 1:
                ax.legend()
    fig.suptitle(entry["title"])
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, entry["name"] + ".png"), dpi=130)
    plt.close(fig)
    return True


def main(argv):
    with open(os.path.join(HERE, "index.json")) as f:
        entries = json.load(f)
    for e in entries:
        if argv and not any(a in e["name"] for a in argv):
            continue
        print(("wrote " if render(e) else "empty ") + e["name"])


if __name__ == "__main__":
    main(sys.argv[1:])
