#!/usr/bin/env python3
"""Recompute a bench summary.csv from its trace.csv and compare.

Usage: summarize_trace.py OUT_DIR [--tolerance 1e-9]

OUT_DIR holds trace.csv, summary.csv and manifest.json as written by
`otws bench`. Trace rows come in summary order: per dataset, per init,
instances 0..samples-1. A run that never reaches a threshold counts as
max-iters, read from the manifest.
"""

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path


def load_traces(path):
    """List of (init, instance_id, [(iteration, mcv), ...]) in file order."""
    runs = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["init"], int(row["instance_id"]))
            point = (int(row["iteration"]), float(row["mcv"]))
            if runs and runs[-1][0] == key and point[0] > runs[-1][1][-1][0]:
                runs[-1][1].append(point)
            else:
                runs.append((key, [point]))
    return runs


def max_iters_from_manifest(path):
    config = json.loads(Path(path).read_text())["config"]
    match = re.search(r"^max-iters=(\d+)$", config, re.MULTILINE)
    return int(match.group(1)) if match else 10000


def first_hit(points, threshold, cap):
    for iteration, mcv in points:
        if mcv <= threshold:
            return iteration
    return cap


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--tolerance", type=float, default=1e-9)
    args = parser.parse_args()

    runs = load_traces(args.out_dir / "trace.csv")
    cap = max_iters_from_manifest(args.out_dir / "manifest.json")
    with open(args.out_dir / "summary.csv", newline="") as f:
        summary = list(csv.DictReader(f))

    cursor = 0
    block = None
    worst = 0.0
    for row in summary:
        samples = int(row["samples"])
        if block != (row["dataset"], row["init"]):
            block = (row["dataset"], row["init"])
            start, cursor = cursor, cursor + samples
        chunk = runs[start:start + samples]
        if len(chunk) != samples or any(key[0] != row["init"] for key, _ in chunk):
            sys.exit(f"trace does not line up with summary row {row}")
        iters = [first_hit(points, float(row["threshold"]), cap) for _, points in chunk]
        mean = sum(iters) / samples
        sd = math.sqrt(sum((x - mean) ** 2 for x in iters) / (samples - 1)) if samples > 1 else 0.0
        ci = 1.96 * sd / math.sqrt(samples)
        for name, mine in (("mean_iters", mean), ("ci95", ci)):
            theirs = float(row[name])
            err = abs(mine - theirs) / max(1.0, abs(mine))
            worst = max(worst, err)
            if err > args.tolerance:
                print(f"{block} threshold {row['threshold']}: {name} {theirs} vs recomputed {mine}")
    if cursor != len(runs):
        sys.exit(f"trace has {len(runs)} runs, summary accounts for {cursor}")
    print(f"{len(summary)} summary rows recomputed, worst relative difference {worst:.3g}")
    return 0 if worst <= args.tolerance else 1


if __name__ == "__main__":
    sys.exit(main())
