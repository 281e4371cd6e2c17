"""Independent recomputation of window features and nearest-centroid
distances for the fixture windows. Prints JSON; the output is saved as
oracle.json and frozen into crates/core/tests/activity.rs."""

import csv
import json
import math
import sys
from pathlib import Path

HERE = Path(__file__).parent
N = 128


def windows(path):
    rows = list(csv.DictReader(open(path)))
    out = []
    for i in range(0, len(rows), N):
        chunk = rows[i:i + N]
        label = chunk[0]["label"]
        assert all(r["label"] == label for r in chunk) and len(chunk) == N
        out.append((label, [(float(r["ax"]), float(r["ay"]), float(r["az"])) for r in chunk]))
    return out


def features(samples):
    axes = list(zip(*samples))
    means = [math.fsum(a) / N for a in axes]
    stds = [math.sqrt(math.fsum((x - m) ** 2 for x in a) / N) for a, m in zip(axes, means)]
    mads = [math.fsum(abs(x - m) for x in a) / N for a, m in zip(axes, means)]
    mag = math.fsum(math.sqrt(x * x + y * y + z * z) for x, y, z in samples) / N
    return means + stds + mads + [mag]


def classify(model, f):
    d = [
        math.sqrt(math.fsum(((fi - ci) / si) ** 2 for fi, ci, si in zip(f, c, model["scales"])))
        for c in model["centroids"]
    ]
    order = sorted(range(len(d)), key=lambda i: (d[i], model["labels"][i]))
    d1, d2 = d[order[0]], d[order[1]]
    conf = 0.5 if d1 + d2 == 0 else d2 / (d1 + d2)
    return model["labels"][order[0]], conf, d


def main():
    model = json.load(open(HERE / "model.json"))
    out = []
    for label, samples in windows(HERE / "windows.csv"):
        f = features(samples)
        got, conf, d = classify(model, f)
        out.append({"label": label, "features": f, "distances": d, "predicted": got, "confidence": conf})
    json.dump(out, sys.stdout, indent=1)


if __name__ == "__main__":
    main()
