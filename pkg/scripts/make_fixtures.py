"""Regenerate the oracle fixtures in tests/fixtures.

Every expected value is produced by the loop-based reference in
tests/oracles.py, never by the package's own propagation code.
"""
import json
import math
import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "tests"))

import oracles  # noqa: E402

from llp import binio  # noqa: E402

FIX = os.path.join(ROOT, "tests", "fixtures")
TAU, K, T = 0.07, 10, 25


def write_labels(path, labels, is_labeled, conf):
    with open(path, "w") as fh:
        fh.write("point_id,label,is_labeled,confidence\n")
        for i, (lab, known, c) in enumerate(zip(labels, is_labeled, conf)):
            fh.write(f"{i},{'' if lab < 0 else lab},{int(known)},{float(c)!r}\n")


def prop60():
    """Two noisy clusters in 8-D, 20 labelled points, 40 to propagate."""
    rng = np.random.default_rng(60)
    centers = rng.standard_normal((2, 8))
    y = np.repeat([0, 1], 30)
    x = centers[y] + 0.9 * rng.standard_normal((60, 8))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    known = np.zeros(60, bool)
    known[rng.choice(60, 20, replace=False)] = True
    # keep both classes represented among the labelled points
    assert set(y[known]) == {0, 1}
    binio.write_matrix(os.path.join(FIX, "prop60_bank.bin"), x, binio.BANK_MAGIC)
    labels = np.where(known, y, -1)
    write_labels(os.path.join(FIX, "prop60_labels.csv"), labels, known, np.where(known, 1.0, 0.0))
    vecs = x.tolist()
    for method in ("naive", "local"):
        out_l, out_c = labels.tolist(), np.where(known, 1.0, 0.0).tolist()
        for i in np.flatnonzero(~known):
            _, p, win = oracles.propagate(vecs, labels.tolist(), known.tolist(), 2, int(i), K, TAU,
                                          local=method == "local", t=T)
            out_l[i], out_c[i] = win, p[win]
        write_labels(os.path.join(FIX, f"prop60_{method}.csv"), out_l, known, out_c)


def density_scenario():
    """Query at the pole; three labelled points 60 degrees away, 120 degrees apart in azimuth.

    Around the labelled points sit 2, 14 and 29 unlabelled companions at cosine 0.8,
    so the clusters have 3, 15 and 30 members.
    """
    sizes = (3, 15, 30)
    pole = np.array([0.0, 0.0, 1.0])
    vectors, labels, known = [pole], [-1], [False]
    for c, size in enumerate(sizes):
        phi = 2 * math.pi * c / 3
        center = np.array([math.sin(math.pi / 3) * math.cos(phi), math.sin(math.pi / 3) * math.sin(phi),
                           math.cos(math.pi / 3)])
        vectors.append(center)
        labels.append(c)
        known.append(True)
        # orthonormal frame around the center
        e1 = np.cross(center, pole)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(center, e1)
        s = math.sqrt(1 - 0.8 ** 2)
        for m in range(size - 1):
            a = 2 * math.pi * m / (size - 1)
            vectors.append(0.8 * center + s * (math.cos(a) * e1 + math.sin(a) * e2))
            labels.append(-1)
            known.append(False)
    v = np.array(vectors)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    vecs = v.tolist()
    rho = {i: oracles.density(vecs, i, T, TAU) for i in range(len(vecs)) if known[i]}
    out = {"vectors": vecs, "labels": labels, "is_labeled": known, "query": 0, "tau": TAU, "k": K, "t": T,
           "rho": {str(i): r for i, r in rho.items()}}
    for method in ("naive", "local"):
        w, p, win = oracles.propagate(vecs, labels, known, 3, 0, K, TAU, local=method == "local", t=T)
        out[method] = {"w": w, "p": p, "winner": win}
    with open(os.path.join(FIX, "density_scenario.json"), "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")
    return out


if __name__ == "__main__":
    os.makedirs(FIX, exist_ok=True)
    prop60()
    s = density_scenario()
    print("naive p", s["naive"]["p"], "local p", s["local"]["p"], "rho", s["rho"])
