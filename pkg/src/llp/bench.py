"""Wall-time scaling of batch propagation over bank size and worker count."""
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .bank import BankSnapshot
from .config import PropagationConfig
from .neighbors import compute_density
from .propagation import NO_LABEL, LabelState


@dataclass(frozen=True)
class BenchCell:
    n: int
    m: int
    workers: int
    median_s: float
    times: tuple


def synthetic_instance(n, m, d=16, q=10, seed=0):
    """n unit vectors on the sphere, the first m of them labelled round-robin."""
    rng = np.random.default_rng([seed, n, m, d])
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    label = np.full(n, NO_LABEL, dtype=np.int64)
    label[:m] = np.arange(m) % q
    is_labeled = np.zeros(n, dtype=bool)
    is_labeled[:m] = True
    return BankSnapshot.from_array(x), LabelState.from_labels(label, is_labeled, q)


def time_cell(n, m, workers, d=16, repeats=5, cfg=None, seed=0):
    """Median wall time of ``propagate_all`` with BLAS pinned to one thread."""
    from .propagation import propagate_all

    cfg = cfg or PropagationConfig()
    cfg = PropagationConfig(**{**cfg.__dict__, "workers": workers})
    snap, labels = synthetic_instance(n, m, d, seed=seed)
    density = compute_density(snap, labels.labeled_ids, cfg.t, cfg.tau) if cfg.local_weighting else None
    times = []
    with threadpool_limits(limits=1):
        for _ in range(repeats):
            t0 = time.perf_counter()
            propagate_all(snap, labels, density, cfg)
            times.append(time.perf_counter() - t0)
    return BenchCell(n, m, workers, float(np.median(times)), tuple(times))


def run_bench(ns, m, workers_list, d=16, repeats=5):
    """Cells ordered by n, then workers."""
    return [time_cell(n, m, w, d, repeats) for n in sorted(ns) for w in sorted(workers_list)]


def loglog_slope(ns, times):
    return float(np.polyfit(np.log(ns), np.log(times), 1)[0])


def summarize(cells):
    """Slope of the single-worker series and the speedup of the largest worker count at the largest n."""
    base = sorted((c for c in cells if c.workers == min(x.workers for x in cells)), key=lambda c: c.n)
    out = {"slope": loglog_slope([c.n for c in base], [c.median_s for c in base]) if len(base) > 1 else float("nan")}
    n_max = max(c.n for c in cells)
    at_max = {c.workers: c.median_s for c in cells if c.n == n_max}
    w_min, w_max = min(at_max), max(at_max)
    out.update(n_max=n_max, workers=w_max, speedup=at_max[w_min] / at_max[w_max])
    return out


def write_bench_csv(path, cells):
    with open(path, "w") as fh:
        fh.write("n,m,workers,median_s\n")
        for c in cells:
            fh.write(f"{c.n},{c.m},{c.workers},{c.median_s:.6f}\n")
