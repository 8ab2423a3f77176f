"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs under both backends; the table reports
the best wall time of ``--repeat`` runs and the speed-up.
"""

import argparse
import time

import numpy as np

from aquastereo import kernels
from aquastereo.matcher import match_dense
from aquastereo.projection import back_project_batch, points_at_depth_batch
from aquastereo.rigs import standard_rig
from aquastereo.search_domain import loci_batch
from aquastereo.simulator import SceneSpec, render_stereo_pair


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rig = standard_rig()
    rng = np.random.default_rng(0)
    px = np.stack([rng.uniform(0, 319, 20000), rng.uniform(0, 239, 20000)], axis=1)
    o, d, _ = back_project_batch(rig, "left", px)
    pts, _ = points_at_depth_batch(rig, "left", o, d, rng.uniform(0.5, 6.0, 20000))
    c, port, m = rig.right.pose.center, rig.port, rig.media

    img = rng.uniform(size=(240, 320))
    lm, ln = kernels.window_stats(img, 5)
    _, uv, inb, _ = loci_batch(rig, "left", px[:2000], 1.2, 4.0, 32)
    rows = [kernels.domain_intervals(uv[i, :, 0], uv[i, :, 1], inb[i], 2, 320, 240) for i in range(2000)]
    src = px[:2000].clip(5, [314, 234]).astype(int)

    small = standard_rig(128, 96)
    pair = render_stereo_pair(small, SceneSpec(cell_size=0.03))

    return {
        "fermat_paths (20k points)": lambda: kernels.fermat_paths(
            c, port.normal, port.inner_offset, port.thickness, m.n_air, m.n_glass, m.n_water, pts),
        "window_stats (320x240, 11x11)": lambda: kernels.window_stats(img, 5),
        "domain_intervals (2k loci)": lambda: [
            kernels.domain_intervals(uv[i, :, 0], uv[i, :, 1], inb[i], 2, 320, 240) for i in range(2000)],
        "best_in_domain (2k pixels)": lambda: [
            kernels.best_in_domain(img, img, lm, ln, lm, ln, u, v, r, 5, 0) for (u, v), r in zip(src, rows)],
        "match_dense (128x96)": lambda: match_dense(small, pair.left, pair.right, 1.2, 4.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback is available")
    table = cases()
    print(f"{'kernel':32s}" + "".join(f"{b:>12s}" for b in backends) + "     speed-up")
    for name, fn in table.items():
        t = {}
        for b in backends:
            with kernels.use_backend(b):
                t[b] = _best(fn, args.repeat)
        ratio = t["python"] / t["compiled"] if "compiled" in t else float("nan")
        print(f"{name:32s}" + "".join(f"{t[b]:11.4f}s" for b in backends) + f"  {ratio:9.1f}x")


if __name__ == "__main__":
    main()
