"""Compiled versus pure-Python kernels, per kernel and end to end.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 50] [--slots 100]

Kernel inputs use the shapes of one default slot (3276 x 14 grid, reshape
factor 4). The end-to-end rows run the full sensing pipeline in a child
process per backend, because the backend is chosen once at import time.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def kernel_cases(rng: np.random.Generator) -> dict:
    from batstation.phy import Constellation

    qam16 = Constellation.of("QAM16").points
    n_alloc = 2458
    y = (rng.standard_normal((n_alloc, 14)) + 1j * rng.standard_normal((n_alloc, 14))) * 3
    h = np.exp(1j * rng.uniform(-np.pi, np.pi, n_alloc)) * rng.uniform(5, 50, n_alloc)
    h3 = h[:, None] * (1 + 0.05 * (rng.standard_normal((n_alloc, 3)) + 1j * rng.standard_normal((n_alloc, 3))))
    is_dmrs = np.zeros(14, dtype=bool)
    is_dmrs[[2, 7, 11]] = True
    x_dmrs = np.exp(1j * np.pi / 4 * (2 * rng.integers(0, 4, n_alloc) + 1))
    mag = np.abs(rng.standard_normal((819, 56)))
    pooled5 = np.abs(rng.standard_normal((63, 56)))
    pooled1 = np.abs(rng.standard_normal((273, 56)))
    return {
        "nearest_index (QAM16, 34k symbols)": ("nearest_index", (y.ravel(), qam16)),
        "maxpool_rows (819x56, pool 13)": ("maxpool_rows", (mag, 13)),
        "correlate_max (273x56, 1x5x2, type 1)": ("correlate_max", (pooled1, rng.standard_normal((1, 5, 2)), 2)),
        "correlate_max (63x56, 2x63x16, type 5)": ("correlate_max", (pooled5, rng.standard_normal((2, 63, 16)), 31)),
        "hampel3 (2458 rows)": ("hampel3", (h3, 3.0)),
        "cancel_rows (2458x14, QAM16)": ("cancel_rows", (y, h, qam16, is_dmrs, x_dmrs)),
    }


def bench_kernels(repeat: int) -> list[dict]:
    from batstation import _kernels

    if _kernels.compiled_backend is None:
        print("compiled extension not built; only the python backend is available", file=sys.stderr)
    cases = kernel_cases(np.random.default_rng(0))
    rows = []
    for label, (name, args) in cases.items():
        row = {"kernel": label}
        for backend_name, mod in (("cython", _kernels.compiled_backend), ("python", _kernels.python_backend)):
            if mod is None:
                row[backend_name] = None
                continue
            fn = getattr(mod, name)
            number = 1 if backend_name == "python" and "type 5" in label else 5
            t = min(timeit.repeat(lambda: fn(*args), number=number, repeat=max(3, repeat // number))) / number
            row[backend_name] = t * 1e3
        rows.append(row)
    return rows


def e2e_child(slots: int) -> dict:
    """Median per-stage latency in this process (backend fixed by environment)."""
    from batstation.dataset import SyntheticConfig, generate_samples, placed_pulses
    from batstation.evalbench import count_efficiency
    from batstation.radar import generate_library
    from batstation.reshape import ReshapeConfig
    from batstation.sensing import init_templates

    pulses = generate_library(4, 0)
    train = generate_samples(SyntheticConfig(), {r: 4 for r in range(1, 6)}, 0, pulses)
    ts = init_templates(placed_pulses(train, pulses), ReshapeConfig())
    rep = count_efficiency(ts, slots=slots, seed=1)
    return {"backend": rep.backend, **{k: v["median"] for k, v in rep.latency_ms.items()}}


def bench_e2e(slots: int) -> list[dict]:
    rows = []
    for pure in ("0", "1"):
        env = {**os.environ, "BATSTATION_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, __file__, "--e2e-child", "--slots", str(slots)], env=env,
                             capture_output=True, text=True, check=True)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--slots", type=int, default=100)
    ap.add_argument("--e2e-child", action="store_true", help=argparse.SUPPRESS)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)
    if args.e2e_child:
        print(json.dumps(e2e_child(args.slots)))
        return 0

    print(f"{'kernel':44s} {'cython ms':>10s} {'python ms':>10s} {'speed-up':>9s}")
    for row in bench_kernels(args.repeat):
        c, p = row["cython"], row["python"]
        speed = f"{p / c:8.1f}x" if c and p else "      n/a"
        c_txt = f"{c:10.4f}" if c is not None else "       n/a"
        print(f"{row['kernel']:44s} {c_txt} {p:10.4f} {speed}")
    if not args.skip_e2e:
        print()
        print(f"{'end-to-end median (ms)':24s} {'separation':>11s} {'reshape':>9s} {'correlation':>12s} {'total':>8s}")
        for row in bench_e2e(args.slots):
            print(f"{row['backend']:24s} {row['separation']:11.3f} {row['reshape']:9.3f} "
                  f"{row['correlation']:12.3f} {row['end_to_end']:8.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
