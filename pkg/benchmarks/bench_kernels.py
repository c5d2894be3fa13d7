"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called on the same inputs through both paths; the first numba
call (compilation, or cache load) is excluded. Results agree to the printed
maximum relative difference.
"""

import argparse
import time

import numpy as np

from seltrain import _kernels as kern


def _best(fn, args, repeat, inner):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            out = fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best, out


def _cases(rng):
    k, n = 40, 100.0
    vbar = rng.uniform(0.0, 5.0, k)
    t = kern.fixed_point_numpy(vbar, n, float(k), 1e-10, 1000)[0]
    h = rng.standard_normal((100, k)) + 1j * rng.standard_normal((100, k))
    gram = h.conj().T @ h
    gram = 0.5 * (gram + gram.conj().T)
    v = rng.uniform(0.01, 1e3, k)
    vbars = rng.uniform(0.0, 5.0, (200, k))
    return [
        ("fixed_point (K=40)", "fixed_point", (vbar, n, float(k), 1e-10, 1000), 200),
        ("fixed_point_batch (200x40)", "fixed_point_batch", (vbars, n, float(k), 1e-10, 1000), 5),
        ("deteq_bracket (K=40)", "deteq_bracket", (vbar, t, n, float(k)), 2000),
        ("logdet_eye_plus (40x40)", "logdet_eye_plus", (gram, 0.5), 200),
        ("dus_vhat (K=40, J=11)", "dus_vhat", (v, 0.9881, 10, k, 11), 200),
    ]


def _first(x):
    return np.asarray(x[0] if isinstance(x, tuple) else x, dtype=float)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':30s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    for label, name, call_args, inner in _cases(rng):
        f_np = getattr(kern, name + "_numpy")
        f_nb = getattr(kern, name + "_numba")
        f_nb(*call_args)                      # compile / load cache
        t_np, out_np = _best(f_np, call_args, args.repeat, inner)
        t_nb, out_nb = _best(f_nb, call_args, args.repeat, inner)
        a, b = _first(out_np), _first(out_nb)
        rel = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        print(f"{label:30s} {t_np * 1e6:12.2f} {t_nb * 1e6:12.2f} {t_np / t_nb:8.1f} {rel:13.2e}")


if __name__ == "__main__":
    main()
