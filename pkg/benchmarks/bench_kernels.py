"""Compare the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numba path is timed after a warm-up call so compilation is excluded.
Set TENSORTOMO_NO_NUMBA=1 to confirm the library falls back cleanly; the
benchmark then reports the numpy timings only.
"""

import argparse
import math
import timeit

import numpy as np

from tensortomo import _kernels as K
from tensortomo import polynomials as poly


def _chord_inputs(nch, degree, rng):
    beta = rng.uniform(0.0, 2.0 * math.pi, nch)
    theta = rng.uniform(-1.4, 1.4, nch)
    starts = np.stack([np.cos(beta), np.sin(beta)], axis=1)
    alpha = beta + math.pi + theta
    dirs = np.stack([np.cos(alpha), np.sin(alpha)], axis=1)
    lengths = -2.0 * np.sum(starts * dirs, axis=1)
    x, w = np.polynomial.legendre.leggauss(degree + 2)
    return starts, dirs, lengths, degree, 0.5 * (x + 1.0), 0.5 * w


def _monomial_inputs(npts, n, degree, rng):
    pts = rng.standard_normal((npts, n))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return pts, poly.exponents(n, degree)


def _time(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = [
        ("chord_moments 20000 chords, d=5", "chord_moments", _chord_inputs(20000, 5, rng)),
        ("chord_moments 2000 chords, d=10", "chord_moments", _chord_inputs(2000, 10, rng)),
        ("monomial_values 50000 pts, n=4, deg 6", "monomial_values", _monomial_inputs(50000, 4, 6, rng)),
        ("monomial_values 5000 pts, n=5, deg 8", "monomial_values", _monomial_inputs(5000, 5, 8, rng)),
    ]
    print(f"active backend: {K.backend()}")
    print(f"{'kernel':42s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, inputs in cases:
        f_np = getattr(K, f"{name}_numpy")
        f_nb = getattr(K, f"{name}_numba")
        t_np = _time(f_np, inputs, args.repeat)
        if f_nb is None:
            print(f"{label:42s} {1e3 * t_np:11.2f} {'n/a':>11s} {'n/a':>8s} {'n/a':>10s}")
            continue
        t_nb = _time(f_nb, inputs, args.repeat)
        diff = float(np.abs(f_np(*inputs) - f_nb(*inputs)).max())
        print(f"{label:42s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f} {diff:10.1e}")


if __name__ == "__main__":
    main()
