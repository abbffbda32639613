"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``TENSORTOMO_NO_NUMBA`` is unset (or ``0``).  Both paths are
always importable under explicit names so tests and benchmarks can compare
them directly.
"""

import os

import numpy as np

_DISABLED = os.environ.get("TENSORTOMO_NO_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by TENSORTOMO_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised when numba is absent
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def monomial_values_numpy(points, exps):
    """Evaluate ``x**alpha`` for every point (rows) and exponent (rows)."""
    points = np.asarray(points)
    exps = np.asarray(exps, dtype=np.int64)
    out = np.ones((points.shape[0], exps.shape[0]), dtype=points.dtype)
    if exps.shape[0] == 0:
        return out
    top = int(exps.max()) if exps.size else 0
    for i in range(points.shape[1]):
        # power table avoids repeated ** on large arrays
        powers = np.ones((top + 1, points.shape[0]), dtype=points.dtype)
        for p in range(1, top + 1):
            powers[p] = powers[p - 1] * points[:, i]
        out *= powers[exps[:, i]].T
    return out


def chord_moments_numpy(starts, directions, lengths, degree, nodes, weights):
    """Integrals of ``x**a * y**b`` (a + b <= degree) along straight chords.

    ``nodes``/``weights`` are a Gauss-Legendre rule on [0, 1]; the chord
    ``t -> start + t * direction`` runs over ``t in [0, length]``.  Returns an
    array of shape (n_chords, degree + 1, degree + 1) indexed by (a, b).
    """
    t = lengths[:, None] * nodes[None, :]
    xs = starts[:, 0:1] + t * directions[:, 0:1]
    ys = starts[:, 1:2] + t * directions[:, 1:2]
    w = lengths[:, None] * weights[None, :]
    px = np.ones((degree + 1,) + xs.shape)
    py = np.ones((degree + 1,) + ys.shape)
    for p in range(1, degree + 1):
        px[p] = px[p - 1] * xs
        py[p] = py[p - 1] * ys
    out = np.einsum("acq,bcq,cq->cab", px, py, w)
    for a in range(degree + 1):
        out[:, a, degree - a + 1:] = 0.0
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _monomial_values_real(points, exps):
        npts, dim = points.shape
        nexp = exps.shape[0]
        top = 0
        for k in range(nexp):
            for i in range(dim):
                top = max(top, exps[k, i])
        out = np.ones((npts, nexp))
        powers = np.empty((dim, top + 1))
        for p in range(npts):
            for i in range(dim):
                powers[i, 0] = 1.0
                for e in range(1, top + 1):
                    powers[i, e] = powers[i, e - 1] * points[p, i]
            for k in range(nexp):
                acc = powers[0, exps[k, 0]]
                for i in range(1, dim):
                    acc *= powers[i, exps[k, i]]
                out[p, k] = acc
        return out

    @njit(cache=True)
    def _chord_moments(starts, directions, lengths, degree, nodes, weights):
        nch = starts.shape[0]
        nq = nodes.shape[0]
        out = np.zeros((nch, degree + 1, degree + 1))
        px = np.empty(degree + 1)
        py = np.empty(degree + 1)
        for c in range(nch):
            L = lengths[c]
            for q in range(nq):
                t = L * nodes[q]
                x = starts[c, 0] + t * directions[c, 0]
                y = starts[c, 1] + t * directions[c, 1]
                w = L * weights[q]
                px[0] = 1.0
                py[0] = 1.0
                for p in range(1, degree + 1):
                    px[p] = px[p - 1] * x
                    py[p] = py[p - 1] * y
                for a in range(degree + 1):
                    for b in range(degree + 1 - a):
                        out[c, a, b] += w * px[a] * py[b]
        return out

    def monomial_values_numba(points, exps):
        points = np.asarray(points)
        exps = np.ascontiguousarray(exps, dtype=np.int64)
        if np.iscomplexobj(points):
            return monomial_values_numpy(points, exps)
        return _monomial_values_real(np.ascontiguousarray(points, dtype=np.float64), exps)

    def chord_moments_numba(starts, directions, lengths, degree, nodes, weights):
        return _chord_moments(
            np.ascontiguousarray(starts, dtype=np.float64),
            np.ascontiguousarray(directions, dtype=np.float64),
            np.ascontiguousarray(lengths, dtype=np.float64),
            int(degree),
            np.ascontiguousarray(nodes, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
        )

    monomial_values = monomial_values_numba
    chord_moments = chord_moments_numba
else:
    monomial_values_numba = None
    chord_moments_numba = None
    monomial_values = monomial_values_numpy
    chord_moments = chord_moments_numpy


def backend():
    """Name of the active kernel backend."""
    return "numba" if HAS_NUMBA else "numpy"
