"""Reference implementations used only by the tests.

Nothing here imports the package: these are the independent routes that
the library results are compared against.
"""

import itertools
import math

import numpy as np
from scipy.special import eval_chebyt, eval_gegenbauer, gammaln


def sphere_area(n):
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def angle_rule(n, q):
    """Quadrature on S^{n-1} in hyperspherical angles.

    Gauss-Legendre in each polar angle on [0, pi] (weight sin^j included in
    the integrand) and a trapezoid rule with 2q points in the azimuth.
    """
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    M = 2 * q
    th = 2.0 * np.pi * np.arange(M) / M
    pts = np.stack([np.cos(th), np.sin(th)], axis=1)
    w = np.full(M, 2.0 * np.pi / M)
    x, wx = np.polynomial.legendre.leggauss(q)
    phi = 0.5 * np.pi * (x + 1.0)
    wphi = 0.5 * np.pi * wx
    for dim in range(3, n + 1):
        s, c = np.sin(phi), np.cos(phi)
        new_pts = np.concatenate([np.column_stack([np.full(len(pts), ci), si * pts]) for ci, si in zip(c, s)])
        new_w = np.concatenate([wi * si ** (dim - 2) * w for wi, si in zip(wphi, s)])
        pts, w = new_pts, new_w
    return pts, w


def monomial_integral(alpha):
    """Closed form of the integral of x^alpha over S^{n-1}."""
    alpha = np.asarray(alpha)
    if np.any(alpha % 2):
        return 0.0
    b = (alpha + 1) / 2.0
    return 2.0 * math.exp(np.sum(gammaln(b)) - gammaln(np.sum(b)))


def brute_symmetrize(t):
    m = t.ndim
    if m == 0:
        return t.copy()
    acc = np.zeros_like(t)
    perms = list(itertools.permutations(range(m)))
    for p in perms:
        acc = acc + np.transpose(t, p)
    return acc / len(perms)


def zonal(n, k, t):
    """Reproducing kernel of Omega_k on S^{n-1} as a function of <x, y> = t."""
    dim = math.comb(n + k - 1, k) - (math.comb(n + k - 3, k - 2) if k >= 2 else 0)
    if n == 2:
        shape = eval_chebyt(k, t)
    else:
        lam = (n - 2) / 2.0
        shape = eval_gegenbauer(k, lam, t) / eval_gegenbauer(k, lam, 1.0)
    return dim / sphere_area(n) * shape


def random_unit(rng, count, n):
    x = rng.standard_normal((count, n))
    return x / np.linalg.norm(x, axis=1)[:, None]


def full_eval(full, v):
    """f(v, ..., v) from a dense tensor, one row of v per point."""
    out = []
    for row in np.atleast_2d(v):
        t = full
        for _ in range(full.ndim):
            t = np.tensordot(row, t, axes=(0, 0))
        out.append(t)
    return np.array(out)
