"""Independent reference computations used by the tests.

Nothing here imports the package: each routine recomputes a quantity by a
different route (planar floats, brute force, closed forms, mpmath).
"""

import math

import numpy as np

SQ3 = math.sqrt(3.0) / 2.0


def gasket_graph_planar(depth, side=1.0):
    """Level-``depth`` gasket graph by recursive subdivision of planar triangles.

    Returns ``(points, edges)`` with points deduplicated on a rounded key.
    """
    tris = [((0.0, 0.0), (side, 0.0), (side / 2, side * SQ3))]
    for _ in range(depth):
        nxt = []
        for a, b, c in tris:
            ab = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
            bc = ((b[0] + c[0]) / 2, (b[1] + c[1]) / 2)
            ca = ((c[0] + a[0]) / 2, (c[1] + a[1]) / 2)
            nxt += [(a, ab, ca), (ab, b, bc), (ca, bc, c)]
        tris = nxt
    key = lambda p: (round(p[0], 9), round(p[1], 9))
    index, points, edges = {}, [], set()
    for tri in tris:
        ids = []
        for p in tri:
            k = key(p)
            if k not in index:
                index[k] = len(points)
                points.append(p)
            ids.append(index[k])
        for i in range(3):
            for j in range(i + 1, 3):
                edges.add(tuple(sorted((ids[i], ids[j]))))
    return np.array(points), sorted(edges)


def planar_laplacian(depth, side=1.0):
    pts, edges = gasket_graph_planar(depth, side)
    n = len(pts)
    A = np.zeros((n, n))
    for i, j in edges:
        A[i, j] = A[j, i] = 1.0
    return pts, np.diag(A.sum(1)) - A


def sym_power(A, p):
    w, V = np.linalg.eigh(A)
    w = np.where(np.abs(w) < 1e-9 * max(1.0, np.abs(w).max()), 0.0, w)
    return (V * np.clip(w, 0, None) ** p) @ V.T


def half_stable_density(u):
    """Levy density: the 1/2-stable law with Laplace transform exp(-sqrt(s))."""
    return u**-1.5 * math.exp(-0.25 / u) / (2.0 * math.sqrt(math.pi))


def stable_density_mpmath(beta, u):
    """Density of the positive beta-stable law with E exp(-s S) = exp(-s**beta).

    Series of Pollard / Feller, summed term by term in high precision (it
    converges for every u > 0 when beta < 1).
    """
    import mpmath as mp

    with mp.workdps(80):
        u = mp.mpf(u)
        total, k = mp.mpf(0), 1
        while True:
            size = mp.gamma(beta * k + 1) / mp.factorial(k) * u ** (-beta * k - 1)
            total += (-1) ** (k + 1) * size * mp.sin(mp.pi * beta * k)
            # the sine vanishes at some k, so stop on the size of the envelope
            if k > 20 and size < mp.mpf(10) ** -30 * max(abs(total), mp.mpf(10) ** -20):
                break
            k += 1
        return float(total / mp.pi)


def min_R_oracle(c3, c4, K, delta, s):
    return max(3.0, (1.0 + 2.0 * c3 * math.exp(K) * (1.0 + c4 * (1.0 + K / delta))) ** (1.0 / s))
