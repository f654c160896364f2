"""Poisson obstacle clouds on the blown-up gasket.

Centres are uniform cells of a fixed sampling depth, represented by the
cell anchor; obstacles are closed Euclidean balls around them.
"""

import csv
from dataclasses import dataclass, field, replace
from functools import lru_cache
import math

import numpy as np
from scipy.spatial import cKDTree

from ._validation import DomainError, as_rng, check_nonneg_int, check_positive
from .geometry import Address, CORNERS, anchors_units, lattice_to_plane

# closed balls: distances equal to the radius up to round-off count as inside
BALL_TOL = 1e-12


def default_center_depth(M, a):
    """Smallest depth whose cell side ``2**(M - depth)`` is below ``a / 4``."""
    return M + max(0, math.floor(math.log2(4.0 / a)) + 1)


def _digits_to_units(digits):
    i = np.zeros(len(digits), dtype=np.int64)
    j = np.zeros(len(digits), dtype=np.int64)
    for col in range(digits.shape[1]):
        i = 2 * i + CORNERS[digits[:, col], 0]
        j = 2 * j + CORNERS[digits[:, col], 1]
    return i, j


@dataclass(frozen=True, eq=False)
class Cloud:
    blowup: int
    nu: float
    a: float
    depth: int
    digits: np.ndarray  # (n, depth) uint8
    marks: np.ndarray  # uniform marks used for thinning
    seed: object = None

    def __len__(self):
        return len(self.digits)

    @property
    def centers(self):
        return [Address(self.blowup, tuple(row)) for row in self.digits]

    @property
    def points(self):
        i, j = _digits_to_units(self.digits)
        return lattice_to_plane(i, j, 2.0 ** (self.blowup - self.depth))

    def with_radius(self, a):
        return replace(self, a=check_positive(a, "a"))

    def thin(self, nu):
        """Coupled cloud of intensity ``nu <= self.nu`` (a subset of the centres)."""
        check_positive(nu, "nu", strict=False)
        if nu > self.nu:
            raise DomainError("thinning can only lower the intensity")
        keep = self.marks < (nu / self.nu if self.nu > 0 else 0.0)
        return replace(self, nu=float(nu), digits=self.digits[keep], marks=self.marks[keep])

    def union(self, other):
        if (other.blowup, other.depth) != (self.blowup, self.depth):
            raise DomainError("clouds must share blowup and sampling depth")
        return replace(
            self,
            nu=self.nu + other.nu,
            digits=np.concatenate([self.digits, other.digits]),
            marks=np.concatenate([self.marks, other.marks]),
        )


def sample_cloud(M, nu, a, m_s=None, seed=None):
    M = check_nonneg_int(M, "M")
    nu = check_positive(nu, "nu", strict=False)
    a = check_positive(a, "a")
    m_s = default_center_depth(M, a) if m_s is None else check_nonneg_int(m_s, "m_s")
    if 2.0 ** (M - m_s) >= a / 4:
        raise DomainError(f"sampling depth {m_s} too coarse for radius {a}: need 2**(M-m_s) < a/4")
    rng = as_rng(seed)
    n = rng.poisson(nu * 3.0**M)
    digits = rng.integers(0, 3, size=(n, m_s), dtype=np.uint8)
    marks = rng.random(n)
    return Cloud(M, nu, a, m_s, digits, marks, seed if not isinstance(seed, np.random.Generator) else None)


def cloud_from_points(M, nu, a, digits, depth):
    digits = np.asarray(digits, dtype=np.uint8).reshape(-1, depth)
    return Cloud(M, nu, a, depth, digits, np.zeros(len(digits)))


def _within(points, centers, r):
    """Boolean mask of ``points`` lying in some closed ball ``B(center, r)``."""
    mask = np.zeros(len(points), dtype=bool)
    if len(centers) == 0 or len(points) == 0:
        return mask
    tree = cKDTree(centers)
    d, _ = tree.query(points, k=1)
    return d <= r + BALL_TOL


def free_vertices(graph, cloud, r=None):
    """Indices of vertices at distance > ``r`` from every centre (default ``r = cloud.a``)."""
    r = cloud.a if r is None else check_positive(r, "r", strict=False)
    pts = graph.points
    return np.flatnonzero(~_within(pts, cloud.points, r))


@lru_cache(maxsize=8)
def cell_anchor_tree(blowup, depth):
    """KD-tree on the anchors of all depth-``depth`` cells of ``G^(blowup)``."""
    anchors = anchors_units(depth)
    pts = lattice_to_plane(anchors[:, 0], anchors[:, 1], 2.0 ** (blowup - depth))
    return cKDTree(pts), pts


def ball_measure(blowup, depth, centers, r):
    """Cell-counted ``mu`` of each closed ball ``B(center, r)`` (anchor test)."""
    tree, _ = cell_anchor_tree(blowup, depth)
    counts = tree.query_ball_point(np.atleast_2d(centers), r + BALL_TOL, return_length=True)
    return np.asarray(counts) * 3.0 ** (blowup - depth)


def doubling_constant(blowup, depth, r0=1.0, n_samples=200, seed=None):
    """Empirical ``max mu(B(x, r)) / mu(B(x, r/3))`` over sampled ``x`` and dyadic ``r``.

    Radii run from three cell sides up to ``r0``; centres are uniform cell anchors.
    """
    rng = as_rng(seed)
    tree, pts = cell_anchor_tree(blowup, depth)
    x = pts[rng.integers(0, len(pts), n_samples)]
    side = 2.0 ** (blowup - depth)
    radii = [r for r in r0 * 0.5 ** np.arange(64) if r >= 3 * side]
    best = 1.0
    for r in radii:
        big = ball_measure(blowup, depth, x, r)
        small = ball_measure(blowup, depth, x, r / 3)
        best = max(best, float(np.max(big / small)))
    return best


@dataclass(frozen=True, eq=False)
class Classification:
    good: np.ndarray
    R: float
    b: float
    delta: float
    eps: float
    kappa: float
    R0: float
    scales: tuple = field(default=())

    @property
    def n_good(self):
        return int(self.good.sum())


def classify_points(cloud, graph, R, b, delta, eps, kappa, R0=1.0):
    """Good/bad labels for the centres.

    A centre ``x`` is good when every ball ``F = B(x, 10 eps b R**l)`` with
    radius at most ``R0`` (``l = 0, 1, ...``) satisfies
    ``mu(F ∩ union_j B(x_j, b eps)) >= (delta / kappa) mu(F)``. Measures
    count the cells of ``graph``'s depth by their anchors. With no
    admissible scale every centre is good.
    """
    if R <= 3:
        raise DomainError("R must exceed 3")
    if b <= cloud.a:
        raise DomainError("b must exceed the obstacle radius a")
    for name, v in (("delta", delta), ("eps", eps), ("kappa", kappa), ("R0", R0)):
        check_positive(v, name)
    centers = cloud.points
    scales = []
    r = 10.0 * eps * b
    while r <= R0 * (1 + 1e-12):
        scales.append(r)
        r *= R
    good = np.ones(len(centers), dtype=bool)
    if not scales or len(centers) == 0:
        return Classification(good, R, b, delta, eps, kappa, R0, tuple(scales))
    _, anchors = cell_anchor_tree(graph.blowup, graph.depth)
    tree = cKDTree(anchors)
    covered = _within(anchors, centers, b * eps)
    for r in scales:
        for k, hits in enumerate(tree.query_ball_point(centers, r + BALL_TOL)):
            if not good[k]:
                continue
            hits = np.asarray(hits, dtype=np.int64)
            # equal cell masses cancel in the ratio
            if covered[hits].sum() < (delta / kappa) * len(hits):
                good[k] = False
    return Classification(good, R, b, delta, eps, kappa, R0, tuple(scales))


def enlarged_free_set(graph, cloud, classification, b, eps):
    """Vertices outside the closed ``b eps`` balls around the good centres."""
    centers = cloud.points[classification.good]
    return np.flatnonzero(~_within(graph.points, centers, b * eps))


def write_cloud(path, cloud, classification=None):
    with open(path, "w", newline="") as fh:
        fh.write(f"# M={cloud.blowup}\n# nu={cloud.nu!r}\n# a={cloud.a!r}\n# m_s={cloud.depth}\n# seed={cloud.seed}\n")
        w = csv.writer(fh)
        w.writerow(["center", "mark"] + (["class"] if classification is not None else []))
        for k, addr in enumerate(cloud.centers):
            row = [addr.to_text(), repr(float(cloud.marks[k]))]
            if classification is not None:
                row.append("good" if classification.good[k] else "bad")
            w.writerow(row)


def read_cloud(path):
    header = {}
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        else:
            body.append(ln)
    reader = csv.DictReader(body)
    for row in reader:
        rows.append(row)
    M, depth = int(header["M"]), int(header["m_s"])
    digits = np.array([Address.from_text(r["center"]).digits for r in rows], dtype=np.uint8).reshape(-1, depth)
    marks = np.array([float(r["mark"]) for r in rows])
    seed = header.get("seed")
    return Cloud(M, float(header["nu"]), float(header["a"]), depth, digits, marks, None if seed in (None, "None") else seed)
