"""Prefractal graphs of the gasket and dense spectral calculus on them.

A :class:`LevelGraph` ``G^(M)@m`` is the union of the ``3**m`` closed
triangles of depth ``m`` building ``G^(M)``; its edge length is
``h = 2**(M - m)``. Vertices are kept as integer lattice coordinates in
units of ``h``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import os

import numpy as np
import scipy.linalg

from ._validation import DomainError, NumericError, ResourceError, check_nonneg_int, check_positive
from .geometry import anchors_units, lattice_to_plane, vertex_address

# debug fault injection: relative error applied to the factor 5 of the time renormalisation
RENORM_PERTURBATION = 0.0

GUARDRAILS = {
    "max_blowup": 6,
    "max_depth": 7,
    "max_dense_dim": 4000,
}

_ENV = {
    "max_blowup": "GASKETLAB_MAX_BLOWUP",
    "max_depth": "GASKETLAB_MAX_DEPTH",
    "max_dense_dim": "GASKETLAB_MAX_DENSE_DIM",
}


def guardrail(name):
    env = os.environ.get(_ENV[name])
    return int(env) if env else GUARDRAILS[name]


def _check_dense_dim(n, what):
    limit = guardrail("max_dense_dim")
    if n > limit:
        raise ResourceError(
            f"{what} has dimension {n} > max_dense_dim={limit}; "
            f"reduce the depth/padding or raise {_ENV['max_dense_dim']}"
        )


@dataclass(frozen=True, eq=False)
class LevelGraph:
    blowup: int
    depth: int
    lattice: np.ndarray  # (n, 2) int, units of the edge length
    edges: np.ndarray  # (e, 2) int, i < j
    vertex_weight: np.ndarray  # mu-mass per vertex

    @property
    def n_vertices(self):
        return len(self.lattice)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def edge_length(self):
        return 2.0 ** (self.blowup - self.depth)

    @property
    def side_units(self):
        """Side of ``G^(M)`` in units of the edge length."""
        return 1 << self.depth

    @cached_property
    def points(self):
        return lattice_to_plane(self.lattice[:, 0], self.lattice[:, 1], self.edge_length)

    @cached_property
    def index(self):
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.lattice)}

    @cached_property
    def degree(self):
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)

    @cached_property
    def neighbors(self):
        """(n, 4) neighbour table padded with the vertex itself (lazy slots)."""
        table = np.repeat(np.arange(self.n_vertices)[:, None], 4, axis=1)
        fill = np.zeros(self.n_vertices, dtype=np.int64)
        for a, b in self.edges:
            table[a, fill[a]] = b
            fill[a] += 1
            table[b, fill[b]] = a
            fill[b] += 1
        return table

    @cached_property
    def vertices(self):
        """Vertex addresses (canonical vertex-tagged :class:`Address`)."""
        s = self.blowup - self.depth
        return [vertex_address(int(i), int(j), s, self.blowup) for i, j in self.lattice]

    def adjacency(self):
        n = self.n_vertices
        A = np.zeros((n, n))
        A[self.edges[:, 0], self.edges[:, 1]] = 1.0
        A[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return A

    def vertex_of(self, point):
        """Index of the vertex with lattice coordinates ``point`` (units of the edge)."""
        try:
            return self.index[(int(point[0]), int(point[1]))]
        except KeyError:
            raise DomainError(f"{tuple(point)} is not a vertex of G^({self.blowup})@{self.depth}")

    def subgasket(self, blowup):
        """Indices of the vertices lying in the corner copy ``G^(blowup)``."""
        if blowup > self.blowup:
            raise DomainError("sub-gasket larger than the graph")
        limit = self.side_units >> (self.blowup - blowup)
        return np.flatnonzero(self.lattice.sum(axis=1) <= limit)

    def junctions(self, blowup):
        """The two corners where ``G^(blowup)`` attaches to the rest of the gasket."""
        limit = self.side_units >> (self.blowup - blowup)
        out = [self.index.get((limit, 0)), self.index.get((0, limit))]
        return np.array([k for k in out if k is not None], dtype=np.int64)

    def interior(self, blowup):
        """Vertices of the relative interior of ``G^(blowup)`` inside the gasket."""
        sub = self.subgasket(blowup)
        return np.setdiff1d(sub, self.junctions(blowup))


def build_graph(M, m):
    M = check_nonneg_int(M, "M")
    m = check_nonneg_int(m, "m")
    if M > guardrail("max_blowup") or m > guardrail("max_depth"):
        raise ResourceError(
            f"G^({M})@{m} exceeds guardrails max_blowup={guardrail('max_blowup')}, "
            f"max_depth={guardrail('max_depth')}"
        )
    anchors = anchors_units(m)
    corners = np.stack([anchors, anchors + [1, 0], anchors + [0, 1]], axis=1)
    lattice, inverse = np.unique(corners.reshape(-1, 2), axis=0, return_inverse=True)
    tri = inverse.reshape(-1, 3)
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
    edges = np.sort(edges, axis=1)
    # each depth-m cell has mass 3**(M-m), split equally among its corners
    weight = np.bincount(tri.ravel(), minlength=len(lattice)) * 3.0 ** (M - m) / 3.0
    return LevelGraph(M, m, lattice.astype(np.int64), edges.astype(np.int64), weight)


def ambient_graph(M, m, pad):
    """``G^(M+pad)`` at the edge length of ``G^(M)@m``."""
    return build_graph(M + pad, m + pad)


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    matrix: np.ndarray
    time_scale_exponent: int = 0
    support: np.ndarray = field(default=None)  # ambient vertex indices of the rows

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DomainError("operator matrix must be square")
        if A.size and not np.allclose(A, A.T, atol=1e-12, rtol=0):
            raise DomainError("operator matrix is not symmetric")
        A = 0.5 * (A + A.T)
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        support = np.arange(len(A)) if self.support is None else np.asarray(self.support)
        object.__setattr__(self, "support", support)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def eigh(self):
        """Ascending eigenvalues and orthonormal eigenvectors."""
        _check_dense_dim(self.dim, "eigendecomposition")
        try:
            w, V = scipy.linalg.eigh(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigensolver failed for matrix {self.fingerprint()}") from exc
        return w, V

    def fingerprint(self):
        return hashlib.sha1(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()[:12]

    def scaled(self, c):
        return SymmetricOperator(c * self.matrix, self.time_scale_exponent, self.support)


def laplacian(g):
    """``5**(m-M) (D - A)``: the graph Laplacian in Brownian time units."""
    A = g.adjacency()
    k = g.depth - g.blowup
    L = (5.0 * (1.0 + RENORM_PERTURBATION)) ** k * (np.diag(A.sum(axis=1)) - A)
    return SymmetricOperator(L, k)


def dirichlet_restrict(op, keep):
    keep = np.asarray(keep, dtype=np.int64).ravel()
    if keep.size == 0:
        raise DomainError("empty keep-set: the killed operator has empty spectrum")
    if keep.min() < 0 or keep.max() >= op.dim:
        raise DomainError("keep-set indices out of range")
    sub = op.matrix[np.ix_(keep, keep)]
    return SymmetricOperator(sub, op.time_scale_exponent, op.support[keep])


def fractional_power(op, exponent):
    check_positive(exponent, "exponent")
    if exponent >= 1:
        raise DomainError("exponent must lie in (0, 1)")
    w, V = op.eigh
    if w.size and w[0] < -1e-10:
        raise NumericError(f"operator has negative eigenvalue {w[0]:.3e}; not positive semidefinite")
    # round-off around a zero eigenvalue would be amplified by the power
    floor = 10.0 * len(w) * np.finfo(float).eps * (np.abs(w).max() if w.size else 0.0)
    theta = np.where(w <= floor, 0.0, w) ** exponent
    P = (V * theta) @ V.T
    return SymmetricOperator(0.5 * (P + P.T), op.time_scale_exponent, op.support)


def spectrum(op, k=None):
    w = np.sort(op.eigh[0])
    return w if k is None else w[: min(int(k), len(w))]


def heat_trace(op, t, weights=None):
    """``sum_n exp(-lambda_n t)``.

    With ``weights`` the trace is taken as ``sum_x w_x p(t, x, x)`` of the
    symmetrised density (see :func:`heat_kernel`), which gives the same number.
    """
    check_positive(t, "t")
    if weights is None:
        return float(np.exp(-t * spectrum(op)).sum())
    w = np.asarray(weights, dtype=float)
    return float(np.dot(w, np.diag(heat_kernel(op, t, w))))


def semigroup(op, t):
    """``exp(-t A)`` from the eigenbasis."""
    w, V = op.eigh
    return (V * np.exp(-t * w)) @ V.T


def matrix_heat_trace(op, t):
    """Trace of ``expm(-t A)`` by Pade approximation, independent of the eigensolver."""
    check_positive(t, "t")
    return float(np.trace(scipy.linalg.expm(-t * op.matrix)))


def heat_kernel(op, t, weights):
    """Transition density w.r.t. the vertex measure: ``K_xy / sqrt(w_x w_y)``."""
    check_positive(t, "t")
    w = np.sqrt(np.asarray(weights, dtype=float))
    return semigroup(op, t) / np.outer(w, w)


def keep_hash(keep):
    keep = np.asarray(keep, dtype=np.int64)
    return hashlib.sha1(keep.tobytes()).hexdigest()[:12]
