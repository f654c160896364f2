"""Stable sausage volumes, the annealed survival functional and killed survival."""

from dataclasses import dataclass, field
import math

import numpy as np

from ._validation import DomainError, check_alpha, check_positive, seed_sequence
from .graph import fractional_power, laplacian
from .ids import cloud_ensemble, killed_keep, stable_setting
from .obstacles import BALL_TOL, _within, cell_anchor_tree
from .stable import JumpChain, SubordinatorSpec, path_seeds, simulate_stable_path


@dataclass(frozen=True, eq=False)
class SausageEstimate:
    mean: float
    stderr: float
    n_samples: int
    params: dict = field(default_factory=dict)
    samples: np.ndarray = None

    def within(self, other, k=3.0):
        """``|self - other| <= k`` joint standard errors."""
        return abs(self.mean - other.mean) <= k * math.hypot(self.stderr, other.stderr)


def _estimate(samples, params):
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    se = samples.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return SausageEstimate(float(np.mean(samples)), float(se), n, params, samples)


def check_resolution(graph, a):
    if a < 2.0 * graph.edge_length:
        raise DomainError(
            f"a={a} is below two edge lengths ({graph.edge_length}) of the path graph"
        )


def sausage_cells(points, a, blowup, depth):
    """Indices of the depth-``depth`` cells whose anchor lies within ``a`` of a point."""
    tree, _ = cell_anchor_tree(blowup, depth)
    hits = tree.query_ball_point(np.atleast_2d(points), a + BALL_TOL)
    if len(hits) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]))


def sausage_volume(path, graph, a, depth):
    """``mu`` of the cells of depth ``depth`` within distance ``a`` of the visited vertices."""
    check_positive(a, "a")
    pts = graph.points[path.visited()]
    cells = sausage_cells(pts, a, graph.blowup, depth)
    return len(cells) * 3.0 ** (graph.blowup - depth)


@dataclass
class PathSource:
    """Paths from a fixed start, one independent generator per path index."""

    graph: object
    alpha: float
    method: str = "exact"
    dt: float = None
    chain: JumpChain = None

    def __post_init__(self):
        if self.method == "exact" and self.chain is None:
            self.chain = JumpChain(self.generator())
        elif self.method not in ("exact", "grid"):
            raise DomainError(f"unknown path method {self.method!r}")

    def generator(self):
        return fractional_power(laplacian(self.graph), 0.5 * self.alpha)

    def paths(self, x0, t, n, seed, killed=None):
        out = []
        spec = SubordinatorSpec(self.alpha)
        for rng in path_seeds(seed, n):
            if self.method == "exact":
                out.append(self.chain.run(x0, t, killed, rng))
            else:
                out.append(simulate_stable_path(self.graph, x0, t, self.dt, spec, rng))
        return out


def _default_depth(graph, a):
    # cells well below the ball radius
    return graph.depth + max(0, math.ceil(math.log2(4.0 * graph.edge_length / a)) + 1)


def sausage_functional(x0, t, nu, a, alpha, graph, n_samples, seed, depth=None, method="exact", dt=None, source=None):
    """Monte Carlo ``E_x0 exp(-nu mu(X^a_[0,t]))`` on ``graph``."""
    alpha = check_alpha(alpha)
    check_positive(nu, "nu", strict=False)
    check_positive(t, "t", strict=False)
    check_resolution(graph, a)
    depth = _default_depth(graph, a) if depth is None else depth
    params = dict(x0=int(x0), t=t, nu=nu, a=a, alpha=alpha, M=graph.blowup, m=graph.depth, dt=dt, depth=depth, method=method)
    if nu == 0:
        return _estimate(np.ones(n_samples), params)
    if t == 0:
        v = sausage_volume_point(graph, x0, a, depth)
        return _estimate(np.full(n_samples, math.exp(-nu * v)), params)
    source = source or PathSource(graph, alpha, method, dt)
    vols = np.array([sausage_volume(p, graph, a, depth) for p in source.paths(x0, t, n_samples, seed)])
    return _estimate(np.exp(-nu * vols), dict(params, mean_volume=float(vols.mean())))


def sausage_volume_point(graph, x0, a, depth):
    cells = sausage_cells(graph.points[[int(x0)]], a, graph.blowup, depth)
    return len(cells) * 3.0 ** (graph.blowup - depth)


def sausage_volume_curve(paths, graph, a, depth, t_grid):
    """Sausage volumes of every path at each time in ``t_grid`` (common paths)."""
    out = np.empty((len(paths), len(t_grid)))
    for k, p in enumerate(paths):
        for j, t in enumerate(t_grid):
            upto = p.positions[: np.searchsorted(p.times, t, side="right")]
            pts = graph.points[np.unique(upto)]
            out[k, j] = len(sausage_cells(pts, a, graph.blowup, depth)) * 3.0 ** (graph.blowup - depth)
    return out


def dt_sensitivity(x0, t, a, alpha, graph, n_samples, seed, dt=None, depth=None, tol=0.02):
    """Mean sausage volume on the grid ``dt`` and on ``dt / 2``.

    Returns ``(mean_dt, mean_half, relative_change, flagged)``; ``flagged``
    marks a change above ``tol`` (jumps between grid times not resolved).
    """
    dt = t / 1024 if dt is None else dt
    depth = _default_depth(graph, a) if depth is None else depth
    means = []
    for step in (dt, dt / 2):
        src = PathSource(graph, alpha, "grid", step)
        vols = [sausage_volume(p, graph, a, depth) for p in src.paths(x0, t, n_samples, seed)]
        means.append(float(np.mean(vols)))
    rel = abs(means[1] - means[0]) / max(means[1], 1e-300)
    return means[0], means[1], rel, rel > tol


def survival_probability(x0, t, cloud, graph, alpha, n_samples, seed, kill_outside=None, method="exact", dt=None, source=None):
    """Fraction of paths from ``x0`` avoiding every obstacle up to ``t``.

    ``kill_outside``: a blowup ``M``; paths leaving the interior of ``G^(M)``
    are killed as well.
    """
    alpha = check_alpha(alpha)
    killed = _within(graph.points, cloud.points, cloud.a) if cloud is not None and len(cloud) else np.zeros(graph.n_vertices, bool)
    if kill_outside is not None:
        inside = np.zeros(graph.n_vertices, dtype=bool)
        inside[graph.interior(kill_outside)] = True
        killed |= ~inside
    params = dict(x0=int(x0), t=t, alpha=alpha, M=graph.blowup, m=graph.depth, method=method, kill_outside=kill_outside)
    if killed[int(x0)]:
        return _estimate(np.zeros(n_samples), params)
    source = source or PathSource(graph, alpha, method, dt)
    alive = []
    for p in source.paths(x0, t, n_samples, seed, killed if method == "exact" else None):
        alive.append(0.0 if (p.killed or killed[p.positions].any()) else 1.0)
    return _estimate(alive, params)


def annealed_survival(x0, t, nu, a, alpha, graph, n_samples, seed, depth=None, source=None):
    """Survival among a fresh Poisson cloud per path, the cloud sharing the sausage cells.

    Estimates the same quantity as :func:`sausage_functional` by a different route.
    """
    depth = _default_depth(graph, a) if depth is None else depth
    source = source or PathSource(graph, alpha)
    path_seed, cloud_seed = seed_sequence(seed).spawn(2)
    paths = source.paths(x0, t, n_samples, path_seed)
    clouds = cloud_ensemble(graph.blowup, nu, a, n_samples, cloud_seed, m_s=depth)
    alive = []
    for p, c in zip(paths, clouds):
        hit = _within(graph.points[p.visited()], c.points, a)
        alive.append(0.0 if hit.any() else 1.0)
    return _estimate(alive, dict(x0=int(x0), t=t, nu=nu, a=a, alpha=alpha, depth=depth))


@dataclass(frozen=True, eq=False)
class SurvivalTraceReport:
    t: np.ndarray
    A: np.ndarray
    A_stderr: np.ndarray
    B: np.ndarray
    B_stderr: np.ndarray
    B_mc: np.ndarray = None
    B_mc_stderr: np.ndarray = None
    params: dict = field(default_factory=dict)

    def holds(self, k=3.0):
        """``B <= A + k`` joint standard errors at every time."""
        ok = self.B <= self.A + k * np.hypot(self.A_stderr, self.B_stderr)
        if self.B_mc is not None:
            ok &= self.B_mc <= self.A + k * np.hypot(self.A_stderr, self.B_mc_stderr)
        return bool(np.all(ok))


def averaged_survival_vs_trace(M, m, pad, nu, a, alpha, t_grid, n_clouds, seed, n_paths=0):
    """Cloud averages of ``B = N**-1 1' exp(-t Q) 1`` and ``A = tr exp(-t Q)``.

    ``Q`` is the killed stable generator and ``N`` the number of vertices of
    ``G^(M)``: both are integrals against the uniform probability on the
    vertices. With ``n_paths > 0`` ``B`` is also estimated by simulation,
    starting from uniform vertices of ``G^(M)``.
    """
    alpha = check_alpha(alpha)
    t = np.asarray(t_grid, dtype=float)
    g, H, _ = stable_setting(M, m, pad, alpha)
    domain = g.subgasket(M)
    N = len(domain)
    clouds = cloud_ensemble(M, nu, a, n_clouds, seed)
    A = np.zeros((n_clouds, len(t)))
    B = np.zeros((n_clouds, len(t)))
    Bmc = np.zeros((n_clouds, len(t))) if n_paths else None
    chain = JumpChain(H) if n_paths else None
    for k, cloud in enumerate(clouds):
        keep = killed_keep(M, m, pad, cloud, a)
        if keep.size:
            w, V = np.linalg.eigh(H.matrix[np.ix_(keep, keep)])
            decay = np.exp(-np.outer(t, w))
            A[k] = decay.sum(axis=1)
            B[k] = decay @ (V.sum(axis=0) ** 2) / N
        if n_paths:
            killed = np.ones(g.n_vertices, dtype=bool)
            killed[keep] = False
            rngs = path_seeds([seed, k], n_paths)
            starts = [domain[r.integers(N)] for r in rngs]
            paths = [chain.run(x, t[-1], killed, r) for x, r in zip(starts, rngs)]
            for j, tj in enumerate(t):
                Bmc[k, j] = np.mean([
                    0.0 if killed[p.positions[0]] or (p.killed and p.times[-1] <= tj) else 1.0 for p in paths
                ])

    def mean_se(X):
        se = X.std(axis=0, ddof=1) / math.sqrt(len(X)) if len(X) > 1 else np.zeros(X.shape[1])
        return X.mean(axis=0), se

    a_m, a_s = mean_se(A)
    b_m, b_s = mean_se(B)
    params = dict(M=M, m=m, pad=pad, nu=nu, a=a, alpha=alpha, n_clouds=n_clouds, n_paths=n_paths, seed=seed)
    if n_paths:
        c_m, c_s = mean_se(Bmc)
        return SurvivalTraceReport(t, a_m, a_s, b_m, b_s, c_m, c_s, params)
    return SurvivalTraceReport(t, a_m, a_s, b_m, b_s, params=params)
