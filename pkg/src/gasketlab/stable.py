"""Stable subordinator, subordinated walks and kernel-level scaling checks.

The alpha-stable process on the gasket is Brownian motion run by an
independent positive (alpha/2)-stable clock. On a level graph the Brownian
part is the continuous-time walk generated by ``laplacian(g)``; in the
uniformised form this is a lazy walk moving ``Poisson(rate * s)`` times in
Brownian time ``s``, with ``rate = 4 * 5**(m - M)``.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import stats

from . import _kernels
from ._validation import DomainError, NumericError, ResourceError, as_rng, check_alpha, check_positive, seed_sequence
from .geometry import CORNERS, constants
from .graph import build_graph, fractional_power, heat_kernel, laplacian

# above this many walk steps in one grid interval, sample the endpoint
# exactly from a row of the heat semigroup instead of stepping
MAX_STEPS_PER_INTERVAL = 50_000
MAX_JUMPS = 1_000_000


@dataclass(frozen=True)
class SubordinatorSpec:
    alpha: float
    seed: object = None

    def __post_init__(self):
        check_alpha(self.alpha)

    @property
    def index(self):
        return 0.5 * self.alpha

    def rng(self):
        return as_rng(self.seed)


def _zolotarev_a(phi, beta):
    """Kanter's function; increasing on (0, pi)."""
    return (
        np.sin(beta * phi) ** beta * np.sin((1.0 - beta) * phi) ** (1.0 - beta) / np.sin(phi)
    ) ** (1.0 / (1.0 - beta))


def standard_stable(beta, size=None, rng=None):
    """Positive ``beta``-stable draws with ``E exp(-u S) = exp(-u**beta)``.

    Chambers-Mallows-Stuck in Kanter's form: one uniform angle and one
    standard exponential per draw.
    """
    rng = as_rng(rng)
    phi = np.pi * rng.random(size)
    # guard the open interval; rng.random can return exactly 0
    phi = np.where(phi == 0.0, np.finfo(float).tiny, phi)
    e = rng.standard_exponential(size)
    return (_zolotarev_a(phi, beta) / e) ** ((1.0 - beta) / beta)


def sample_subordinator_increment(spec, dt, size=None, rng=None):
    """Increment ``S_dt`` of the alpha/2-stable subordinator, via ``dt**(2/alpha) S_1``."""
    check_positive(dt, "dt")
    rng = spec.rng() if rng is None else rng
    beta = spec.index
    return dt ** (1.0 / beta) * standard_stable(beta, size, rng)


def _density_closed_form(u):
    return u ** -1.5 * np.exp(-0.25 / u) / (2.0 * math.sqrt(math.pi))


@lru_cache(maxsize=None)
def _gauss_legendre(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def _graded_nodes(nodes, levels=60):
    # Gauss-Legendre on panels halving towards both ends of (0, pi), where
    # the integrand concentrates for small and for large u
    z, w = _gauss_legendre(nodes)
    hi = 0.5 * np.pi * 0.5 ** np.arange(levels)
    lo = hi / 2.0
    half = 0.5 * (hi - lo)
    phi = (lo[:, None] + half[:, None] * (z[None, :] + 1.0)).ravel()
    weight = (half[:, None] * w[None, :]).ravel()
    return np.concatenate([phi, np.pi - phi]), np.concatenate([weight, weight])


def _density_quadrature(beta, x, nodes=64, rtol=1e-8, max_nodes=1024):
    # derivative of P(S <= x) = (1/pi) int_0^pi exp(-A(phi) x^(-beta/(1-beta))) dphi,
    # integrand assembled in log space so that tiny x underflows cleanly to 0
    c = beta / (1.0 - beta)
    logx = math.log(x)
    prev = None
    while nodes <= max_nodes:
        phi, w = _graded_nodes(nodes)
        A = _zolotarev_a(phi, beta)
        log_f = math.log(c) - logx / (1.0 - beta) + np.log(A) - A * math.exp(-c * logx)
        val = np.dot(w, np.exp(log_f)) / np.pi
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return val
        if prev is not None and val == 0.0 and prev == 0.0:
            return 0.0
        prev = val
        nodes *= 2
    raise NumericError(f"density quadrature did not converge at u={x!r}, beta={beta}")


def subordinator_density(alpha, t, u, method="auto"):
    """Density ``eta_t(u)`` of ``S_t``.

    ``method="quadrature"`` forces the integral representation also at
    alpha = 1, where a closed form is otherwise used.
    """
    alpha = check_alpha(alpha)
    check_positive(t, "t")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise DomainError("u must be positive")
    beta = 0.5 * alpha
    scale = t ** (-1.0 / beta)
    x = scale * u
    if alpha == 1.0 and method != "quadrature":
        out = _density_closed_form(x)
    else:
        out = np.vectorize(lambda v: _density_quadrature(beta, v))(x)
    out = scale * out
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class PathSample:
    """A path on a level graph.

    ``kind == "grid"``: positions at the times of a fixed grid, with the
    subordinator values there. ``kind == "jump"``: the exact jump chain of
    the stable generator, listing every jump time and state (``subordinator``
    is then NaN).
    """

    times: np.ndarray
    positions: np.ndarray
    subordinator: np.ndarray
    kind: str = "grid"
    killed: bool = False

    def visited(self):
        return np.unique(self.positions)

    def position_at(self, t):
        k = np.searchsorted(self.times, t, side="right") - 1
        return self.positions[max(k, 0)]


def walk_rate(graph):
    """Uniformisation rate of the Brownian walk generator (max degree 4)."""
    return 4.0 * 5.0 ** (graph.depth - graph.blowup)


def _brownian_eigh(graph):
    cache = graph.__dict__.setdefault("_brownian_eigh", {})
    if "eigh" not in cache:
        cache["eigh"] = laplacian(graph).eigh
    return cache["eigh"]


def _exact_walk_row(graph, x, s, rng):
    w, V = _brownian_eigh(graph)
    row = (V[x] * np.exp(-s * w)) @ V.T
    row = np.clip(row, 0.0, None)
    cdf = np.cumsum(row)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(row) - 1))


def simulate_stable_path(graph, x0, t, dt=None, spec=None, rng=None):
    """Subordinated walk observed on the grid ``0, dt, 2dt, ..., t``.

    The position at each grid time is distributed exactly as the stable
    process at that time; what happens between grid times is not recorded.
    """
    spec = SubordinatorSpec(1.0) if spec is None else spec
    rng = spec.rng() if rng is None else rng
    x0 = int(x0)
    if not 0 <= x0 < graph.n_vertices:
        raise DomainError(f"x0={x0} is not a vertex index")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        return PathSample(np.zeros(1), np.array([x0]), np.zeros(1))
    dt = t / 1024 if dt is None else check_positive(dt, "dt")
    n = max(1, int(math.ceil(t / dt - 1e-12)))
    times = np.minimum(np.arange(n + 1) * dt, t)
    incr = sample_subordinator_increment(spec, 1.0, n, rng) * np.diff(times) ** (1.0 / spec.index)
    sub = np.concatenate([[0.0], np.cumsum(incr)])
    lam = walk_rate(graph) * incr
    if np.any(lam > 1e15):
        raise ResourceError("subordinator increment too large for the step sampler; reduce t or m")
    counts = rng.poisson(lam).astype(np.int64)
    big = counts > MAX_STEPS_PER_INTERVAL
    slots = rng.integers(0, 4, size=int(counts[~big].sum())).astype(np.int64)
    nb = graph.neighbors
    if not big.any():
        pos = _kernels.lazy_walk(nb, x0, counts, slots)
    else:
        pos = np.empty(n, dtype=np.int64)
        x, start, offset = x0, 0, 0
        for k in np.flatnonzero(big):
            seg = counts[start:k]
            if seg.size:
                pos[start:k] = _kernels.lazy_walk(nb, x, seg, slots[offset:])
                x = int(pos[k - 1])
                offset += int(seg.sum())
            x = _exact_walk_row(graph, x, incr[k], rng)
            pos[k] = x
            start = k + 1
        if start < n:
            pos[start:] = _kernels.lazy_walk(nb, x, counts[start:], slots[offset:])
    return PathSample(times, np.concatenate([[x0], pos]), sub)


class JumpChain:
    """Exact simulation of the chain generated by a symmetric stable operator.

    Rates are the diagonal entries; off-diagonal entries are nonpositive up
    to round-off, and positive round-off is clipped.
    """

    def __init__(self, op):
        Q = np.array(op.matrix)
        rates = np.diag(Q).copy()
        P = -Q
        np.fill_diagonal(P, 0.0)
        P = np.clip(P, 0.0, None)
        self.rates = rates
        self.cum = np.cumsum(P, axis=1)
        self.n = len(rates)

    def run(self, x0, t, killed=None, rng=None):
        rng = as_rng(rng)
        killed = np.zeros(self.n, dtype=np.bool_) if killed is None else np.asarray(killed, dtype=np.bool_)
        seed = int(rng.integers(0, 2**62))
        times, states, dead = _kernels.jump_chain(
            self.cum, self.rates, int(x0), float(t), killed, seed, MAX_JUMPS
        )
        if times.size == 0:
            raise ResourceError(f"more than {MAX_JUMPS} jumps before t={t}; reduce t or the depth")
        return PathSample(times.copy(), states.copy(), np.full(len(times), np.nan), "jump", bool(dead))


def simulate_jump_chain(op, x0, t, rng=None, killed=None):
    return JumpChain(op).run(x0, t, killed, rng)


def path_seeds(seed, n):
    """Independent per-path generators from a counter-based split of ``seed``."""
    return [np.random.default_rng(c) for c in seed_sequence(seed).spawn(n)]


@dataclass(frozen=True)
class ScalingReport:
    alpha: float
    t: float
    max_deviation: float
    max_kernel: float
    factor: float

    @property
    def relative_deviation(self):
        return self.max_deviation / self.max_kernel


def kernel_scaling_check(fine, coarse, alpha, t, factor_perturbation=0.0):
    """Compare ``p_fine(t, 2x, 2y)`` with ``p_coarse(t / 5**(alpha/2), x, y) / 3``.

    ``fine`` is a level graph of ``G^(M+1)`` and ``coarse`` one of ``G^(M)``
    with the same lattice, so the vertex ``x`` of ``coarse`` sits at ``2x`` in
    ``fine``. ``factor_perturbation`` multiplies the time factor (negative
    control).
    """
    alpha = check_alpha(alpha)
    check_positive(t, "t")
    if (
        fine.blowup != coarse.blowup + 1
        or fine.depth != coarse.depth
        or fine.n_vertices != coarse.n_vertices
        or not np.array_equal(fine.lattice, coarse.lattice)
    ):
        raise DomainError("graphs are not related by the doubling map")
    beta = 0.5 * alpha
    factor = 5.0**beta * (1.0 + factor_perturbation)
    p_fine = heat_kernel(fractional_power(laplacian(fine), beta), t, fine.vertex_weight)
    p_coarse = heat_kernel(fractional_power(laplacian(coarse), beta), t / factor, coarse.vertex_weight)
    dev = float(np.abs(p_fine - p_coarse / 3.0).max())
    return ScalingReport(alpha, t, dev, float(np.abs(p_fine).max()), factor)


def project0_lattice(lattice, depth, blowup):
    """Vectorised projection of level-graph vertices onto ``G^(0)``.

    Input and output are lattice coordinates in units of ``2**(blowup - depth)``
    (which must be at most 1); the output lies in ``G^(0)``.
    """
    n = 1 << (depth - blowup)
    if depth < blowup:
        raise DomainError("projection needs edge length at most 1")
    lattice = np.asarray(lattice, dtype=np.int64)
    I, p = np.divmod(lattice[:, 0], n)
    J, q = np.divmod(lattice[:, 1], n)
    # points on the slanted edge of a unit triangle belong to the cell below-left
    over = p + q > n
    if np.any(over):
        raise DomainError("point is not on the gasket")
    c = (I - J) % 3
    w = np.stack([n - p - q, p, q], axis=1)
    out = np.zeros_like(lattice)
    for j in range(3):
        out += w[:, j : j + 1] * CORNERS[(j + c) % 3]
    return out


def _projection_map(graph, base):
    proj = project0_lattice(graph.lattice, graph.depth, graph.blowup)
    return np.array([base.index[(int(i), int(j))] for i, j in proj])


def fiber_test(graph, base, x, y, t, n_paths, seed, alpha=1.0, dt=None):
    """Two-sample chi-square test of the projected endpoints from ``x`` and ``y``.

    ``base`` is the ``G^(0)`` graph at the same edge length. Returns the
    p-value and the two count vectors.
    """
    pmap = _projection_map(graph, base)
    if pmap[x] != pmap[y]:
        raise DomainError("x and y do not lie in the same fiber")
    spec = SubordinatorSpec(alpha)
    counts = []
    for k, x0 in enumerate((x, y)):
        rngs = path_seeds([seed, k], n_paths)
        ends = [pmap[simulate_stable_path(graph, x0, t, dt or t, spec, r).positions[-1]] for r in rngs]
        counts.append(np.bincount(ends, minlength=base.n_vertices))
    table = np.array(counts)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0, counts
    return float(stats.chi2_contingency(table)[1]), counts


@dataclass(frozen=True)
class ExitReport:
    radii: np.ndarray
    probability: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_stderr: float
    target: float
    constant: float

    @property
    def relative_error(self):
        return abs(self.slope / self.target - 1.0)


def exit_probabilities(graph, x0, t, radii, n_paths, seed, alpha=1.0, op=None):
    """Monte Carlo ``P[sup_{s<=t} |X_s - X_0| > r]`` with the exact jump chain.

    ``op`` is the stable generator on ``graph`` (computed if omitted). Fits
    the log-log slope in ``r`` and the constant ``C`` in ``P <= C t r**slope``.
    """
    alpha = check_alpha(alpha)
    if op is None:
        op = fractional_power(laplacian(graph), 0.5 * alpha)
    chain = JumpChain(op)
    pts = graph.points
    radii = np.asarray(radii, dtype=float)
    far = np.empty(n_paths)
    for k, r in enumerate(path_seeds(seed, n_paths)):
        path = chain.run(x0, t, rng=r)
        far[k] = np.linalg.norm(pts[path.positions] - pts[x0], axis=1).max()
    hit = far[:, None] > radii[None, :]
    prob = hit.mean(axis=0)
    se = np.sqrt(prob * (1 - prob) / n_paths)
    if np.any(prob <= 0):
        raise NumericError("some radius was never exited; increase t or n_paths")
    fit = stats.linregress(np.log(radii), np.log(prob))
    target = -constants(alpha).jump_exponent
    const = float(np.max(prob / (t * radii**target)))
    return ExitReport(radii, prob, se, float(fit.slope), float(fit.stderr), target, const)


@dataclass(frozen=True)
class DecayReport:
    t: np.ndarray
    diagonal: np.ndarray
    slope: float
    target: float

    @property
    def relative_error(self):
        return abs(self.slope / self.target - 1.0)


def diagonal_decay(m, alpha=1.0, vertex=(0, 0), t_max=0.5, n_t=30):
    """Log-log slope of ``t -> p(t, x, x)`` for the stable generator on ``G^(0)@m``.

    The window starts at the time ``5**(-(m-1) alpha/2)`` a stable path needs
    to cross a few graph edges and ends at ``t_max`` before the reflected
    kernel saturates at ``1 / mu(G^(0))``. The target is ``-d_s / alpha``.
    """
    alpha = check_alpha(alpha)
    g = build_graph(0, m)
    w, V = fractional_power(laplacian(g), 0.5 * alpha).eigh
    x = g.vertex_of(vertex)
    t = np.geomspace(5.0 ** (-(m - 1) * alpha / 2), t_max, n_t)
    diag = (V[x] ** 2 * np.exp(-np.outer(t, w))).sum(axis=1) / g.vertex_weight[x]
    slope = float(np.polyfit(np.log(t), np.log(diag), 1)[0])
    return DecayReport(t, diag, slope, -constants(alpha).d_s / alpha)
