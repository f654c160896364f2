"""Killed stable spectra among obstacles and the empirical density of states.

The killed generator is the principal submatrix of ``H**(alpha/2)``, where
``H`` is the Laplacian of the padded ambient graph ``G^(M+pad)``. Rows are
kept for the vertices of ``G^(M)`` that are neither obstacle-covered nor
one of the two junction corners joining ``G^(M)`` to the rest of the gasket.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, as_rng, check_alpha, check_nonneg_int, check_positive, seed_sequence
from .geometry import anchors_units, constants
from .graph import (
    ambient_graph,
    build_graph,
    dirichlet_restrict,
    fractional_power,
    keep_hash,
    laplacian,
    matrix_heat_trace,
)
from .obstacles import classify_points, default_center_depth, enlarged_free_set, free_vertices, sample_cloud


@lru_cache(maxsize=4)
def stable_setting(M, m, pad, alpha):
    """Ambient graph, its stable generator and the interior of ``G^(M)`` inside it."""
    g = ambient_graph(M, m, pad)
    H = fractional_power(laplacian(g), 0.5 * check_alpha(alpha))
    return g, H, g.interior(M)


@lru_cache(maxsize=4)
def brownian_setting(M, m, pad):
    g = ambient_graph(M, m, pad)
    return g, laplacian(g), g.interior(M)


def killed_keep(M, m, pad, cloud, a=None):
    g, _, interior = brownian_setting(M, m, pad)
    if cloud is None or len(cloud) == 0:
        return interior
    return np.intersect1d(interior, free_vertices(g, cloud, a))


@dataclass(frozen=True, eq=False)
class KilledSpectrum:
    eigenvalues: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def is_empty(self):
        return len(self.eigenvalues) == 0


def killed_operator(graph, cloud, a=None, alpha=1.0, pad=2):
    """Killed stable generator for ``graph = G^(M)@m``; ``None`` if no vertex survives."""
    M, m = graph.blowup, graph.depth
    _, H, _ = stable_setting(M, m, pad, check_alpha(alpha))
    keep = killed_keep(M, m, pad, cloud, a)
    if keep.size == 0:
        return None
    return dirichlet_restrict(H, keep)


def killed_brownian_operator(graph, cloud, a=None, pad=2):
    M, m = graph.blowup, graph.depth
    _, L, _ = brownian_setting(M, m, pad)
    keep = killed_keep(M, m, pad, cloud, a)
    if keep.size == 0:
        return None
    return dirichlet_restrict(L, keep)


def killed_spectrum(graph, cloud, a=None, alpha=1.0, pad=2):
    op = killed_operator(graph, cloud, a, alpha, pad)
    a = cloud.a if (a is None and cloud is not None) else a
    prov = {
        "M": graph.blowup,
        "m": graph.depth,
        "pad": pad,
        "alpha": alpha,
        "a": a,
        "cloud_seed": None if cloud is None else cloud.seed,
    }
    if op is None:
        return KilledSpectrum(np.zeros(0), prov)
    prov["keep_hash"] = keep_hash(op.support)
    w = scipy.linalg.eigvalsh(op.matrix)
    return KilledSpectrum(np.clip(np.sort(w), 0.0, None), prov)


@dataclass(frozen=True, eq=False)
class EmpiricalIDS:
    spectrum: KilledSpectrum
    M: int

    @property
    def normalization(self):
        return 3.0 ** (-self.M)

    @property
    def mass(self):
        return len(self.spectrum) * self.normalization

    def cdf(self, lam):
        return ids_cdf(self, lam)

    def laplace(self, t):
        return laplace_transform(self, t)


def ids_cdf(ids, lam):
    """``3**-M #{n : lambda_n <= lam}``, vectorised over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("lambda must be nonnegative")
    out = np.searchsorted(ids.spectrum.eigenvalues, lam, side="right") * ids.normalization
    return float(out) if out.ndim == 0 else out


def laplace_transform(ids, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    ev = ids.spectrum.eigenvalues
    out = np.exp(-np.multiply.outer(t, ev)).sum(axis=-1) * ids.normalization
    return float(out) if out.ndim == 0 else out


def trace_laplace(op, M, t):
    """Same quantity from the trace of the matrix exponential (no eigensolver)."""
    if op is None:
        return 0.0
    return matrix_heat_trace(op, t) * 3.0 ** (-M)


@dataclass(frozen=True, eq=False)
class LaplaceCurve:
    t: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def log_convexity_defect(self):
        """Most negative second difference of ``log L`` (in the variable ``t``)."""
        if len(self.t) < 3:
            return 0.0
        y = np.log(self.value)
        t = self.t
        slopes = np.diff(y) / np.diff(t)
        return float(min(0.0, np.min(np.diff(slopes))))

    def is_nonincreasing(self):
        return bool(np.all(np.diff(self.value) <= 1e-15))


def cloud_seeds(seed, n):
    return seed_sequence(seed).spawn(n)


def cloud_ensemble(M, nu, a, n_clouds, seed, m_s=None):
    """``n_clouds`` independent clouds, cloud ``k`` seeded from the ``k``-th spawned child."""
    return [sample_cloud(M, nu, a, m_s, s) for s in cloud_seeds(seed, n_clouds)]


def _curve(values, t, meta):
    values = np.asarray(values)
    n = len(values)
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    meta = dict(meta, n_clouds=n)
    return LaplaceCurve(np.asarray(t, dtype=float), mean, se, meta)


def averaged_laplace(M, m, pad, nu, a, alpha, t_grid, n_clouds, seed, clouds=None):
    """Cloud average of ``L(M, omega)(t)`` over independent clouds."""
    if n_clouds < 1:
        raise DomainError("n_clouds must be at least 1")
    est = KilledStableIDS(alpha=alpha, M=M, m=m, pad=pad, a=a, t_grid=tuple(t_grid))
    if clouds is None:
        clouds = cloud_ensemble(M, nu, a, n_clouds, seed)
    est.fit(clouds)
    return est.laplace_curve(meta={"nu": nu, "seed": seed})


class KilledStableIDS(TransformerMixin, BaseEstimator):
    """Empirical IDS of the killed stable generator over a sample of clouds.

    ``fit`` takes a list of clouds and stores their spectra. ``transform``
    maps clouds to the feature matrix ``L(M, omega)(t)`` over ``t_grid``.
    """

    def __init__(self, alpha=1.0, M=3, m=5, pad=2, a=None, t_grid=(1.0,)):
        self.alpha = alpha
        self.M = M
        self.m = m
        self.pad = pad
        self.a = a
        self.t_grid = t_grid

    def _validate(self):
        check_alpha(self.alpha)
        check_nonneg_int(self.M, "M")
        check_nonneg_int(self.m, "m")
        check_nonneg_int(self.pad, "pad")
        t = np.asarray(self.t_grid, dtype=float).ravel()
        if t.size == 0 or np.any(t <= 0):
            raise DomainError("t_grid must be a nonempty set of positive times")
        return t

    def _spectra(self, clouds):
        g = build_graph(self.M, self.m)
        return [killed_spectrum(g, c, self.a, self.alpha, self.pad) for c in clouds]

    def fit(self, X, y=None):
        self._validate()
        clouds = list(X)
        if not clouds:
            raise DomainError("need at least one cloud")
        self.spectra_ = self._spectra(clouds)
        self.n_clouds_ = len(clouds)
        self.nu_ = 0.0 if clouds[0] is None else clouds[0].nu
        return self

    def _features(self, spectra):
        t = self._validate()
        norm = 3.0 ** (-self.M)
        return np.array([np.exp(-np.outer(t, s.eigenvalues)).sum(axis=1) * norm for s in spectra])

    def transform(self, X):
        check_is_fitted(self, "spectra_")
        return self._features(self._spectra(list(X)))

    def laplace_curve(self, meta=None):
        check_is_fitted(self, "spectra_")
        info = {"alpha": self.alpha, "M": self.M, "m": self.m, "pad": self.pad, "a": self.a, "nu": self.nu_}
        return _curve(self._features(self.spectra_), self._validate(), dict(info, **(meta or {})))

    def pooled_eigenvalues(self):
        check_is_fitted(self, "spectra_")
        return np.sort(np.concatenate([s.eigenvalues for s in self.spectra_]))

    def ids_table(self):
        """Pooled ``(lambda, l([0, lambda]), count)`` averaged over the fitted clouds."""
        lam = self.pooled_eigenvalues()
        count = np.arange(1, len(lam) + 1)
        # right-continuous: keep the last index of tied eigenvalues
        last = np.r_[lam[1:] != lam[:-1], True]
        return lam[last], count[last] / (self.n_clouds_ * 3.0**self.M), count[last]


# --- reflected process on the unit gasket and the variational constant ---


@lru_cache(maxsize=4)
def reflected_setting(m, alpha):
    g = build_graph(0, m)
    H = fractional_power(laplacian(g), 0.5 * check_alpha(alpha))
    anchors = anchors_units(m)
    corners = np.stack([anchors, anchors + [1, 0], anchors + [0, 1]], axis=1)
    idx = np.array([[g.index[(int(i), int(j))] for i, j in tri] for tri in corners])
    return g, H, idx


def _open_vertices(cells, m, idx):
    """Vertices whose incident depth-m cells all lie in the union ``cells``."""
    n_vertices = idx.max() + 1
    inside = np.zeros(len(idx), dtype=bool)
    for digits in cells:
        k = len(digits)
        if k > m:
            raise DomainError("candidate cells must not be finer than the graph")
        start = 0
        for d in digits:
            start = 3 * start + d
        span = 3 ** (m - k)
        inside[start * span : (start + 1) * span] = True
    bad = np.zeros(n_vertices, dtype=bool)
    np.logical_or.at(bad, idx[~inside].ravel(), True)
    touched = np.zeros(n_vertices, dtype=bool)
    touched[idx[inside].ravel()] = True
    return np.flatnonzero(touched & ~bad)


def _cells_measure(cells):
    return float(sum(3.0 ** -len(d) for d in set(cells)))


def principal_eigenvalue_reflected(cells, alpha, m):
    _, H, idx = reflected_setting(m, alpha)
    keep = _open_vertices(cells, m, idx)
    if keep.size == 0:
        return math.inf
    if keep.size == H.dim:
        return 0.0
    return float(scipy.linalg.eigvalsh(H.matrix[np.ix_(keep, keep)], subset_by_index=[0, 0])[0])


def variational_value(cells, alpha, m):
    lam = principal_eigenvalue_reflected(cells, alpha, m)
    return lam + 2.0 ** (-constants(alpha).d_alpha) * _cells_measure(cells)


def variational_functional(candidates, alpha, m):
    """Minimum of ``lambda_0(U) + 2**-d_alpha mu(U)`` over candidate cell unions.

    Each candidate is an iterable of digit tuples (cells of ``G^(0)``).
    Returns ``(value, cells)``.
    """
    candidates = [tuple(sorted(set(tuple(d) for d in c))) for c in candidates]
    if not candidates:
        raise DomainError("empty candidate family")
    values = [variational_value(c, alpha, m) for c in candidates]
    k = int(np.argmin(values))
    return values[k], candidates[k]


@dataclass(frozen=True)
class VariationalResult:
    value: float
    cells: tuple
    tradeoff: tuple  # (mu(U), lambda_0(U), value) along a nested sweep


def search_variational(alpha, m, k=3, n_restarts=8, seed=0):
    """Greedy add/remove search over unions of depth-``k`` cells with random restarts."""
    rng = as_rng(seed)
    cells = [tuple(int(c) for c in np.base_repr(i, 3).zfill(k)) for i in range(3**k)] if k else [()]
    n = len(cells)

    def value(mask):
        sel = [cells[i] for i in np.flatnonzero(mask)]
        return variational_value(sel, alpha, m) if sel else math.inf

    starts = [np.ones(n, dtype=bool)] + [rng.random(n) < rng.uniform(0.2, 0.9) for _ in range(n_restarts)]
    best_val, best_mask = math.inf, None
    for mask in starts:
        mask = mask.copy()
        cur = value(mask)
        improved = True
        while improved:
            improved = False
            for i in rng.permutation(n):
                mask[i] = ~mask[i]
                v = value(mask)
                if v < cur - 1e-14:
                    cur, improved = v, True
                else:
                    mask[i] = ~mask[i]
        if cur < best_val:
            best_val, best_mask = cur, mask.copy()
    # nested sweep: grow U cell by cell in lexicographic order
    tradeoff = []
    for j in range(1, n + 1):
        sel = cells[:j]
        lam = principal_eigenvalue_reflected(sel, alpha, m)
        tradeoff.append((_cells_measure(sel), lam, lam + 2.0 ** (-constants(alpha).d_alpha) * _cells_measure(sel)))
    return VariationalResult(best_val, tuple(cells[i] for i in np.flatnonzero(best_mask)), tuple(tradeoff))


# --- enlargement of obstacles ---


def min_R(c3, c4, K, delta, s):
    """Smallest admissible ``R > 3`` with ``c3 / (R**s - 1) <= (e**K (1 + c4 (1 + K/delta)))**-1 / 2``."""
    for name, v in (("c3", c3), ("c4", c4), ("K", K), ("delta", delta), ("s", s)):
        check_positive(v, name)
    root = (1.0 + 2.0 * c3 * math.exp(K) * (1.0 + c4 * (1.0 + K / delta))) ** (1.0 / s)
    return max(math.nextafter(3.0, math.inf), root)


@dataclass(frozen=True)
class EnlargementReport:
    lambda_theta: float
    lambda_b: float
    K: float
    delta: float
    b: float
    eps: float
    a: float
    n_centers: int
    n_good: int
    holds: bool
    R: float
    kappa: float
    R0: float


def _principal_on(H, keep):
    if keep.size == 0:
        return math.inf
    if keep.size == H.dim:
        return float(max(0.0, scipy.linalg.eigvalsh(H.matrix, subset_by_index=[0, 0])[0]))
    return float(scipy.linalg.eigvalsh(H.matrix[np.ix_(keep, keep)], subset_by_index=[0, 0])[0])


def check_enlargement(graph, cloud, R, kappa, b, eps, K, delta, alpha, R0=1.0, classification=None):
    """Compare principal eigenvalues with the true and with the enlarged obstacles.

    Works on the reflected process on ``graph`` (no exterior killing): true
    obstacles are the closed ``a eps`` balls, enlarged ones the ``b eps``
    balls around good centres only. The report records whether
    ``min(lambda_b, K) <= min(lambda_theta, K) + delta``.
    """
    check_positive(K, "K")
    check_positive(delta, "delta")
    H = fractional_power(laplacian(graph), 0.5 * check_alpha(alpha))
    if classification is None:
        classification = classify_points(cloud, graph, R, b, delta, eps, kappa, R0)
    theta = free_vertices(graph, cloud, cloud.a * eps)
    theta_b = enlarged_free_set(graph, cloud, classification, b, eps)
    lt = _principal_on(H, theta)
    lb = _principal_on(H, theta_b)
    holds = min(lb, K) <= min(lt, K) + delta + 1e-12
    return EnlargementReport(
        lt, lb, K, delta, b, eps, cloud.a, len(cloud), classification.n_good, bool(holds), R, kappa, R0
    )

