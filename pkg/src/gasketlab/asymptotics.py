"""Stretched-exponential fits, the explicit lower-bound certificate and Lifschitz slopes."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from ._validation import DomainError, check_alpha, check_positive
from .geometry import anchors_units, constants
from .graph import build_graph, dirichlet_restrict, laplacian, spectrum
from .obstacles import BALL_TOL, cell_anchor_tree


def m0_scale(t, nu, alpha):
    """Largest integer ``M0`` with ``2**M0 <= (t / nu)**(1 / d_alpha)``."""
    check_positive(t, "t")
    check_positive(nu, "nu")
    d_alpha = constants(alpha).d_alpha
    x = math.log2(t / nu) / d_alpha
    M0 = math.floor(x + 1e-9)
    # x is within round-off of an integer on the boundary t/nu = 2**(k d_alpha)
    lo, hi = 2.0**M0, 2.0 ** (M0 + 1)
    r = (t / nu) ** (1.0 / d_alpha)
    if not (lo * (1 - 1e-9) <= r < hi):
        raise DomainError(f"inconsistent M0={M0} for t={t}, nu={nu}")
    return M0


def dirichlet_corner_eigenvalue(m):
    """Principal Brownian eigenvalue on ``G^(0)@m`` killed at the three corners."""
    g = build_graph(0, m)
    corners = [g.vertex_of(p) for p in ((0, 0), (1 << m, 0), (0, 1 << m))]
    keep = np.setdiff1d(np.arange(g.n_vertices), corners)
    return float(spectrum(dirichlet_restrict(laplacian(g), keep), 1)[0])


@dataclass(frozen=True)
class EigenvalueEstimate:
    value: float
    coarse: float
    fine: float
    depth: int

    @property
    def uncertainty(self):
        return abs(self.value - self.fine)


def lambda_bm_estimate(m):
    """Richardson extrapolation in ``5**-m`` from depths ``m - 1`` and ``m``."""
    if m < 1:
        raise DomainError("need depth m >= 1")
    coarse, fine = dirichlet_corner_eigenvalue(m - 1), dirichlet_corner_eigenvalue(m)
    return EigenvalueEstimate((5.0 * fine - coarse) / 4.0, coarse, fine, m)


def certificate_constant(lambda_bm, alpha):
    b = 0.5 * check_alpha(alpha)
    return 5.0**b * lambda_bm**b + 1.0


def volume_constant(M, m, a, depth, alpha=1.0):
    """Fitted ``c`` in ``mu(T^a) <= mu(T) + c a**d_f`` over the triangles the bound uses.

    ``T`` runs over the cells of ``G^(M)`` of side ``2**M0`` (for each ``M0``
    in ``0..M-1``); ``T^a`` is counted with depth-``depth`` cells whose anchor
    lies within ``a`` of a vertex of ``T`` on the graph ``G^(M)@m``.
    """
    d_f = constants(alpha).d_f
    g = build_graph(M, m)
    tree, _ = cell_anchor_tree(M, depth)
    cell = 3.0 ** (M - depth)
    side_units = 1 << m
    best = 0.0
    for M0 in range(0, M):
        k = M - M0  # address depth of the triangles
        span = side_units >> k
        for ai, aj in anchors_units(k) * span:
            p, q = g.lattice[:, 0] - ai, g.lattice[:, 1] - aj
            inside = (p >= 0) & (q >= 0) & (p + q <= span)
            hits = tree.query_ball_point(g.points[inside], a + BALL_TOL)
            vol = len(set().union(*map(set, hits))) * cell
            best = max(best, (vol - 3.0**M0) / a**d_f)
    return best


@dataclass(frozen=True, eq=False)
class CertificateReport:
    t: np.ndarray
    M0: np.ndarray
    log_value: np.ndarray
    log_bound: np.ndarray
    covered: np.ndarray  # t with 1 <= M0 < M
    C1: float
    c_vol: float

    @property
    def margin(self):
        return self.log_value - self.log_bound

    @property
    def violations(self):
        return np.flatnonzero(self.covered & (self.margin < 0))

    @property
    def holds(self):
        return self.violations.size == 0 and bool(self.covered.any())


def certificate_bound(t, C1, nu, a, alpha, c_vol):
    """The explicit lower bound for ``L(t)``, as a logarithm."""
    c = constants(alpha)
    t = np.asarray(t, dtype=float)
    return -C1 * t**c.gamma * nu**c.nu_exponent - nu * c_vol * a**c.d_f + c.gamma * np.log(nu / t)


def lower_bound_certificate(curve, lambda_bm, nu, a, alpha, c_vol, M=None):
    """Check ``L(t) >= bound(t)`` on every grid time with ``1 <= M0(t)`` (and ``M0 < M``)."""
    t = np.asarray(curve.t, dtype=float)
    M = curve.meta.get("M") if M is None else M
    C1 = certificate_constant(lambda_bm, alpha)
    M0 = np.array([m0_scale(x, nu, alpha) for x in t])
    covered = M0 >= 1
    if M is not None:
        covered &= M0 < M
    with np.errstate(divide="ignore"):
        log_value = np.log(np.asarray(curve.value, dtype=float))
    return CertificateReport(t, M0, log_value, certificate_bound(t, C1, nu, a, alpha, c_vol), covered, C1, c_vol)


@dataclass(frozen=True, eq=False)
class FitReport:
    gamma: float
    constant: float
    intercept: float
    r2: float
    window: tuple
    residuals: np.ndarray = None
    slope: float = None
    ci: tuple = None
    target: float = None
    extra: dict = field(default_factory=dict)


def upper_half(t):
    """Mask of the grid points in the upper half of the sorted grid."""
    t = np.asarray(t, dtype=float)
    return t >= np.median(t)


class StretchedExponentialFit(RegressorMixin, BaseEstimator):
    """Least-squares fit ``log y = -c t**gamma + b`` on the upper half of the times."""

    def __init__(self, gamma=0.5, window="upper_half"):
        self.gamma = gamma
        self.window = window

    def _xy(self, X, y):
        t = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_2d=True).ravel()
        y = np.asarray(y, dtype=float).ravel()
        check_consistent_length(t, y)
        return t, y

    def fit(self, X, y):
        if not 0 < self.gamma < 1:
            raise DomainError("gamma must lie in (0, 1)")
        t, y = self._xy(X, y)
        if np.any(y <= 0) or np.any(t <= 0):
            raise DomainError("values and times must be positive")
        sel = upper_half(t) if self.window == "upper_half" else np.ones(len(t), bool)
        x = t[sel] ** self.gamma
        ly = np.log(y[sel])
        fit = stats.linregress(x, ly)
        self.coef_ = -float(fit.slope)
        self.intercept_ = float(fit.intercept)
        pred = fit.intercept + fit.slope * x
        ss = np.sum((ly - ly.mean()) ** 2)
        self.r2_ = float(1.0 - np.sum((ly - pred) ** 2) / ss) if ss > 0 else 1.0
        self.window_ = (float(t[sel].min()), float(t[sel].max()))
        self.residuals_ = ly - pred
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        t = np.asarray(X, dtype=float).ravel()
        return np.exp(self.intercept_ - self.coef_ * t**self.gamma)

    def score(self, X, y, sample_weight=None):
        """R^2 of ``log y`` on the fit window."""
        check_is_fitted(self, "coef_")
        t, y = self._xy(X, y)
        sel = upper_half(t) if self.window == "upper_half" else np.ones(len(t), bool)
        ly = np.log(y[sel])
        pred = np.log(self.predict(t[sel]))
        ss = np.sum((ly - ly.mean()) ** 2)
        return float(1.0 - np.sum((ly - pred) ** 2) / ss) if ss > 0 else 1.0

    def report(self):
        check_is_fitted(self, "coef_")
        return FitReport(self.gamma, self.coef_, self.intercept_, self.r2_, self.window_, self.residuals_)


def fit_stretched_exponential(curve, gamma):
    """Fit a :class:`LaplaceCurve` (or a ``(t, values)`` pair)."""
    t, v = (curve.t, curve.value) if hasattr(curve, "t") else curve
    return StretchedExponentialFit(gamma).fit(t, v).report()


def tauberian_convert(gamma):
    if not isinstance(gamma, (int, float)) or not 0 < gamma < 1:
        raise DomainError("gamma must lie in (0, 1)")
    return gamma / (1.0 - gamma)


def sandwich_bounds(alpha, nu, C1, variational_min):
    """``[D1, C1] * nu**((alpha/2) d_w / d_alpha)`` with ``D1 = 2**(d_alpha - d_f) * min``."""
    c = constants(alpha)
    scale = nu**c.nu_exponent
    D1 = 2.0 ** (c.d_alpha - c.d_f) * variational_min
    return D1 * scale, C1 * scale


class LifschitzTailFit(BaseEstimator):
    """Slope of ``log(-log l([0, lam]))`` against ``log lam``.

    The window keeps the points where at least ``min_count`` pooled
    eigenvalues lie below ``lam`` (set through ``count``) and
    ``l([0, lam]) <= upper_level``.
    """

    def __init__(self, alpha=1.0, min_count=10, upper_level=math.exp(-1.0), tolerance=0.25, confidence=0.95):
        self.alpha = alpha
        self.min_count = min_count
        self.upper_level = upper_level
        self.tolerance = tolerance
        self.confidence = confidence

    def fit(self, X, y, count=None):
        lam = np.asarray(X, dtype=float).ravel()
        l = np.asarray(y, dtype=float).ravel()
        check_consistent_length(lam, l)
        count = np.arange(1, len(lam) + 1) if count is None else np.asarray(count)
        sel = (count >= self.min_count) & (l <= self.upper_level) & (l > 0) & (lam > 0)
        if sel.sum() < 3:
            raise DomainError("empty IDS range: fewer than 3 points in the fit window")
        x, yy = np.log(lam[sel]), np.log(-np.log(l[sel]))
        fit = stats.linregress(x, yy)
        q = stats.t.ppf(0.5 + 0.5 * self.confidence, sel.sum() - 2)
        self.slope_ = float(fit.slope)
        self.ci_ = (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr))
        self.intercept_ = float(fit.intercept)
        self.r2_ = float(fit.rvalue**2)
        self.window_ = (float(lam[sel].min()), float(lam[sel].max()))
        self.n_points_ = int(sel.sum())
        self.target_ = -constants(self.alpha).d_s / self.alpha
        return self

    @property
    def relative_error_(self):
        return abs(self.slope_ / self.target_ - 1.0)

    @property
    def stretched_(self):
        """Whether the slope is consistent with the stretched-exponential exponent."""
        return self.relative_error_ <= self.tolerance

    def report(self):
        check_is_fitted(self, "slope_")
        return FitReport(
            gamma=None,
            constant=math.exp(self.intercept_),
            intercept=self.intercept_,
            r2=self.r2_,
            window=self.window_,
            slope=self.slope_,
            ci=self.ci_,
            target=self.target_,
            extra={"stretched": self.stretched_, "n_points": self.n_points_, "relative_error": self.relative_error_},
        )


def lifschitz_slope(lam, l, alpha=1.0, count=None, **kwargs):
    return LifschitzTailFit(alpha, **kwargs).fit(lam, l, count).report()
