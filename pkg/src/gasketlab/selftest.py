"""Reduced-size invariant suite behind ``gasketlab selftest``."""

from contextlib import contextmanager
from dataclasses import dataclass
import math

import numpy as np

from . import graph as _graph
from . import ids as _ids
from .asymptotics import tauberian_convert
from .geometry import Address, constants, label_index, project0, vertex_label
from .graph import build_graph, dirichlet_restrict, laplacian, spectrum
from .stable import SubordinatorSpec, kernel_scaling_check, sample_subordinator_increment, subordinator_density


@dataclass(frozen=True)
class InvariantResult:
    name: str
    passed: bool
    detail: str = ""


@contextmanager
def renorm_perturbation(p):
    """Temporarily multiply the ``5**k`` renormalisation base by ``1 + p`` (fault injection)."""
    old = _graph.RENORM_PERTURBATION
    _graph.RENORM_PERTURBATION = float(p)
    _clear_caches()
    try:
        yield
    finally:
        _graph.RENORM_PERTURBATION = old
        _clear_caches()


def _clear_caches():
    for f in (_ids.stable_setting, _ids.brownian_setting, _ids.reflected_setting):
        f.cache_clear()


def corner_dirichlet_eigenvalue(M, m):
    g = build_graph(M, m)
    n = 1 << m
    corners = [g.vertex_of(p) for p in ((0, 0), (n, 0), (0, n))]
    keep = np.setdiff1d(np.arange(g.n_vertices), corners)
    return float(spectrum(dirichlet_restrict(laplacian(g), keep), 1)[0])


# --- invariants; each returns (passed, detail) ---


def inv_projection_idempotent(rng):
    for _ in range(200):
        M = int(rng.integers(0, 4))
        k = int(rng.integers(M, M + 4))
        a = Address(M, tuple(rng.integers(0, 3, size=k)))
        p = project0(a)
        if project0(p) != p:
            return False, f"{a} -> {p} -> {project0(p)}"
    return True, "200 random cells"


def inv_label_periodic(rng):
    n, m = rng.integers(-50, 50, size=(2, 100))
    ok = all(vertex_label(a + 3, b) == vertex_label(a, b) == vertex_label(a + 1, b + 1) for a, b in zip(n, m))
    ok &= all(label_index(a, b) in (0, 1, 2) for a, b in zip(n, m))
    return ok, "shifts by 3 and (1,1)"


def inv_measure(rng):
    g = build_graph(2, 4)
    total = g.vertex_weight.sum()
    return abs(total - 9.0) < 1e-12, f"mu(G^(2)) = {total:.15g}"


def inv_dirichlet_ratio(rng):
    worst = 0.0
    for m in (2, 3):
        r = corner_dirichlet_eigenvalue(0, m) / corner_dirichlet_eigenvalue(1, m)
        worst = max(worst, abs(r / 5.0 - 1.0))
    return worst <= 1e-10, f"max |ratio/5 - 1| = {worst:.2e}"


def inv_kernel_scaling(rng):
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        rep = kernel_scaling_check(build_graph(1, 3), build_graph(0, 3), alpha, 0.7)
        worst = max(worst, rep.relative_deviation)
    return worst <= 1e-10, f"max relative deviation = {worst:.2e}"


def inv_subordinator_laplace(rng):
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        s = sample_subordinator_increment(SubordinatorSpec(alpha), 1.0, 20000, rng)
        for u in (0.5, 1.0, 2.0):
            x = np.exp(-u * s)
            z = abs(x.mean() - math.exp(-(u ** (alpha / 2)))) / (x.std(ddof=1) / math.sqrt(len(x)))
            worst = max(worst, z)
    # 9 checks: 4 standard errors keeps the family-wise false alarm rate below 1e-3
    return worst <= 4.0, f"max |z| = {worst:.2f}"


def inv_density_mass(rng):
    from scipy import integrate

    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        f = lambda u: subordinator_density(alpha, 1.0, u)
        mass = sum(integrate.quad(f, lo, hi, limit=200)[0] for lo, hi in ((0, 0.1), (0.1, 1), (1, 10), (10, np.inf)))
        worst = max(worst, abs(mass - 1.0))
    return worst <= 1e-5, f"max |mass - 1| = {worst:.2e}"


def _clouds(rng, n, M=1, nu=2.0, a=0.25):
    seed = int(rng.integers(2**32))
    return _ids.cloud_ensemble(M, nu, a, n, seed)


def inv_trace_identity(rng):
    g = build_graph(1, 3)
    t = np.array([0.3, 1.0, 3.0])
    worst = 0.0
    for c in _clouds(rng, 5):
        op = _ids.killed_operator(g, c, None, 1.0, 1)
        spec = _ids.killed_spectrum(g, c, None, 1.0, 1)
        a = _ids.laplace_transform(_ids.EmpiricalIDS(spec, 1), t)
        b = np.array([_ids.trace_laplace(op, 1, s) for s in t])
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))))
    return worst <= 1e-10, f"max relative difference = {worst:.2e}"


def inv_chen_song(rng):
    g = build_graph(1, 3)
    bad = 0
    for c in _clouds(rng, 5):
        s = _ids.killed_operator(g, c, None, 1.0, 1)
        b = _ids.killed_brownian_operator(g, c, None, 1)
        if s is None:
            continue
        if spectrum(s, 1)[0] > spectrum(b, 1)[0] ** 0.5 * (1 + 1e-10):
            bad += 1
    return bad == 0, f"{bad} violations"


def inv_antitone_nu(rng):
    """Thinned (smaller) clouds have the larger Laplace transform at every t."""
    t = np.geomspace(0.5, 20, 6)
    est = _ids.KilledStableIDS(1.0, 1, 3, 1, 0.25, tuple(t))
    bad = 0
    for c in _clouds(rng, 5, nu=4.0):
        thin = c.thin(2.0)
        small = c.with_radius(0.125)
        L, Lt, Ls = est.fit([c]).transform([c, thin, small])
        bad += int(np.any(Lt < L - 1e-12) or np.any(Ls < L - 1e-12) or np.any(np.diff(L) > 1e-12))
    return bad == 0, f"{bad} violations of antitonicity in nu, a, t"


def inv_interlacing(rng):
    g = build_graph(1, 3)
    H = _graph.fractional_power(laplacian(g), 0.5)
    keep = np.sort(rng.choice(g.n_vertices, g.n_vertices - 3, replace=False))
    full = np.linalg.eigvalsh(H.matrix)
    sub = np.linalg.eigvalsh(H.matrix[np.ix_(keep, keep)])
    k = len(full) - len(sub)
    ok = np.all(full[: len(sub)] <= sub + 1e-10) and np.all(sub <= full[k:] + 1e-10)
    return bool(ok), "Cauchy interlacing for a principal submatrix"


def inv_survival_trace(rng):
    from .sausage import averaged_survival_vs_trace

    rep = averaged_survival_vs_trace(1, 3, 1, 2.0, 0.25, 1.0, [0.5, 2.0, 8.0], 5, int(rng.integers(2**32)))
    return rep.holds(), "B <= A within 3 joint stderr"


def inv_tauberian(rng):
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        c = constants(alpha)
        worst = max(worst, abs(tauberian_convert(c.d_f / c.d_alpha) - c.d_s / alpha))
    return worst <= 1e-12, f"max deviation = {worst:.1e}"


INVARIANTS = [
    ("projection idempotence", inv_projection_idempotent),
    ("label periodicity", inv_label_periodic),
    ("gasket measure", inv_measure),
    ("scaling: Dirichlet eigenvalue ratio 5", inv_dirichlet_ratio),
    ("scaling: stable kernel identity", inv_kernel_scaling),
    ("subordinator Laplace transform", inv_subordinator_laplace),
    ("subordinator density mass", inv_density_mass),
    ("trace identity", inv_trace_identity),
    ("Chen-Song comparison", inv_chen_song),
    ("Cauchy interlacing", inv_interlacing),
    ("antitonicity of L", inv_antitone_nu),
    ("survival below trace", inv_survival_trace),
    ("Tauberian arithmetic", inv_tauberian),
]


def run_all(seed=0, perturb_renorm=0.0, names=None):
    out = []
    rng = np.random.default_rng(seed)
    with renorm_perturbation(perturb_renorm):
        for name, fn in INVARIANTS:
            if names is not None and name not in names:
                continue
            try:
                passed, detail = fn(rng)
            except Exception as exc:  # a crash is a failure of that invariant
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            out.append(InvariantResult(name, bool(passed), detail))
    return out
