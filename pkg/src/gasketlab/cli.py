"""Command-line entry point: ``gasketlab <command> [options]``.

Every run writes into its own directory a ``manifest.txt`` (flat key=value,
enough to replay the run with ``--manifest``), CSV tables with parameter
headers and a short markdown report. Failures leave an ``error.txt`` record.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from ._io import format_value, read_keyvalue, read_table, write_keyvalue, write_table
from ._validation import DomainError, NumericError, ResourceError

log = logging.getLogger("gasketlab")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _ints2(text):
    vals = [int(x) for x in (text if isinstance(text, (list, tuple)) else str(text).split(","))]
    if len(vals) != 2:
        raise ValueError("expected two integers i,j")
    return vals


COMMON = {"alpha": (float, 1.0), "seed": (int, 0)}

SCHEMA = {
    "spectrum": {"M": (int, 0), "m": (int, 2), "pad": (int, 2), "nu": (float, 0.0), "a": (float, 0.125), "k": (int, 0)},
    "ids": {
        "M": (int, 2),
        "m": (int, 4),
        "pad": (int, 2),
        "nu": (float, 1.0),
        "a": (float, 0.125),
        "n_clouds": (int, 20),
        "t_min": (float, 1.0),
        "t_max": (float, 100.0),
        "n_t": (int, 25),
    },
    "sausage": {
        "M": (int, 2),
        "m": (int, 6),
        "nu": (_floats, [1.0]),
        "a": (float, 0.125),
        "t": (_floats, [0.25, 0.5, 1.0]),
        "n_paths": (int, 500),
        "x0": (_ints2, [0, 0]),
        "method": (str, "exact"),
        "dt": (float, 0.0),
        "refine_paths": (int, 100),
    },
    "survival": {
        "M": (int, 2),
        "m": (int, 4),
        "pad": (int, 2),
        "nu": (float, 1.0),
        "a": (float, 0.125),
        "t": (_floats, [0.5, 1.0, 2.0, 4.0, 8.0]),
        "n_clouds": (int, 20),
        "n_paths": (int, 0),
    },
    "enlarge-check": {
        "m": (int, 5),
        "nu": (float, 5.0),
        "a": (float, 0.25),
        "b": (float, 0.5),
        "K": (float, 50.0),
        "delta": (float, 1.0),
        "R": (float, 4.0),
        "eps": (_floats, [0.5, 0.25, 0.125, 0.0625]),
        "kappa": (float, 0.0),
    },
    "fit": {
        "input": (str, ""),
        "bm_depth": (int, 6),
        "variational_depth": (int, 5),
        "variational_k": (int, 3),
        "restarts": (int, 4),
        "min_count": (int, 10),
    },
    "selftest": {"perturb_renorm": (float, 0.0)},
}

POSITIVE = {"a", "t_min", "t_max", "b", "K", "delta", "R"}
NONNEG = {"nu", "dt", "kappa", "perturb_renorm"}
COUNTS = {"M", "m", "pad", "k", "n_clouds", "n_t", "n_paths", "refine_paths", "bm_depth", "variational_depth", "variational_k", "restarts", "min_count", "seed"}

EXIT_CODES = {"validation": 2, "resource": 3, "input not found": 4, "numeric": 5, "selftest failure": 1, "internal": 1}


class ConfigError(DomainError):
    def __init__(self, problems):
        self.problems = problems
        super().__init__("; ".join(problems))


def parse_config(command, raw):
    """Typed config for ``command`` from string values; lists every bad field."""
    schema = dict(COMMON, **SCHEMA[command])
    cfg, problems = {}, []
    unknown = sorted(set(raw) - set(schema) - {"command", "code_version", "seed_scheme", "out"})
    problems += [f"{k}: unknown field" for k in unknown]
    for key, (conv, default) in schema.items():
        value = raw.get(key, default)
        try:
            value = conv(value) if not isinstance(value, type(default)) or conv in (_floats, _ints2) else value
        except (TypeError, ValueError) as exc:
            problems.append(f"{key}: cannot parse {value!r} ({exc})")
            continue
        cfg[key] = value
        vals = value if isinstance(value, list) else [value]
        if any(isinstance(v, float) and not math.isfinite(v) for v in vals):
            problems.append(f"{key}: must be finite")
        elif key == "alpha" and not 0 < value < 2:
            problems.append("alpha: must lie in (0, 2)")
        elif key in POSITIVE and any(not (v > 0 and math.isfinite(v)) for v in vals):
            problems.append(f"{key}: must be positive")
        elif key in NONNEG and any(v < 0 for v in vals):
            problems.append(f"{key}: must be nonnegative")
        elif key in COUNTS and any(v < 0 for v in vals):
            problems.append(f"{key}: must be a nonnegative integer")
        elif key in ("t", "eps") and any(v <= 0 for v in vals):
            problems.append(f"{key}: entries must be positive")
    if command == "ids" and cfg.get("t_max", 1) < cfg.get("t_min", 0):
        problems.append("t_max: must be at least t_min")
    if command in ("ids", "survival") and cfg.get("n_clouds", 1) < 1:
        problems.append("n_clouds: must be at least 1")
    if command == "sausage" and cfg.get("method") not in ("exact", "grid"):
        problems.append("method: must be 'exact' or 'grid'")
    if command == "fit" and not cfg.get("input"):
        problems.append("input: required")
    if problems:
        raise ConfigError(problems)
    return cfg


# --- commands ---


def _t_grid(cfg):
    return np.geomspace(cfg["t_min"], cfg["t_max"], cfg["n_t"])


def run_spectrum(cfg, out, params):
    from .graph import build_graph
    from .ids import killed_spectrum
    from .obstacles import sample_cloud

    g = build_graph(cfg["M"], cfg["m"])
    cloud = sample_cloud(cfg["M"], cfg["nu"], cfg["a"], seed=cfg["seed"])
    spec = killed_spectrum(g, cloud, cfg["a"], cfg["alpha"], cfg["pad"])
    ev = spec.eigenvalues if cfg["k"] == 0 else spec.eigenvalues[: cfg["k"]]
    params = dict(params, n_graph_vertices=g.n_vertices, n_keep=len(spec), n_centers=len(cloud), keep_hash=spec.provenance.get("keep_hash", ""))
    write_table(os.path.join(out, "eigenvalues.csv"), ["index", "eigenvalue"], enumerate(map(float, ev)), params)
    return [f"- graph vertices: {g.n_vertices}", f"- kept vertices: {len(spec)}", f"- lowest eigenvalue: {ev[0] if len(ev) else 'none'}"]


def run_ids(cfg, out, params):
    from .ids import KilledStableIDS, cloud_ensemble

    t = _t_grid(cfg)
    clouds = cloud_ensemble(cfg["M"], cfg["nu"], cfg["a"], cfg["n_clouds"], cfg["seed"])
    est = KilledStableIDS(cfg["alpha"], cfg["M"], cfg["m"], cfg["pad"], cfg["a"], tuple(t)).fit(clouds)
    for k, s in enumerate(est.spectra_):
        write_table(
            os.path.join(out, "eigenvalues", f"cloud_{k:04d}.csv"),
            ["index", "eigenvalue"],
            enumerate(map(float, s.eigenvalues)),
            dict(params, cloud=k, n_centers=len(clouds[k])),
        )
    lam, l, count = est.ids_table()
    write_table(os.path.join(out, "ids_table.csv"), ["lambda", "l", "count"], zip(map(float, lam), map(float, l), map(int, count)), params)
    curve = est.laplace_curve()
    write_table(
        os.path.join(out, "laplace.csv"),
        ["t", "value", "stderr"],
        zip(map(float, curve.t), map(float, curve.value), map(float, curve.stderr)),
        params,
    )
    return [f"- clouds: {len(clouds)}", f"- pooled eigenvalues: {int(count[-1]) if len(count) else 0}", f"- L(t_min) = {curve.value[0]:.6g}, L(t_max) = {curve.value[-1]:.6g}"]


def run_sausage(cfg, out, params):
    from .graph import build_graph
    from .sausage import PathSource, dt_sensitivity, sausage_functional

    g = build_graph(cfg["M"], cfg["m"])
    x0 = g.vertex_of(cfg["x0"])
    dt = cfg["dt"] or None
    src = PathSource(g, cfg["alpha"], cfg["method"], dt)
    rows = []
    for nu in cfg["nu"]:
        for t in cfg["t"]:
            est = sausage_functional(x0, t, nu, cfg["a"], cfg["alpha"], g, cfg["n_paths"], cfg["seed"], source=src)
            rows.append(["estimate", nu, t, est.mean, est.stderr, est.n_samples])
    tmax = max(cfg["t"])
    v1, v2, rel, flagged = dt_sensitivity(x0, tmax, cfg["a"], cfg["alpha"], g, cfg["refine_paths"], cfg["seed"], dt)
    rows += [
        ["volume_dt", "", tmax, v1, "", cfg["refine_paths"]],
        ["volume_dt_half", "", tmax, v2, "", cfg["refine_paths"]],
        ["dt_relative_change", "", tmax, rel, "", int(flagged)],
    ]
    write_table(os.path.join(out, "sausage.csv"), ["kind", "nu", "t", "mean", "stderr", "n"], rows, params)
    note = "UNRESOLVED jump bias" if flagged else "within tolerance"
    return [f"- estimates: {len(rows) - 3}", f"- dt refinement: relative change {rel:.3%} ({note})"]


def run_survival(cfg, out, params):
    from .sausage import averaged_survival_vs_trace

    rep = averaged_survival_vs_trace(
        cfg["M"], cfg["m"], cfg["pad"], cfg["nu"], cfg["a"], cfg["alpha"], cfg["t"], cfg["n_clouds"], cfg["seed"], cfg["n_paths"]
    )
    cols = ["t", "A", "A_stderr", "B", "B_stderr"]
    series = [rep.t, rep.A, rep.A_stderr, rep.B, rep.B_stderr]
    if rep.B_mc is not None:
        cols += ["B_mc", "B_mc_stderr"]
        series += [rep.B_mc, rep.B_mc_stderr]
    write_table(os.path.join(out, "survival.csv"), cols, zip(*[map(float, s) for s in series]), params)
    return [f"- B <= A + 3 joint stderr on the whole grid: {rep.holds()}"]


def run_enlarge(cfg, out, params):
    from .graph import build_graph
    from .ids import check_enlargement
    from .obstacles import doubling_constant, sample_cloud

    g = build_graph(0, cfg["m"])
    kappa = cfg["kappa"] or doubling_constant(0, cfg["m"], seed=cfg["seed"])
    cloud = sample_cloud(0, cfg["nu"], cfg["a"], seed=cfg["seed"])
    rows = []
    for eps in cfg["eps"]:
        rep = check_enlargement(g, cloud, cfg["R"], kappa, cfg["b"], eps, cfg["K"], cfg["delta"], cfg["alpha"])
        rows.append([eps, rep.lambda_theta, rep.lambda_b, rep.n_good, rep.n_centers, int(rep.holds)])
    params = dict(params, kappa_used=kappa)
    write_table(os.path.join(out, "enlarge.csv"), ["eps", "lambda_theta", "lambda_b", "n_good", "n_centers", "holds"], rows, params)
    return [f"- kappa (empirical doubling constant): {kappa:.4g}", f"- inequality holds at eps: {[r[0] for r in rows if r[-1]]}"]


def run_fit(cfg, out, params):
    from .asymptotics import (
        fit_stretched_exponential,
        lambda_bm_estimate,
        lifschitz_slope,
        lower_bound_certificate,
        sandwich_bounds,
        tauberian_convert,
        volume_constant,
    )
    from .geometry import constants
    from .ids import LaplaceCurve, search_variational
    from .obstacles import default_center_depth

    src = cfg["input"]
    lap_path = os.path.join(src, "laplace.csv") if os.path.isdir(src) else src
    if not os.path.exists(lap_path):
        raise FileNotFoundError(f"input not found: {lap_path}")
    meta, _, rows = read_table(lap_path)
    alpha, nu, a, M, m = float(meta["alpha"]), float(meta["nu"]), float(meta["a"]), int(meta["M"]), int(meta["m"])
    c = constants(alpha)
    t, v, se = (np.array([float(r[i]) for r in rows]) for i in range(3))
    curve = LaplaceCurve(t, v, se, {"M": M})
    fit = fit_stretched_exponential(curve, c.gamma)
    bm = lambda_bm_estimate(cfg["bm_depth"])
    c_vol = volume_constant(M, m, a, default_center_depth(M, a), alpha)
    cert = lower_bound_certificate(curve, bm.value, nu, a, alpha, c_vol, M)
    var = search_variational(alpha, cfg["variational_depth"], cfg["variational_k"], cfg["restarts"], cfg["seed"])
    lo, hi = sandwich_bounds(alpha, nu, cert.C1, var.value)
    results = [
        ["gamma", c.gamma, "", "", "", ""],
        ["stretched_constant", fit.constant, "", "", fit.window[0], fit.window[1]],
        ["stretched_r2", fit.r2, "", "", fit.window[0], fit.window[1]],
        ["sandwich_lower", lo, "", "", "", ""],
        ["sandwich_upper", hi, "", "", "", ""],
        ["lambda_bm", bm.value, bm.value - bm.uncertainty, bm.value + bm.uncertainty, "", ""],
        ["certificate_C1", cert.C1, "", "", "", ""],
        ["volume_constant", c_vol, "", "", "", ""],
        ["certificate_min_margin", float(cert.margin[cert.covered].min()) if cert.covered.any() else float("nan"), "", "", "", ""],
        ["tauberian_exponent", tauberian_convert(c.gamma), "", "", "", ""],
    ]
    lines = [
        f"- stretched-exponential constant {fit.constant:.4g} (R^2 {fit.r2:.4f}) on t in [{fit.window[0]:.4g}, {fit.window[1]:.4g}]",
        f"- sandwich [{lo:.4g}, {hi:.4g}]: {'inside' if lo <= fit.constant <= hi else 'OUTSIDE'}",
        f"- certificate holds on covered times: {cert.holds}",
    ]
    ids_path = os.path.join(os.path.dirname(lap_path), "ids_table.csv")
    slope = None
    if os.path.exists(ids_path):
        _, _, irows = read_table(ids_path)
        lam, l, count = (np.array([float(r[i]) for r in irows]) for i in range(3))
        try:
            slope = lifschitz_slope(lam, l, alpha, count, min_count=cfg["min_count"])
        except DomainError as exc:
            lines.append(f"- Lifschitz slope not fitted: {exc}")
            slope = None
    if slope is not None:
        results.append(["lifschitz_slope", slope.slope, slope.ci[0], slope.ci[1], slope.window[0], slope.window[1]])
        results.append(["lifschitz_target", slope.target, "", "", "", ""])
        lines.append(f"- Lifschitz slope {slope.slope:.4f} (target {slope.target:.4f}) over lambda in [{slope.window[0]:.4g}, {slope.window[1]:.4g}]")
    params = dict(params, source_alpha=alpha, source_nu=nu, source_a=a, source_M=M, source_m=m)
    write_table(os.path.join(out, "fit.csv"), ["quantity", "value", "ci_low", "ci_high", "window_low", "window_high"], results, params)
    return lines


def run_selftest(cfg, out, params):
    from .selftest import run_all

    results = run_all(seed=cfg["seed"], perturb_renorm=cfg["perturb_renorm"])
    write_table(os.path.join(out, "selftest.csv"), ["invariant", "passed", "detail"], [[r.name, int(r.passed), r.detail] for r in results], params)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise SelftestFailure(failed)
    return [f"- {len(results)} invariants passed"]


class SelftestFailure(Exception):
    pass


HELP = {
    "spectrum": "spectrum of the killed stable generator for one cloud",
    "ids": "IDS and averaged Laplace transform over a cloud ensemble",
    "sausage": "Monte Carlo stable sausage functional",
    "survival": "averaged survival against the IDS trace",
    "enlarge-check": "eigenvalue enlargement check on a good/bad classification",
    "fit": "stretched-exponential fit, sandwich and certificate from an ids run",
    "selftest": "reduced-size invariant suite",
}

RUNNERS = {
    "spectrum": run_spectrum,
    "ids": run_ids,
    "sausage": run_sausage,
    "survival": run_survival,
    "enlarge-check": run_enlarge,
    "fit": run_fit,
    "selftest": run_selftest,
}


def build_parser():
    p = argparse.ArgumentParser(prog="gasketlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMA.items():
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", help="flat key=value file with defaults")
        sp.add_argument("--manifest", help="replay the configuration recorded in a manifest")
        sp.add_argument("--out", help="run directory (default runs/<command>)")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in dict(COMMON, **schema):
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return p


def _error(out, kind, message):
    record = {"status": "error", "kind": kind, "message": message, "code_version": __version__}
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            write_keyvalue(os.path.join(out, "error.txt"), record)
        except OSError:
            pass
    print(f"error: kind={kind}; message={message}", file=sys.stderr)
    return EXIT_CODES[kind]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    command = args.command
    out = args.out or os.path.join("runs", command)
    raw = {}
    try:
        for src in (args.config, args.manifest):
            if src:
                if not os.path.exists(src):
                    raise FileNotFoundError(f"input not found: {src}")
                loaded = read_keyvalue(src)
                if src == args.manifest and loaded.get("command", command) != command:
                    raise ConfigError([f"command: manifest records {loaded.get('command')!r}, not {command!r}"])
                raw.update(loaded)
        schema = dict(COMMON, **SCHEMA[command])
        raw.update({k: getattr(args, k) for k in schema if getattr(args, k) is not None})
        cfg = parse_config(command, raw)
    except ConfigError as exc:
        return _error(out, "validation", str(exc))
    except FileNotFoundError as exc:
        return _error(out, "input not found", str(exc))
    except ValueError as exc:
        return _error(out, "validation", str(exc))

    os.makedirs(out, exist_ok=True)
    manifest = dict(command=command, code_version=__version__, seed_scheme="numpy SeedSequence(seed).spawn(n)[task]")
    manifest.update(cfg)
    write_keyvalue(os.path.join(out, "manifest.txt"), manifest)
    params = dict(command=command, **cfg)
    try:
        lines = RUNNERS[command](cfg, out, params)
    except FileNotFoundError as exc:
        return _error(out, "input not found", str(exc))
    except (ConfigError, DomainError) as exc:
        return _error(out, "validation", str(exc))
    except ResourceError as exc:
        return _error(out, "resource", str(exc))
    except NumericError as exc:
        return _error(out, "numeric", str(exc))
    except SelftestFailure as exc:
        return _error(out, "selftest failure", f"failed invariants: {', '.join(exc.args[0])}")
    except Exception as exc:  # keep a record even for unexpected failures
        log.debug("unexpected failure", exc_info=True)
        return _error(out, "internal", f"{type(exc).__name__}: {exc}")
    with open(os.path.join(out, "report.md"), "w") as fh:
        fh.write(f"# gasketlab {command}\n\n")
        fh.write("| parameter | value |\n|---|---|\n")
        for k, v in cfg.items():
            fh.write(f"| {k} | {format_value(v)} |\n")
        fh.write("\n## Results\n\n" + "\n".join(lines) + "\n")
    log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
