"""Batch front-end: ``phientropy <command> [--config PATH] [--out DIR] ...``.

Each command reads an optional JSON config (merged over its defaults),
writes ``<command>.json`` plus CSV traces into ``--out`` and exits with 0
(no violations), 2 (violations, reports still written) or 1 (bad config or
solver failure).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import PhiEntropyError

__all__ = ["COMMANDS", "RunConfig", "DEFAULTS", "run", "main", "config_hash"]

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2

DEFAULTS = {
    "check-cd": {"generator": {"preset": "ou", "dim": 1}, "grid": None},
    "check-admissible": {"phi": {"name": "power", "p": 1.5}},
    "local-ineq": {
        "semigroup": "ou",
        "kind": "phi",
        "phi": {"name": "power", "p": 1.5},
        "functions": ["1+exp(-x**2)", "exp(0.5*x)", "2+cos(x)"],
        "times": [0.1, 0.5, 1.0],
        "points": [-1.0, 0.0, 1.0],
        "directions": ["forward", "reverse"],
        "rho": None,
    },
    "refined-ineq": {
        "semigroup": "ou",
        "p": 1.5,
        "functions": ["1+0.5*cos(x)", "1+exp(-x**2)"],
        "times": [0.25, 0.5, 1.0],
        "points": [0.0, 0.5],
        "directions": ["forward", "reverse"],
        "rho": None,
    },
    "nonadmissible-ineq": {
        "semigroup": "ou",
        "p": 3.0,
        "alpha": 1.0,
        "beta": 0.0,
        "functions": ["1+exp(-x**2/4)"],
        "times": [0.25, 0.5],
        "points": [0.0, 1.0],
        "directions": ["forward"],
        "rho": None,
    },
    "beckner-map": {
        "measure": {"kind": "gauss_hermite", "order": 200},
        "g": "2**0.25*exp(-x**2/4)",
        "map": "refined",
        "p": [0.1, 0.5, 0.9, 1.0, 1.2, 1.5, 2.0, 3.0],
    },
    "integral-criterion": {
        "measure": {"kind": "gauss_hermite", "order": 200},
        "generator": {"preset": "ou", "dim": 1},
        "phi": {"name": "square"},
        "family": "v1",
        "rho": 1.0,
    },
    "helffer": {"p": 1.05, "box": [-12.0, 12.0], "n": 4096},
    "fokker-planck": {
        "problem": {
            "dim": 1,
            "drift": {"kind": "gradient", "V": "x**2/2"},
            "u0": "exp(-(x-2)**2/2)/sqrt(2*pi)",
            "box": [-10.0, 10.0],
            "n": 1024,
            "horizon": 8.0,
            "dt": 0.01,
            "save_every": 10,
        },
        "phis": ["square", "log"],
        "window": [3.0, 8.0],
        "rho": 1.0,
    },
    "mckean-vlasov": {
        "problem": {
            "V": "x**2/2",
            "W_kind": "cubic",
            "u0": "exp(-x**2/(2*0.25))/sqrt(2*pi*0.25)",
            "box": [-8.0, 8.0],
            "n": 800,
            "horizon": 4.0,
            "dt": 0.01,
            "particles": 2000,
            "particle_dt": 0.002,
        },
        "phis": ["square", "log"],
        "times": [0.5, 1.0, 2.0, 4.0],
        "c0": 0.125,
        "particles": True,
    },
    "golden-suite": {"p": [0.1, 0.5, 0.9], "expected": [0.061, 0.134, 0.103], "tolerance": 2e-3},
}

COMMANDS = tuple(DEFAULTS)


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    tolerance: float | None = None
    seed: int = 0
    family_version: str = "v1"

    def to_dict(self):
        return {"command": self.command, "params": self.params, "tolerance": self.tolerance,
                "seed": self.seed, "family_version": self.family_version}

    @classmethod
    def from_dict(cls, d):
        return cls(d["command"], copy.deepcopy(d.get("params", {})), d.get("tolerance"), int(d.get("seed", 0)),
                   d.get("family_version", "v1"))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def config_hash(config):
    return hashlib.sha256(config.to_json().encode()).hexdigest()[:16]


class ConfigError(ValueError):
    pass


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(command, path=None, seed=None, tolerance=None):
    """Defaults, then the config file, then command-line overrides."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    params = copy.deepcopy(DEFAULTS[command])
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}:1: config must be a JSON object")
        if "command" in user and user["command"] != command:
            raise ConfigError(f"{path}:1: config is for {user['command']!r}, not {command!r}")
        tolerance = user.get("tolerance", tolerance) if tolerance is None else tolerance
        seed = int(user.get("seed", 0)) if seed is None else seed
        params = _merge(params, user.get("params", {k: v for k, v in user.items() if k not in ("command", "tolerance", "seed")}))
    return RunConfig(command, params, tolerance, 0 if seed is None else int(seed))


# ---------------------------------------------------------------------------
# spec builders


def _generator(spec):
    from . import calculus

    if "preset" in spec:
        preset = spec["preset"]
        dim = int(spec.get("dim", 1))
        if preset in ("ou", "ornstein_uhlenbeck"):
            return calculus.ornstein_uhlenbeck(dim)
        if preset == "heat":
            return calculus.heat(dim)
        if preset == "gibbs":
            return calculus.gibbs_generator(spec["potential"], dim)
        raise ConfigError(f"unknown generator preset {preset!r}")
    return calculus.DiffusionGenerator.from_dict(spec)


def _measure(spec):
    from . import measures

    kind = spec.get("kind", "gauss_hermite")
    if kind == "gauss_hermite":
        return measures.gauss_hermite(int(spec.get("order", 200)), int(spec.get("dim", 1)))
    if kind == "gibbs":
        return measures.build_gibbs(spec["potential"], tuple(spec.get("box", (-12.0, 12.0))), int(spec.get("n", 4096)))
    raise ConfigError(f"unknown measure kind {kind!r}")


def _phi(spec):
    from .phi import catalog

    spec = dict(spec) if isinstance(spec, dict) else {"name": spec}
    name = spec.pop("name")
    spec.pop("params", None)
    return catalog(name, **spec)


def _semigroup(spec):
    from . import semigroups

    if spec == "ou":
        return semigroups.OrnsteinUhlenbeckSemigroup()
    if spec == "heat":
        return semigroups.HeatSemigroup()
    if isinstance(spec, dict) and "numeric" in spec:
        return semigroups.NumericSemigroup(_generator(spec["numeric"]))
    raise ConfigError(f"unknown semigroup {spec!r}")


# ---------------------------------------------------------------------------
# commands


def _sweep(fn, cases, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(lambda c: fn(*c), cases))
    return [fn(*c) for c in cases]


def _reports_result(reports, tol):
    from .inequalities import InequalityReport

    if tol is not None:
        for r in reports:
            r.atol, r.rtol = tol, tol
    bad = [r for r in reports if r.violated]
    worst = min(reports, key=lambda r: r.slack) if reports else None
    summary = {"n_checks": len(reports), "n_violations": len(bad),
               "worst": None if worst is None else worst.to_dict()}
    return summary, {"reports.csv": InequalityReport.to_csv(reports)}, bool(bad)


def cmd_check_cd(cfg, jobs):
    from .calculus import AuditGrid, cd_rho_estimate

    L = _generator(cfg.params["generator"])
    grid = cfg.params.get("grid")
    grid = None if grid is None else AuditGrid(tuple(tuple(b) for b in grid["box"]), float(grid["spacing"]))
    est = cd_rho_estimate(L, grid)
    return {"generator": L.to_dict(), **est.to_dict()}, {}, False


def cmd_check_admissible(cfg, jobs):
    from .phi import is_admissible

    phi = _phi(cfg.params["phi"])
    v = is_admissible(phi)
    return {"phi": phi.to_dict(), **v.to_dict()}, {}, not v.admissible


def _local_cases(p):
    return [(f, t, x, d) for f in p["functions"] for t in p["times"] for x in p["points"] for d in p["directions"]]


def cmd_local_ineq(cfg, jobs):
    from . import inequalities as ineq

    p = cfg.params
    P = _semigroup(p["semigroup"])
    rho = p.get("rho")
    rho = ineq._resolve_rho(P, rho)
    kind = p["kind"]
    if kind == "poincare":
        fn = lambda f, t, x, d: ineq.local_poincare(P, f, t, x, rho, d)
    elif kind == "lsi":
        fn = lambda f, t, x, d: ineq.local_lsi(P, f, t, x, rho, d)
    elif kind == "phi":
        phi = _phi(p["phi"])
        fn = lambda f, t, x, d: ineq.local_phi(P, phi, f, t, x, rho, d)
    else:
        raise ConfigError(f"unknown local inequality kind {kind!r}")
    reports = _sweep(fn, _local_cases(p), jobs)
    summary, files, bad = _reports_result(reports, cfg.tolerance)
    return {"rho": rho, **summary}, files, bad


def cmd_refined_ineq(cfg, jobs):
    from . import inequalities as ineq

    p = cfg.params
    P = _semigroup(p["semigroup"])
    rho = ineq._resolve_rho(P, p.get("rho"))
    reports = _sweep(lambda f, t, x, d: ineq.refined_phi_p(P, float(p["p"]), f, t, x, rho, d), _local_cases(p), jobs)
    summary, files, bad = _reports_result(reports, cfg.tolerance)
    return {"rho": rho, **summary}, files, bad


def cmd_nonadmissible_ineq(cfg, jobs):
    from . import inequalities as ineq
    from .errors import WindowError

    p = cfg.params
    P = _semigroup(p["semigroup"])
    rho = ineq._resolve_rho(P, p.get("rho"))
    params = ineq.NonAdmissibleParams(float(p["p"]), float(p["alpha"]), float(p["beta"]))
    reports, windows = [], []
    for f, t, x, d in _local_cases(p):
        try:
            reports.append(ineq.nonadmissible_local(P, params, f, t, x, rho, d))
        except WindowError as exc:
            windows.append({"f": f, "t": t, "x": x, "direction": d, "t_f": exc.t_f, "message": str(exc)})
    summary, files, bad = _reports_result(reports, cfg.tolerance)
    return {"rho": rho, "b": params.b, "c_p": params.c_p, "outside_window": windows, **summary}, files, bad


def cmd_beckner_map(cfg, jobs):
    from . import inequalities as ineq

    p = cfg.params
    mu = _measure(p["measure"])
    fn = ineq.refined_map if p["map"] == "refined" else ineq.beckner_map
    res = fn(mu, p["g"], p["p"])
    return res.to_dict(), {f"{res.name}.dat": res.to_gnuplot()}, not res.nonincreasing


def cmd_integral_criterion(cfg, jobs):
    from .families import test_family
    from .inequalities import integral_criterion

    p = cfg.params
    mu = _measure(p["measure"])
    L = _generator(p["generator"])
    phi = _phi(p["phi"])
    fam = test_family(p.get("family", "v1"), positive=phi.domain.lo >= 0)
    rep = integral_criterion(mu, L, phi, fam, p.get("rho"))
    tol = 1e-8 if cfg.tolerance is None else cfg.tolerance
    bad = rep.worst is not None and rep.worst < -tol
    return rep.to_dict(), {}, bad


def cmd_helffer(cfg, jobs):
    from .inequalities import InequalityReport, helffer_counterexample

    p = cfg.params
    rep = helffer_counterexample(float(p["p"]), tuple(p["box"]), int(p["n"]))
    # the expected outcome is a negative numerator together with a valid inequality
    bad = not (rep.criterion_fails and rep.ergodic_holds)
    return rep.to_dict(), {"ergodic.csv": InequalityReport.to_csv(rep.ergodic)}, bad


def cmd_fokker_planck(cfg, jobs):
    from .fokkerplanck import FPProblem, decay_rate, flux_residual, solve_fp

    p = cfg.params
    prob = FPProblem.from_dict(p["problem"])
    sol = solve_fp(prob, p["phis"])
    fits = {name: decay_rate(sol, name, tuple(p["window"])).to_dict() for name in sol.entropies}
    rho = p.get("rho")
    bad = False
    if rho is not None and rho > 0:
        bad = any(f["slope"] > -2.0 * rho * 0.9 for f in fits.values())
    monotone = {k: bool(np.all(np.diff(v) <= 1e-12 * max(1.0, v[0]))) for k, v in sol.entropies.items()}
    bad = bad or not all(monotone.values())
    summary = {"fits": fits, "entropy_nonincreasing": monotone, "mass_drift": float(np.ptp(sol.mass)),
               "min_density": sol.min_density, "flux_residual": flux_residual(prob),
               "stationary_rule": sol.stationary_rule, "notes": sol.notes}
    return summary, {"traces.csv": sol.traces_csv()}, bad


def cmd_mckean_vlasov(cfg, jobs):
    from .mckeanvlasov import MKVProblem, PropagationSchedule, check_propagation, simulate_particles, solve_mkv_pde

    p = cfg.params
    prob = MKVProblem.from_dict(p["problem"])
    sol = solve_mkv_pde(prob)
    audit = prob.audit()
    sched = PropagationSchedule(float(p["c0"]), audit["rho"])
    out, bad = {"audit": audit, "c_final": float(sched(max(p["times"])))}, False
    csvs = {"pde_traces.csv": sol.traces_csv()}
    for name in p["phis"]:
        rep = check_propagation(prob, name, sched, times=tuple(p["times"]), solution=sol)
        out[f"propagation[{name}]"] = {"precondition_holds": rep.precondition_holds, "violated": rep.violated,
                                       "worst": rep.worst.to_dict()}
        bad = bad or rep.violated
    if p.get("particles"):
        times = [0.0] + list(p["times"])
        tr = simulate_particles(prob, seed=cfg.seed, times=times)
        m, v = tr.moments()
        se_m, se_v = tr.standard_errors()
        pm, pv = sol.moments()
        idx = [int(np.argmin(np.abs(sol.times - t))) for t in tr.times]
        z_m = ((m - pm[idx]) / se_m).tolist()
        z_v = ((v - pv[idx]) / np.where(se_v > 0, se_v, np.inf)).tolist()
        out["particles"] = {"seed": cfg.seed, "N": int(tr.positions.shape[1]), "times": tr.times.tolist(),
                            "mean_z": z_m, "variance_z": z_v}
        bad = bad or max(map(abs, z_m + z_v)) > 4.0
    return out, csvs, bad


def cmd_golden_suite(cfg, jobs):
    from .calculus import cd_rho_estimate, heat, ornstein_uhlenbeck
    from .inequalities import counterexample_p_gt_2, refined_map, violating_lambda
    from .measures import gauss_hermite

    p = cfg.params
    # the displayed density sqrt(2) e^{-x^2/2} plays the role of g^2
    res = refined_map(gauss_hermite(200), "2**0.25*exp(-x**2/4)", p["p"])
    tol = float(p["tolerance"])
    values = res.values.tolist()
    ok_values = all(abs(v - e) <= tol for v, e in zip(values, p["expected"]))
    rho_ou = cd_rho_estimate(ornstein_uhlenbeck(1)).rho_star
    rho_heat = cd_rho_estimate(heat(1)).rho_star
    cex = counterexample_p_gt_2(3.0, 3.0)
    lams = {str(C): violating_lambda(0.5, C) for C in (1.0, 10.0, 100.0)}
    checks = {
        "refined_map": ok_values,
        "cd_ou": abs(rho_ou - 1.0) <= 1e-9,
        "cd_heat": abs(rho_heat) <= 1e-12,
        "counterexample_p_gt_2": cex == -19.25,
        "counterexample_p_lt_1": all(l is not None and l <= 50 for l in lams.values()),
    }
    summary = {"refined_map": dict(zip(map(str, p["p"]), values)), "expected": p["expected"],
               "rho_ou": rho_ou, "rho_heat": rho_heat, "counterexample_p_gt_2": cex,
               "violating_lambda": lams, "checks": checks}
    return summary, {}, not all(checks.values())


HANDLERS = {
    "check-cd": cmd_check_cd,
    "check-admissible": cmd_check_admissible,
    "local-ineq": cmd_local_ineq,
    "refined-ineq": cmd_refined_ineq,
    "nonadmissible-ineq": cmd_nonadmissible_ineq,
    "beckner-map": cmd_beckner_map,
    "integral-criterion": cmd_integral_criterion,
    "helffer": cmd_helffer,
    "fokker-planck": cmd_fokker_planck,
    "mckean-vlasov": cmd_mckean_vlasov,
    "golden-suite": cmd_golden_suite,
}


# ---------------------------------------------------------------------------
# driver


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _write_atomic(path, text):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run(config, out_dir=None, jobs=1):
    """Run one command; returns ``(exit_code, summary)`` and writes the report files."""
    np.random.seed(config.seed)
    summary, files, bad = HANDLERS[config.command](config, jobs)
    report = {"command": config.command, "version": __version__, "config": config.to_dict(),
              "config_hash": config_hash(config), "tolerance": config.tolerance, "seed": config.seed,
              "violations": bad, "result": summary}
    report = _to_jsonable(report)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        stem = config.command.replace("-", "_")
        _write_atomic(os.path.join(out_dir, f"{stem}.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
        for name, text in files.items():
            header = f"# config_hash={report['config_hash']} tolerance={config.tolerance}\n"
            _write_atomic(os.path.join(out_dir, f"{stem}_{name}"), header + text)
    return (EXIT_VIOLATION if bad else EXIT_OK), report


def build_parser():
    ap = argparse.ArgumentParser(prog="phientropy", description="Phi-entropy inequality laboratory")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config merged over the defaults")
        sp.add_argument("--out", help="output directory for JSON and CSV reports")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
        sp.add_argument("--tolerance", type=float, default=None, help="override the violation tolerance")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    if args.command is None:
        ap.print_usage(sys.stderr)
        print("error: missing command", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = load_config(args.command, args.config, args.seed, args.tolerance)
        if args.print_config:
            print(cfg.to_json())
            return EXIT_OK
        code, report = run(cfg, args.out, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (PhiEntropyError, ValueError, KeyError, TypeError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps({"command": report["command"], "config_hash": report["config_hash"],
                      "violations": report["violations"]}))
    return code


if __name__ == "__main__":
    sys.exit(main())
