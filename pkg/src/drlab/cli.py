"""Command-line front end.

Subcommands mirror the library: ``psi``, ``classify``, ``curve``,
``free-energy``, ``lf``, ``clf``, ``mc validate`` and
``lab {critical, n-star, c-star, c-v, euler, sandwich}``.

A JSON config file (flat keys matching the flag names) may supply any
value; explicit flags win.  Unknown config keys are rejected.  Exit codes:
0 success, 1 numeric non-convergence or failed validation (outputs are
still written), 2 malformed configuration.  All floating-point output is
formatted with 17 significant digits so files round-trip exactly, and
outputs are byte-reproducible for a fixed (config, seed).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

from . import curve as curve_mod
from . import lab as lab_mod
from .drivers import ZSpecContinuous, ZSpecDiscrete, driver_from_spec
from .errors import ConfigError, DrlabError
from .models import (CLFParams, LFParams, clf_step, clf_to_uv, lf_step,
                     lf_to_uv, make_clf_model, make_lf_model)
from .montecarlo import run_validation
from .recursion import classify_detail, free_energy, orbit, write_orbit_csv

_FMT = "{:.17g}"


def _f(x) -> str:
    return _FMT.format(float(x))


def _emit_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if x == math.inf:
            return "inf"
        if x == -math.inf:
            return "-inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _build_driver(args):
    if args.driver is None:
        raise ConfigError("--driver is required")
    psi, constants = driver_from_spec(args.driver)
    return psi, constants


def _load_config(args, parser: argparse.ArgumentParser) -> None:
    path = getattr(args, "config", None)
    if not path:
        return
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    dests = set(vars(args)) - {"command", "handler", "config"}
    unknown = set(cfg) - dests
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)!r}")
    for key, value in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _default(args, name, value) -> None:
    if getattr(args, name, None) is None:
        setattr(args, name, value)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_psi(args, parser) -> int:
    _load_config(args, parser)
    psi, constants = _build_driver(args)
    info = {
        "name": psi.name,
        "psi_at_0": psi(0.0),
        "deriv_at_0": psi.deriv(0.0),
        "psi_inf": psi.psi_inf,
        "domain_min": psi.domain_min,
        "bounded": psi.bounded,
    }
    if constants is not None:
        info["root"] = constants.root
        info["slope_at_root"] = constants.slope
        info["p"] = constants.p
    _emit_json(_jsonable(info), args.out)
    return 0


def _cmd_classify(args, parser) -> int:
    _load_config(args, parser)
    _default(args, "max_iter", 10 ** 6)
    psi, _ = _build_driver(args)
    if args.u0 is None or args.v0 is None:
        raise ConfigError("classify requires --u0 and --v0")
    label, last = classify_detail(float(args.u0), float(args.v0), psi,
                                  max_iter=int(args.max_iter))
    out = {"label": label.value, "final_n": last.n, "final_u": last.u,
           "final_v": last.v, "final_log_u": last.log_u}
    _emit_json(_jsonable(out), args.out)
    if args.orbit_out:
        states = orbit(float(args.u0), float(args.v0), psi,
                       int(args.orbit_steps or 100))
        with open(args.orbit_out, "w") as fh:
            write_orbit_csv(states, fh)
    return 0


def _cmd_curve(args, parser) -> int:
    _load_config(args, parser)
    _default(args, "A", 0.5)
    _default(args, "m", 1000)
    _default(args, "tol", 1e-12)
    _default(args, "max_sweeps", 10 ** 5)
    psi, _ = _build_driver(args)
    cur = curve_mod.solve_curve(
        psi, float(args.A), int(args.m), tol=float(args.tol),
        max_sweeps=int(args.max_sweeps),
        K_override=float(args.K) if args.K is not None else None,
        sweeps=int(args.sweeps) if args.sweeps is not None else None)
    if args.out:
        with open(args.out, "w") as fh:
            curve_mod.write_curve_csv(cur, psi, fh)
    summary = {
        "driver": psi.name, "A": cur.grid.A, "m": len(cur.xs) - 1,
        "K": cur.grid.K, "sweeps": cur.grid.sweeps,
        "sup_change_last": cur.grid.sup_change_last,
        "clamp_last": cur.grid.clamp_last,
        "residual_sup": cur.residual_sup,
        "h_at_minus_A": float(cur.h_values[0]),
        "converged": cur.converged,
    }
    _emit_json(_jsonable(summary), (args.out + ".json") if args.out else None)
    # an explicit sweep count is a regression run, not a convergence claim
    return 0 if (cur.converged or args.sweeps is not None) else 1


def _cmd_free_energy(args, parser) -> int:
    _load_config(args, parser)
    _default(args, "max_iter", 10 ** 6)
    psi, _ = _build_driver(args)
    if args.u0 is None or args.v0 is None:
        raise ConfigError("free-energy requires --u0 and --v0")
    fe = free_energy(float(args.u0), float(args.v0), psi,
                     max_iter=int(args.max_iter))
    out = {"value": fe.value, "log_value": fe.log_value,
           "lower": fe.lower, "upper": fe.upper,
           "log_lower": fe.log_lower, "log_upper": fe.log_upper,
           "n_star": fe.n_star, "converged": fe.converged}
    _emit_json(_jsonable(out), args.out)
    return 0 if fe.converged else 1


def _model_from_args(args):
    atoms = tuple(_parse_atoms(args.z or "1"))
    if args.kind == "lf":
        return make_lf_model(float(args.p), ZSpecDiscrete(atoms))
    return make_clf_model(float(args.p), ZSpecContinuous(atoms))


def _parse_atoms(value):
    if isinstance(value, (list, tuple)):
        return [(float(v), float(p)) for v, p in value]
    out = []
    for piece in str(value).split("+"):
        v, sep, pr = piece.partition("@")
        out.append((float(v), float(pr) if sep else 1.0))
    return out


def _cmd_model_orbit(args, parser, kind: str) -> int:
    _load_config(args, parser)
    _default(args, "p", 0.5)
    _default(args, "steps", 100)
    args.kind = kind
    model = _model_from_args(args)
    rows = []
    if kind == "lf":
        if args.alpha is None or args.beta is None:
            raise ConfigError("lf orbit requires --alpha and --beta")
        params = LFParams(float(args.alpha), float(args.beta))
        for n in range(int(args.steps) + 1):
            u, v = lf_to_uv(params, model)
            s = params.alpha + params.beta
            rows.append((n, params.alpha, params.beta, u, v, 1.0 / s))
            params = lf_step(params, model)
        header = "n,alpha,beta,u,v,P_ge_1"
    else:
        if args.lam is None or args.rho is None:
            raise ConfigError("clf orbit requires --lam and --rho")
        params = CLFParams(float(args.lam), float(args.rho))
        for n in range(int(args.steps) + 1):
            u, v = clf_to_uv(params, model)
            rows.append((n, params.lam, params.rho, u, v, params.rho))
            params = clf_step(params, model)
        header = "n,lambda,rho,u,v,P_gt_0"
    text = header + "\n" + "\n".join(
        f"{r[0]}," + ",".join(_f(x) for x in r[1:]) for r in rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_mc(args, parser) -> int:
    _load_config(args, parser)
    if args.action != "validate":
        raise ConfigError(f"unknown mc action {args.action!r}")
    _default(args, "p", 0.5)
    _default(args, "kind", "lf")
    _default(args, "levels", 3)
    _default(args, "pool_size", 10 ** 5)
    _default(args, "seed", 0)
    _default(args, "threads", 1)
    model = _model_from_args(args)
    if args.kind == "lf":
        if args.alpha is None or args.beta is None:
            raise ConfigError("mc validate (lf) requires --alpha and --beta")
        params0 = LFParams(float(args.alpha), float(args.beta))
    else:
        if args.lam is None or args.rho is None:
            raise ConfigError("mc validate (clf) requires --lam and --rho")
        params0 = CLFParams(float(args.lam), float(args.rho))
    reports = run_validation(model, params0, int(args.levels),
                             int(args.pool_size), int(args.seed),
                             int(args.threads))
    payload = {
        "kind": args.kind, "p": float(args.p),
        "levels": int(args.levels), "pool_size": int(args.pool_size),
        "seed": int(args.seed),
        "reports": [r.as_dict() for r in reports],
        "passed": all(r.passed for r in reports),
    }
    _emit_json(_jsonable(payload), args.out)
    return 0 if payload["passed"] else 1


def _lab_curve(args, psi):
    if getattr(args, "curve", None):
        with open(args.curve) as fh:
            return curve_mod.read_curve_csv(fh)
    A = float(args.A if args.A is not None else 0.5)
    m = int(args.m if args.m is not None else 1000)
    tol = float(args.tol if args.tol is not None else 1e-12)
    return curve_mod.solve_curve(psi, A, m, tol=tol)


def _cmd_lab(args, parser) -> int:
    _load_config(args, parser)
    exp = args.experiment
    if exp == "euler":
        eps = [float(e) for e in (args.eps or [1e-6, 1e-8])]
        ts = [float(t) for t in (args.t or [0.3, 0.7, 1.0])]
        report = lab_mod.euler_tan_check(eps, ts)
        return _emit_lab(report, args.out)
    psi, _ = _build_driver(args)
    refine = float(args.refine_seed_tol) if args.refine_seed_tol else None
    if exp == "sandwich":
        if args.u0 is None or args.v0 is None:
            raise ConfigError("lab sandwich requires --u0 and --v0")
        rep = lab_mod.sandwich_check(psi, float(args.u0), float(args.v0))
        _emit_json(_jsonable({
            "log_value": rep.log_value, "log_lower": rep.log_lower,
            "log_upper": rep.log_upper, "n_star": rep.n_star,
            "ok": rep.ok, "slack_lower": rep.slack_lower,
            "slack_upper": rep.slack_upper}),
            (args.out + ".json") if args.out else None)
        return 0 if rep.ok else 1
    v0 = float(args.v0 if args.v0 is not None else 0.0)
    cur = _lab_curve(args, psi)
    if exp == "critical":
        report = lab_mod.critical_asymptotics(
            psi, cur, v0, int(args.n_max or 10 ** 5),
            seed_refine_tol=refine)
    elif exp == "n-star":
        report = lab_mod.n_star_scaling(
            psi, cur, v0, [float(e) for e in (args.eps or [1e-6])],
            seed_refine_tol=refine)
    elif exp == "c-star":
        report = lab_mod.c_star_estimate(
            psi, cur, v0, [float(e) for e in (args.eps or [1e-6])],
            seed_refine_tol=refine)
    elif exp == "c-v":
        report = lab_mod.c_v_estimate(
            psi, cur, v0, [float(e) for e in (args.eps or [1e-6])],
            seed_refine_tol=refine)
    else:
        raise ConfigError(f"unknown lab experiment {exp!r}")
    return _emit_lab(report, args.out)


def _emit_lab(report, out_base: str | None) -> int:
    summary = _jsonable(report.summary())
    if out_base:
        cols, rows = lab_mod.report_csv_rows(report)
        with open(out_base + ".csv", "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(
                    _f(x) if isinstance(x, float) else str(x)
                    for x in row) + "\n")
        _emit_json(summary, out_base + ".json")
    else:
        _emit_json(summary, None)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; flags win")
    sp.add_argument("--driver", help="driver spec, e.g. fig1 or lf:p=0.5,z=1")
    sp.add_argument("--out", help="output path (CSV/JSON depending on command)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="drlab",
        description="Numerical laboratory for the two-parameter recursion "
                    "u' = u psi(v'), v' = v + u")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("psi", help="print driver constants")
    _add_common(sp)
    sp.set_defaults(handler=_cmd_psi)

    sp = sub.add_parser("classify", help="phase of an initial pair")
    _add_common(sp)
    sp.add_argument("--u0", type=float)
    sp.add_argument("--v0", type=float)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--orbit-out", dest="orbit_out")
    sp.add_argument("--orbit-steps", dest="orbit_steps", type=int)
    sp.set_defaults(handler=_cmd_classify)

    sp = sub.add_parser("curve", help="solve the critical curve")
    _add_common(sp)
    sp.add_argument("--A", type=float)
    sp.add_argument("--m", type=int)
    sp.add_argument("--K", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    sp.add_argument("--sweeps", type=int, help="run exactly this many sweeps")
    sp.set_defaults(handler=_cmd_curve)

    sp = sub.add_parser("free-energy", help="free energy of an initial pair")
    _add_common(sp)
    sp.add_argument("--u0", type=float)
    sp.add_argument("--v0", type=float)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.set_defaults(handler=_cmd_free_energy)

    for kind in ("lf", "clf"):
        sp = sub.add_parser(kind, help=f"closed-form {kind} parameter orbit")
        _add_common(sp)
        sp.add_argument("--p", type=float)
        sp.add_argument("--z", help="atoms value@prob joined by +, e.g. 1 or 1@0.5+2@0.5")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--lam", type=float)
        sp.add_argument("--rho", type=float)
        sp.add_argument("--steps", type=int)
        sp.set_defaults(handler=lambda a, pr, k=kind: _cmd_model_orbit(a, pr, k))

    sp = sub.add_parser("mc", help="Monte Carlo validation of the closed forms")
    sp.add_argument("action", choices=["validate"])
    _add_common(sp)
    sp.add_argument("--kind", choices=["lf", "clf"])
    sp.add_argument("--p", type=float)
    sp.add_argument("--z")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--lam", type=float)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--levels", type=int)
    sp.add_argument("--pool-size", dest="pool_size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.set_defaults(handler=_cmd_mc)

    sp = sub.add_parser("lab", help="scaling experiments")
    sp.add_argument("experiment",
                    choices=["critical", "n-star", "c-star", "c-v", "euler",
                             "sandwich"])
    _add_common(sp)
    sp.add_argument("--A", type=float)
    sp.add_argument("--m", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--curve", help="import a reference curve CSV instead of solving")
    sp.add_argument("--v0", type=float)
    sp.add_argument("--u0", type=float)
    sp.add_argument("--eps", action="append")
    sp.add_argument("--t", action="append")
    sp.add_argument("--n-max", dest="n_max", type=int)
    sp.add_argument("--refine-seed-tol", dest="refine_seed_tol", type=float)
    sp.set_defaults(handler=_cmd_lab)

    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, parser)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DrlabError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
