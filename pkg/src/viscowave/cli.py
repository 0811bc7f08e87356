"""Command-line driver: ``viscowave {validate,run,sweep,converge,identity-check}``.

Exit codes: 0 success (for ``validate``: decay hypotheses hold and a
certificate exists), 2 well-posedness only, 1 invalid configuration,
3 numerical instability, 64 usage error or unreadable config.
"""
import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import diagnostics, studies
from .errors import ConfigError, InstabilityError, PreconditionError, ViscowaveError
from .problem import ProblemConfig, find_certificate, load_config, set_param, validate
from .solver import run, write_csv, write_snapshots_csv

EXIT_OK, EXIT_INVALID, EXIT_WELLPOSED_ONLY, EXIT_UNSTABLE, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


def _load(args):
    if not args.config:
        raise UsageError("--config is required")
    try:
        return load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    except ConfigError as exc:
        raise UsageError(f"bad config {args.config}: {exc}") from None


def _outdir(args):
    out = Path(args.out or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def classify(config):
    """Validity class of ``config`` as an exit code, with the report and certificate."""
    rep = validate(config)
    cert = find_certificate(config)
    if rep.decay_ok and cert.feasible:
        return EXIT_OK, rep, cert
    if rep.wellposed_ok:
        return EXIT_WELLPOSED_ONLY, rep, cert
    return EXIT_INVALID, rep, cert


def cmd_validate(args):
    config = _load(args)
    code, rep, cert = classify(config)
    print(rep.summary())
    print(f"certificate feasible={cert.feasible} N1={cert.N1:.6g} N2={cert.N2:.6g} "
          f"N3={cert.N3:.6g} N4={cert.N4:.6g}")
    if cert.violated:
        print(f"  violated: {cert.violated}")
    print({EXIT_OK: "decay-valid", EXIT_WELLPOSED_ONLY: "well-posedness only",
           EXIT_INVALID: "invalid"}[code])
    return code


def _fit_report(record, config):
    try:
        fit = diagnostics.decay_fit(record, config.kernel).to_json()
        fit["degenerate"] = False
    except ViscowaveError as exc:
        fit = {"gamma1": None, "intercept": None, "r2": None, "window": None,
               "kernel_kind": config.kernel.kind.value, "degenerate": True, "reason": str(exc)}
    try:
        rc = diagnostics.energy_rate_check(record, config)
        fit["monotone"] = rc.monotone
        fit["worst_violation"] = rc.worst_violation
        fit["empirical_c4"] = None if math.isnan(rc.empirical_c4) else rc.empirical_c4
        fit["c4_candidate_inferred"] = rc.c4_candidate
    except PreconditionError:
        fit["monotone"] = None
    return fit


def execute_run(config, out, stride):
    """Run one config and write ``run.csv``, ``snapshots.csv`` and ``fit.json`` into ``out``."""
    record = run(config, stride=stride)
    write_csv(record, out / "run.csv")
    write_snapshots_csv(record, out / "snapshots.csv")
    fit = _fit_report(record, config)
    (out / "fit.json").write_text(json.dumps(fit, indent=2, sort_keys=True) + "\n")
    return fit


def cmd_run(args):
    config = _load(args)
    out = _outdir(args)
    try:
        fit = execute_run(config, out, args.stride)
    except InstabilityError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    print(json.dumps(fit, sort_keys=True))
    return EXIT_OK


def _parse_sweep(text):
    if not text or "=" not in text:
        raise UsageError("--sweep expects PARAM=v1,v2,...")
    name, _, values = text.partition("=")
    items = [v for v in values.split(",") if v.strip()]
    if not name.strip() or not items:
        raise UsageError("--sweep needs a parameter name and at least one value")
    try:
        return name.strip(), [float(v) for v in items]
    except ValueError:
        raise UsageError(f"non-numeric sweep value in {values!r}") from None


def _sweep_child(config_dict, out, stride):
    config = ProblemConfig.from_dict(config_dict)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = execute_run(config, Path(out), stride)
    except InstabilityError as exc:
        return {"status": "unstable", "reason": str(exc)}
    return {"status": "ok", **fit}


def _workers(n):
    cap = os.environ.get("VISCOWAVE_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise UsageError(f"VISCOWAVE_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n))


SWEEP_COLUMNS = ("value", "status", "gamma1", "r2", "monotone")


def cmd_sweep(args):
    base = _load(args)
    name, values = _parse_sweep(args.sweep)
    out = _outdir(args)
    try:
        set_param(base.to_dict(), name, values[0])
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    results = {}
    jobs = {}
    for value in sorted(values):
        try:
            cfg = base.replace(**{name: value})
        except ConfigError as exc:
            results[value] = {"status": "invalid-config", "reason": str(exc)}
            continue
        code, _, _ = classify(cfg)
        if code != EXIT_OK:
            results[value] = {"status": "invalid-config"}
            continue
        sub = out / f"{name}={value!r}"
        sub.mkdir(exist_ok=True)
        jobs[value] = (cfg.to_dict(), str(sub), args.stride)

    if jobs:
        n = _workers(len(jobs))
        if n == 1:
            for value, job in jobs.items():
                results[value] = _safe_child(job)
        else:
            with ProcessPoolExecutor(max_workers=n) as pool:
                futures = {value: pool.submit(_sweep_child, *job) for value, job in jobs.items()}
                for value, fut in futures.items():
                    try:
                        results[value] = fut.result()
                    except Exception as exc:    # child failure is recorded, sweep continues
                        results[value] = {"status": "error", "reason": repr(exc)}

    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((name,) + SWEEP_COLUMNS[1:])
        for value in sorted(results):
            r = results[value]
            w.writerow((repr(value), r["status"], _cell(r.get("gamma1")), _cell(r.get("r2")),
                        _cell(r.get("monotone"))))
    for value in sorted(results):
        r = results[value]
        print(f"{name}={value!r}: {r['status']} gamma1={r.get('gamma1')} monotone={r.get('monotone')}")
    statuses = {r["status"] for r in results.values()}
    if "unstable" in statuses:
        return EXIT_UNSTABLE
    if statuses - {"ok"}:
        return EXIT_INVALID
    return EXIT_OK


def _safe_child(job):
    try:
        return _sweep_child(*job)
    except Exception as exc:
        return {"status": "error", "reason": repr(exc)}


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(float(v))


def cmd_converge(args):
    if args.levels < 1:
        raise UsageError("--levels must be >= 1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = studies.convergence_table(levels=args.levels, base_nx=args.base_nx, dt=args.dt)
    lines = ["nx,dx,dt,l2_error,ratio,note"]
    for r in rows:
        ratio = "" if math.isnan(r.ratio) else repr(r.ratio)
        lines.append(f"{r.nx},{r.dx!r},{r.dt!r},{r.error!r},{ratio},{r.note}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        (_outdir(args) / "converge.csv").write_text(text)
    return EXIT_OK


def cmd_identity_check(args):
    levels = max(args.levels, 2)
    for label, kw in (("smooth", {}), ("constant", {"constant": True})):
        print(f"[{label} field]")
        print("dt,product_rule_residual,ratio,decomposition_residual,cs_excess")
        for r in studies.identity_report(levels=levels, **kw):
            ratio = "" if math.isnan(r.product_rule_ratio) else f"{r.product_rule_ratio:.4f}"
            print(f"{r.dt:g},{r.product_rule_residual:.3e},{ratio},{r.decomposition_residual:.3e},{r.cs_excess:.3e}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep,
            "converge": cmd_converge, "identity-check": cmd_identity_check}


def build_parser():
    p = argparse.ArgumentParser(prog="viscowave", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--stride", type=int, default=10, help="steps between diagnostic rows")
    p.add_argument("--sweep", help="PARAM=v1,v2,... for the sweep command")
    p.add_argument("--levels", type=int, default=4, help="refinement levels (converge, identity-check)")
    p.add_argument("--base-nx", type=int, default=20, help="coarsest nodes per unit length (converge)")
    p.add_argument("--dt", type=float, default=None, help="fixed requested time step (converge)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.stride < 1:
        print("error: --stride must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
