"""Command-line driver: corpus generation, smoothing runs, verification, reports.

Exit codes: 0 success, 1 usage or I/O failure, 2 numerical non-convergence.
Flags override values from a JSON --config file; all outputs are
deterministic for fixed inputs and configuration.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)

from . import corpus, geometry, io, verify
from .elliptic import LinearSolverConfig
from .forms import as_connection
from .grid import Grid
from .solver import NonConvergenceError, SolverConfig, run

REPORT_HEADER = [
    "input",
    "epsilon",
    "converged",
    "iterations",
    "riem_flat_res",
    "curl_res",
    "first_rt_res",
    "delta_identity_res",
    "reduced_rt_res",
    "min_abs_det",
    "jjinv_err",
]


def _parse_point(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) not in (2, 3):
        raise ValueError("point needs 2 or 3 comma-separated coordinates")
    return tuple(vals)


def _parse_res(text):
    vals = [int(v) for v in str(text).split(",")]
    if len(vals) == 1:
        vals = vals * 2
    return tuple(vals)


def _load_config(ns):
    cfg = {}
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            cfg = json.load(fh)
    return cfg


def _value(ns, cfg, key, default):
    v = getattr(ns, key.replace("-", "_"), None)
    if v is not None:
        return v
    if key in cfg:
        return cfg[key]
    return default


def _solver_config(ns, cfg, n):
    lin = LinearSolverConfig(
        method=_value(ns, cfg, "method", "cg"),
        tol_rel=float(_value(ns, cfg, "lin_tol", 1e-11)),
        max_iter=int(_value(ns, cfg, "lin_max_iter", 100000)),
    )
    return SolverConfig(
        epsilon=float(_value(ns, cfg, "epsilon", 0.5)),
        p=float(_value(ns, cfg, "p", 2.0 * n)),
        max_iter=int(_value(ns, cfg, "max_iter", 40)),
        tol_iter=float(_value(ns, cfg, "tol", 1e-10)),
        linear=lin,
        adaptive_epsilon=bool(_value(ns, cfg, "adaptive_epsilon", True)),
    )


def cmd_corpus(ns):
    cfg = _load_config(ns)
    shape = _parse_res(_value(ns, cfg, "res", 33))
    if ns.dim == 3 and len(shape) == 2:
        shape = (shape[0],) * 3
    grid = Grid.unit(shape)
    spec = corpus.CaseSpec(
        kind=_value(ns, cfg, "kind", "manufactured"),
        seed=int(_value(ns, cfg, "seed", 0)),
        amplitude=float(_value(ns, cfg, "amplitude", 1.0)),
        grid=grid,
        family_size=int(_value(ns, cfg, "family_size", 0)),
        bound_M=float(_value(ns, cfg, "bound_m", 1.0)),
    )
    fields = corpus.generate(spec)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    primary = next(iter(fields))
    for name, form in fields.items():
        path = out if name == primary else out.with_name(
            out.stem + f"_{name}" + out.suffix
        )
        io.write_field(path, form)
    io.write_case(out.with_suffix(".json"), spec)
    print(f"wrote {len(fields)} field(s) to {out}")
    return 0


def cmd_smooth(ns):
    cfg = _load_config(ns)
    gamma = as_connection(io.read_field(ns.input))
    scfg = _solver_config(ns, cfg, gamma.grid.n)
    if ns.point:
        q = _parse_point(ns.point)
    else:
        q = tuple((a + b) / 2.0 for a, b in zip(gamma.grid.lo, gamma.grid.hi))
    outdir = Path(ns.out)
    outdir.mkdir(parents=True, exist_ok=True)

    converged = True
    try:
        sol = run(gamma, q, scfg)
        converged = sol.converged
    except NonConvergenceError as exc:
        hist_path = outdir / "iterations.csv"
        with open(hist_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["k", "ratio"])
            for k, r in enumerate(exc.history, start=1):
                wr.writerow([k, r])
        with open(outdir / "diagnostics.json", "w") as fh:
            json.dump({"converged": False, "error": str(exc)}, fh, indent=2)
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 2

    geff = sol.gamma_effective()
    gf = geometry.gauge_fields(geff, sol.J, sol.Jinv, sol.B)
    diag = geometry.rt_residuals(geff, sol, gf, scfg.p)
    gy = geometry.transform_connection(gf.gamma_tilde, sol.J, sol.Jinv)

    io.write_field(outdir / "J.rtf1", sol.J)
    io.write_field(outdir / "Jinv.rtf1", sol.Jinv)
    io.write_field(outdir / "B.rtf1", sol.B)
    io.write_field(outdir / "y.rtf1", sol.y)
    io.write_field(outdir / "gamma_tilde.rtf1", gf.gamma_tilde)
    io.write_field(outdir / "gamma_y.rtf1", gy)
    sol.write_history_csv(outdir / "iterations.csv")
    payload = diag.to_json()
    payload.update(sol.diagnostics)
    payload["input"] = str(ns.input)
    payload["point"] = list(q)
    with open(outdir / "diagnostics.json", "w") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True)
    print(
        f"converged={converged} iters={sol.iterations} eps={sol.epsilon} "
        f"riem_flat={diag.riem_flat_res:.3e} curl={diag.curl_res:.3e}"
    )
    return 0 if converged else 2


def cmd_verify(ns):
    cfg = _load_config(ns)
    suite = _value(ns, cfg, "suite", None)
    if suite not in verify.SUITES:
        print(
            f"unknown suite {suite!r}; choose from {sorted(verify.SUITES)}",
            file=sys.stderr,
        )
        return 1
    kwargs = {}
    if ns.res:
        kwargs["res"] = tuple(int(v) for v in str(ns.res).split(","))
    if ns.p:
        kwargs["p"] = float(ns.p)
    rows = verify.run_suite(suite, **kwargs)
    print(verify.format_table(rows))
    n_fail = sum(1 for r in rows if not r.passed)
    print(f"suite {suite}: {len(rows) - n_fail}/{len(rows)} checks passed")
    return 0 if n_fail == 0 else 1


def cmd_inertial(ns):
    cfg = _load_config(ns)
    gamma_y = as_connection(io.read_field(ns.input))
    q = _parse_point(ns.point) if ns.point else tuple(
        (a + b) / 2.0 for a, b in zip(gamma_y.grid.lo, gamma_y.grid.hi)
    )
    p = float(_value(ns, cfg, "p", 2.0 * gamma_y.grid.n))
    frame = geometry.locally_inertial(gamma_y, q, p)
    outdir = Path(ns.out)
    outdir.mkdir(parents=True, exist_ok=True)
    io.write_field(outdir / "gamma_z.rtf1", frame.gamma_z)
    with open(outdir / "inertial.json", "w") as fh:
        json.dump(_json_safe(frame.report), fh, indent=2, sort_keys=True)
    print(
        f"|gamma_z(q)| = {frame.report['gamma_z_at_q']:.3e}, "
        f"growth exponent = {frame.report['growth_exponent']:.3f}"
    )
    return 0


def cmd_report(ns):
    rows = []
    for path in ns.inputs:
        with open(path) as fh:
            data = json.load(fh)
        data.setdefault("input", path)
        rows.append([data.get(k, "") for k in REPORT_HEADER])
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(REPORT_HEADER)
        wr.writerows(rows)
    print(f"wrote {len(rows)} row(s) to {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="reglift",
        description="Lift rough affine connections to optimal regularity on grids.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("corpus", help="generate a test connection + sidecar")
    c.add_argument("--kind", choices=corpus.CaseSpec.KINDS, default=None)
    c.add_argument("--res", default=None, help="points per axis, e.g. 33 or 33,33")
    c.add_argument("--dim", type=int, choices=(2, 3), default=2)
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--amplitude", type=float, default=None)
    c.add_argument("--family-size", type=int, default=None)
    c.add_argument("--bound-m", type=float, default=None)
    c.add_argument("--config", default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_corpus)

    s = sub.add_parser("smooth", help="run the smoothing pipeline on a connection")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--method", choices=("cg", "direct"), default=None)
    s.add_argument("--lin-tol", type=float, default=None)
    s.add_argument("--point", default=None, help="x1,x2[,x3]")
    s.add_argument("--config", default=None)
    s.set_defaults(func=cmd_smooth)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("--suite", required=True)
    v.add_argument("--res", default=None)
    v.add_argument("--p", type=float, default=None)
    v.add_argument("--config", default=None)
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("inertial", help="locally inertial frame at a point")
    i.add_argument("--input", required=True, help="smoothed connection dump")
    i.add_argument("--point", default=None, help="x1,x2[,x3]")
    i.add_argument("--p", type=float, default=None)
    i.add_argument("--out", required=True)
    i.add_argument("--config", default=None)
    i.set_defaults(func=cmd_inertial)

    r = sub.add_parser("report", help="merge diagnostics JSONs into a CSV summary")
    r.add_argument("--inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return ns.func(ns)
    except (OSError, io.FormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
