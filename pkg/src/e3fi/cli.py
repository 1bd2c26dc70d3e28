"""Command-line front end.

Subcommands: ``verify``, ``classify``, ``bracket``, ``discover`` and
``integrate``. Exit codes are 0 on success, 1 when a claim fails and 2 for
usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import CatalogError, EntryReport, load_catalog, select, verify_entry
from .classify import SVD_TOL, classify
from .codegen import lambdify_numpy
from .discovery import DEFAULT_SAMPLES, DiscoveryError, discover
from .expr import ExprError, parse, substitute
from .integrator import DEFAULT_STEP, integrate
from .poisson import bracket, hamiltonian
from .sampling import DEFAULT_SEED, sample_points

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SCHEMA = 1


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    catalog: str | None
    entry: str | None
    tol_residual: float
    tol_drift: float
    svd_tol: float
    samples: int
    seed: int
    format: str
    plot: str | None

    def __post_init__(self):
        for name in ("tol_residual", "tol_drift", "svd_tol"):
            if getattr(self, name) <= 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.samples <= 0:
            raise UsageError("--samples must be positive")


# ---------------------------------------------------------------- helpers


def _params(text: str | None) -> dict[str, complex]:
    """``k1=2,k2=3+1j`` -> {"k1": 2, "k2": 3+1j}."""
    out: dict[str, complex] = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise UsageError(f"bad --param item {item!r}, expected name=value")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = complex(v.strip().replace("i", "j"))
        except ValueError as exc:
            raise UsageError(f"bad value for parameter {k.strip()!r}: {v!r}") from exc
    return out


def _parse(text: str, params: dict[str, complex], what: str):
    try:
        return parse(text, list(params))
    except ExprError as exc:
        raise UsageError(f"cannot parse {what} {text!r}: {exc}") from exc


def _short(v: float | list[float]) -> str:
    return f"{v:.12g}" if isinstance(v, float) else "(" + ", ".join(f"{p:.12g}" for p in v) + ")"


def _num(c: complex) -> float | list[float]:
    c = complex(c)
    return c.real if c.imag == 0 else [c.real, c.imag]


def _emit(fmt: str, doc: dict, rows: list[dict], columns: Sequence[str], out) -> None:
    if fmt == "json":
        out.write(json.dumps(doc, indent=2) + "\n")
        return
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
        out.write(buf.getvalue())
        return
    out.write(f"# seed {doc.get('seed')}\n")
    widths = [max([len(c)] + [len(str(r.get(c, ""))) for r in rows]) for c in columns]
    out.write("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")
    for r in rows:
        out.write("  ".join(str(r.get(c, "")).ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise UsageError("--plot needs matplotlib (pip install matplotlib)") from exc
    return plt


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-._" else "_" for ch in name)


def _plot_drift(directory: Path, entry, report: EntryReport) -> None:
    if not report.trajectories:
        return
    plt = _pyplot()
    fis = entry.bound_fis()
    f = lambdify_numpy([e for _, e in fis])
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, (name, _) in enumerate(fis):
        for j, traj in enumerate(report.trajectories):
            vals = f(*traj.columns())[k]
            d = np.abs(vals - vals[0]) / max(1.0, abs(vals[0]))
            ax.semilogy(traj.t, np.maximum(d, 1e-18), lw=0.8, color=f"C{k % 10}", label=name if j == 0 else None)
    ax.set_xlabel("t")
    ax.set_ylabel("relative drift")
    ax.set_title(entry.id)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(directory / f"{_safe(entry.id)}.png", dpi=100)
    plt.close(fig)


# ---------------------------------------------------------------- subcommands


def _entries(cfg: RunConfig):
    try:
        entries = load_catalog(cfg.catalog)
    except (OSError, ValueError, KeyError, CatalogError) as exc:
        raise UsageError(f"cannot load catalog: {exc}") from exc
    return select(entries, cfg.entry)


def cmd_verify(cfg: RunConfig, out=sys.stdout) -> int:
    entries = _entries(cfg)
    reports = [verify_entry(e, cfg.tol_residual, cfg.tol_drift, cfg.samples, cfg.seed) for e in entries]
    if cfg.plot:
        d = Path(cfg.plot)
        d.mkdir(parents=True, exist_ok=True)
        for e, r in zip(entries, reports):
            _plot_drift(d, e, r)
    rows = []
    for r in reports:
        rows.append({
            "id": r.id,
            "pass": r.passed,
            "max_residual": f"{r.max_residual:.2e}",
            "max_drift": f"{max((d.max_drift for d in r.drifts), default=0.0):.2e}",
            "verdict": r.classification.verdict if r.classification else "",
            "rank": r.classification.independent_count if r.classification else "",
            "claimed": r.claimed_classification or "",
        })
    n_pass = sum(r.passed for r in reports)
    doc = {"schema": SCHEMA, "command": "verify", "seed": cfg.seed,
           "summary": {"entries": len(reports), "passed": n_pass, "failed": len(reports) - n_pass},
           "entries": [r.to_dict() for r in reports]}
    _emit(cfg.format, doc, rows, ["id", "pass", "max_residual", "max_drift", "verdict", "rank", "claimed"], out)
    return EXIT_OK if n_pass == len(reports) else EXIT_FAIL


def cmd_classify(cfg: RunConfig, args, out=sys.stdout) -> int:
    rows, docs, ok = [], [], True
    if args.potential:
        params = _params(args.param)
        V = _parse(args.potential, params, "potential")
        fis = [(f"I{k + 1}", _parse(s, params, "integral")) for k, s in enumerate(args.fi or [])]
        pts = sample_points(cfg.samples, cfg.seed, guard=[V] + [e for _, e in fis], params=params)
        res = classify([(n, substitute(e, params)) for n, e in fis], substitute(V, params), pts,
                       svd_tol=cfg.svd_tol)
        rows.append({"id": args.potential, "verdict": res.verdict, "rank": res.independent_count,
                     "claimed": "", "match": ""})
        docs.append({"potential": args.potential, **res.to_dict()})
    else:
        for e in _entries(cfg):
            rep = verify_entry(e, cfg.tol_residual, cfg.tol_drift, cfg.samples, cfg.seed, drift=False)
            match = rep.classification_ok and not rep.errors
            ok &= match
            res = rep.classification
            rows.append({"id": e.id, "verdict": res.verdict if res else "", "rank": res.independent_count if res else "",
                         "claimed": e.claims.classification or "", "match": match})
            docs.append({"id": e.id, "claimed": e.claims.classification,
                         "classification": res.to_dict() if res else None, "match": match, "errors": rep.errors})
    doc = {"schema": SCHEMA, "command": "classify", "seed": cfg.seed, "results": docs}
    _emit(cfg.format, doc, rows, ["id", "verdict", "rank", "claimed", "match"], out)
    return EXIT_OK if ok else EXIT_FAIL


def _parse_with_h(text: str, params: dict[str, complex]):
    try:
        return parse(text, list(params) + ["H"])
    except ExprError as exc:
        raise UsageError(f"cannot parse {text!r}: {exc}") from exc


def cmd_bracket(cfg: RunConfig, args, out=sys.stdout) -> int:
    params = _params(args.param)
    V = _parse(args.potential, params, "potential")
    binding = {"H": hamiltonian(V), **params}
    A = substitute(_parse_with_h(args.a, params), binding)
    B = substitute(_parse_with_h(args.b, params), binding)
    exprs = [bracket(A, B)]
    if args.claim:
        exprs.append(substitute(_parse_with_h(args.claim, params), binding))
    pts = sample_points(cfg.samples, cfg.seed, guard=[A, B] + exprs)
    vals = lambdify_numpy(exprs)(*pts.args())
    max_abs = float(np.max(np.abs(vals[0])))
    doc = {"schema": SCHEMA, "command": "bracket", "seed": cfg.seed, "samples": len(pts),
           "max_abs_bracket": max_abs}
    row = {"a": args.a, "b": args.b, "max_abs_bracket": f"{max_abs:.3e}"}
    code = EXIT_OK
    if args.claim:
        dev = float(np.max(np.abs(vals[0] - vals[1])))
        passed = dev <= cfg.tol_residual
        doc.update(claim=args.claim, max_deviation=dev)
        doc["pass"] = passed
        row.update(max_deviation=f"{dev:.3e}")
        row["pass"] = passed
        code = EXIT_OK if passed else EXIT_FAIL
    _emit(cfg.format, doc, [row], ["a", "b", "max_abs_bracket", "max_deviation", "pass"], out)
    return code


def cmd_discover(cfg: RunConfig, args, out=sys.stdout) -> int:
    params = _params(args.param)
    V = _parse(args.potential, params, "potential")
    try:
        res = discover(V, params, n_samples=args.points, seed=cfg.seed)
    except DiscoveryError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.plot:
        _plot_spectrum(Path(cfg.plot), V, params, args.points, cfg.seed)
    doc = res.to_dict()
    doc["command"] = "discover"
    rows = []
    for c in res.candidates:
        nz = {k: _num(complex(*v)) for k, v in c.params.to_dict().items() if v != [0.0, 0.0]}
        rows.append({"kt_params": " ".join(f"{k}={_short(v)}" for k, v in nz.items()),
                     "G": c.fit.to_dict()["expr"] or "(sampled)", "residual": f"{c.residual:.1e}"})
    if cfg.format == "table":
        out.write(f"# nullspace dimension {res.dimension}\n")
    _emit(cfg.format, doc, rows, ["kt_params", "G", "residual"], out)
    return EXIT_OK


def _plot_spectrum(directory: Path, V, params, n, seed) -> None:
    from .discovery import assemble_system

    plt = _pyplot()
    directory.mkdir(parents=True, exist_ok=True)
    Vb = substitute(V, params) if params else V
    M = assemble_system(Vb, sample_points(n, np.random.default_rng(seed), guard=[Vb]))
    s = np.linalg.svd(M, compute_uv=False)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(np.arange(1, len(s) + 1), np.maximum(s, 1e-18), "o-")
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    fig.tight_layout()
    fig.savefig(directory / "singular_values.png", dpi=100)
    plt.close(fig)


def cmd_integrate(cfg: RunConfig, args, out=sys.stdout) -> int:
    params = _params(args.param)
    V = _parse(args.potential, params, "potential")
    try:
        ic = [complex(v.strip().replace("i", "j")) for v in args.ic.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --ic {args.ic!r}") from exc
    if len(ic) != 6:
        raise UsageError("--ic needs six values x,y,z,vx,vy,vz")
    traj = integrate(V, ic, t_end=args.t_end, h=args.step, params=params)
    fis = [("H", hamiltonian(V))] + [(f"I{k + 1}", _parse(s, params, "integral")) for k, s in enumerate(args.fi or [])]
    vals = lambdify_numpy([e for _, e in fis], params)(*traj.columns())
    drifts = {n: float(np.max(np.abs(v - v[0])) / max(1.0, abs(v[0]))) for (n, _), v in zip(fis, vals)}
    if cfg.plot:
        plt = _pyplot()
        d = Path(cfg.plot)
        d.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(6, 4))
        for (n, _), v in zip(fis, vals):
            ax.semilogy(traj.t, np.maximum(np.abs(v - v[0]) / max(1.0, abs(v[0])), 1e-18), label=n)
        ax.set_xlabel("t")
        ax.set_ylabel("relative drift")
        ax.legend()
        fig.tight_layout()
        fig.savefig(d / "drift.png", dpi=100)
        plt.close(fig)
    if cfg.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "z", "vx", "vy", "vz"] + [n for n, _ in fis])
        stride = max(1, args.every)
        for k in range(0, len(traj.t), stride):
            w.writerow([repr(float(traj.t[k]))] + [repr(_num(c)) for c in traj.states[k]]
                       + [repr(_num(v[k])) for v in vals])
        out.write(buf.getvalue())
        return EXIT_OK if not traj.aborted else EXIT_FAIL
    doc = {"schema": SCHEMA, "command": "integrate", "seed": cfg.seed, "status": traj.status,
           "t_final": float(traj.t[-1]), "steps": len(traj.t) - 1, "h": args.step,
           "final_state": [_num(c) for c in traj.final_state], "drift": drifts}
    rows = [{"integral": n, "drift": f"{d:.3e}"} for n, d in drifts.items()]
    if cfg.format == "table":
        out.write(f"# status {traj.status}, t_final {float(traj.t[-1]):g}\n")
    _emit(cfg.format, doc, rows, ["integral", "drift"], out)
    return EXIT_OK if not traj.aborted else EXIT_FAIL


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", help="catalog JSON file (default: bundled corpus)")
    common.add_argument("--entry", help="glob on entry ids")
    common.add_argument("--tol-residual", type=float, default=1e-10)
    common.add_argument("--tol-drift", type=float, default=1e-8)
    common.add_argument("--svd-tol", type=float, default=SVD_TOL)
    common.add_argument("--samples", type=int, default=200)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--format", choices=("json", "table", "csv"), default="table")
    common.add_argument("--plot", metavar="DIR", help="write static plots into DIR")

    p = argparse.ArgumentParser(prog="e3fi", description="First integrals of potentials in E^3.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", parents=[common], help="verify catalog entries")

    c = sub.add_parser("classify", parents=[common], help="classify catalog entries or a given system")
    c.add_argument("--potential")
    c.add_argument("--fi", action="append", help="an integral (repeatable)")
    c.add_argument("--param")

    b = sub.add_parser("bracket", parents=[common], help="Poisson bracket of two expressions")
    b.add_argument("a")
    b.add_argument("b")
    b.add_argument("--potential", default="0", help="potential used for H")
    b.add_argument("--param")
    b.add_argument("--claim", help="expected value of the bracket")

    d = sub.add_parser("discover", parents=[common], help="search for quadratic integrals")
    d.add_argument("potential")
    d.add_argument("--param")
    d.add_argument("--points", type=int, default=DEFAULT_SAMPLES, help="sample points for the linear system")

    i = sub.add_parser("integrate", parents=[common], help="integrate one trajectory")
    i.add_argument("potential")
    i.add_argument("--ic", required=True, help="x,y,z,vx,vy,vz")
    i.add_argument("--t-end", type=float, default=10.0)
    i.add_argument("--step", type=float, default=DEFAULT_STEP)
    i.add_argument("--fi", action="append", help="an integral to monitor (repeatable)")
    i.add_argument("--param")
    i.add_argument("--every", type=int, default=100, help="csv row stride")
    return p


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = RunConfig(args.command, args.catalog, args.entry, args.tol_residual, args.tol_drift,
                        args.svd_tol, args.samples, args.seed, args.format, args.plot)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        if args.command == "classify":
            return cmd_classify(cfg, args, out)
        if args.command == "bracket":
            return cmd_bracket(cfg, args, out)
        if args.command == "discover":
            return cmd_discover(cfg, args, out)
        return cmd_integrate(cfg, args, out)
    except UsageError as exc:
        print(f"e3fi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
