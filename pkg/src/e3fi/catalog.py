"""The bundled catalog of potentials with claimed first integrals, and its verifier.

An entry stores a potential and its first integrals as text in the parser's
grammar, numeric parameter values, instantiations of any arbitrary functions,
and the claims to check: the integrability class, algebraic relations between
integrals, Poisson-bracket values and (non-)involution statements.

Integrals may refer to earlier integrals of the same entry by name, and claim
expressions may refer to any integral and to ``H``.
"""

from __future__ import annotations

import fnmatch
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classify import ClassificationResult, bracket_residual, classify
from .codegen import lambdify_numpy
from .expr import Expr, ExprError, UserFunction, parse, sub, substitute, user_function
from .integrator import Accelerator, Trajectory, evaluate_along, integrate
from .poisson import bracket, hamiltonian, total_time_derivative
from .qfi import FAMILIES, ConditionReport, TooManySingularSamples, evaluate_condition, family_residuals
from .sampling import DEFAULT_SEED, POSITION_BOX, VELOCITY_BOX, Samples, regular_mask, sample_points

SCHEMA_VERSION = 1
NON_INVOLUTION_FLOOR = 1e-3


class CatalogError(ValueError):
    pass


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1] if len(v) > 1 else 0.0)
    return complex(v)


@dataclass
class FirstIntegral:
    name: str
    text: str
    expr: Expr
    family: str = "generic"
    lam: complex | None = None


@dataclass
class Claims:
    classification: str | None = None
    relations: list[tuple[str, str]] = field(default_factory=list)
    involution_sets: list[list[str]] = field(default_factory=list)
    brackets: dict[str, str] = field(default_factory=dict)
    non_involution: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class CatalogEntry:
    id: str
    table_ref: str
    potential: str
    params: dict[str, complex]
    functions: dict[str, str]
    fis: list[FirstIntegral]
    claims: Claims
    V: Expr
    negative_control: bool = False
    notes: str = ""

    def bind(self, e: Expr) -> Expr:
        return substitute(e, self.params) if self.params else e

    @property
    def bound_V(self) -> Expr:
        return self.bind(self.V)

    def bound_fis(self) -> list[tuple[str, Expr]]:
        return [(f.name, self.bind(f.expr)) for f in self.fis]

    def parse_claim(self, text: str) -> Expr:
        """Parse an expression that may use integral names and ``H``."""
        names = {f.name: f.expr for f in self.fis}
        names["H"] = hamiltonian(self.V)
        e = parse(text, list(self.params) + list(names), self._functions())
        return self.bind(substitute(e, names))

    def _functions(self) -> dict[str, UserFunction]:
        return {k: user_function(v, self.params) for k, v in self.functions.items()}

    def fi(self, name: str) -> FirstIntegral:
        for f in self.fis:
            if f.name == name:
                return f
        raise KeyError(name)


def entry_from_dict(d: Mapping) -> CatalogEntry:
    """Build an entry; any problem is reported with the entry id and the offending field."""
    eid = d.get("id", "?")
    path = "id"

    def fail(msg: str):
        return CatalogError(f"entry {eid}: {path}: {msg}")

    try:
        for key in ("id", "table_ref", "potential"):
            path = key
            if not isinstance(d.get(key), str) or not d[key]:
                raise fail("missing or empty")
        path = "params"
        params = {k: _complex(v) for k, v in d.get("params", {}).items()}
        functions = dict(d.get("functions", {}))
        fdefs = {}
        for k, v in functions.items():
            path = f"functions.{k}"
            fdefs[k] = user_function(v, params)
        path = "potential"
        V = parse(d["potential"], params, fdefs)
        fis: list[FirstIntegral] = []
        known: dict[str, Expr] = {}
        for k, f in enumerate(d.get("fis", [])):
            path = f"fis[{k}].expr"
            name = f.get("name", f"I{k + 1}")
            e = parse(f["expr"], list(params) + list(known), fdefs)
            e = substitute(e, known) if known else e
            path = f"fis[{k}].family"
            family = f.get("family", "generic")
            if family not in FAMILIES:
                raise fail(f"unknown family {family!r}")
            lam = None
            if "lambda" in f:
                path = f"fis[{k}].lambda"
                lam_e = substitute(parse(str(f["lambda"]), params), params)
                if not hasattr(lam_e, "value"):
                    raise fail("must be numeric once parameters are bound")
                lam = complex(lam_e.value)
            fis.append(FirstIntegral(name, f["expr"], e, family, lam))
            known[name] = e
        path = "claims"
        c = d.get("claims", {})
        claims = Claims(
            classification=c.get("classification"),
            relations=[tuple(r) for r in c.get("relations", [])],
            involution_sets=[list(s) for s in c.get("involution_sets", [])],
            brackets=dict(c.get("brackets", {})),
            non_involution=[tuple(p) for p in c.get("non_involution", [])],
        )
    except CatalogError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, ExprError) as exc:
        raise fail(str(exc)) from exc
    return CatalogEntry(
        id=d["id"],
        table_ref=d["table_ref"],
        potential=d["potential"],
        params=params,
        functions=functions,
        fis=fis,
        claims=claims,
        V=V,
        negative_control=bool(d.get("negative_control", False)),
        notes=d.get("notes", ""),
    )


def _expand_variants(d: Mapping) -> list[dict]:
    """An entry with ``alt_functions`` yields one extra entry per alternative instantiation."""
    base = {k: v for k, v in d.items() if k != "alt_functions"}
    out = [base]
    for k, alt in enumerate(d.get("alt_functions", []), start=2):
        v = dict(base)
        v["id"] = f"{d['id']}/{k}"
        v["functions"] = {**d.get("functions", {}), **alt}
        out.append(v)
    return out


def load_catalog(path: str | Path | None = None) -> list[CatalogEntry]:
    if path is None:
        text = resources.files("e3fi").joinpath("data/catalog.json").read_text()
    else:
        text = Path(path).read_text()
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"catalog is not valid JSON: {exc}") from exc
    raw = data["entries"] if isinstance(data, dict) else data
    entries = []
    seen = set()
    for d in raw:
        for v in _expand_variants(d):
            if v["id"] in seen:
                raise CatalogError(f"duplicate entry id {v['id']}")
            seen.add(v["id"])
            entries.append(entry_from_dict(v))
    return entries


def select(entries: Sequence[CatalogEntry], pattern: str | None) -> list[CatalogEntry]:
    if not pattern:
        return list(entries)
    return [e for e in entries if fnmatch.fnmatchcase(e.id, pattern)]


# ---------------------------------------------------------------- verification


@dataclass
class DriftReport:
    name: str
    max_drift: float
    tol: float
    trajectories: int
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "max_drift": self.max_drift, "tol": self.tol,
                "trajectories": self.trajectories, "pass": self.passed}


@dataclass
class EntryReport:
    id: str
    negative_control: bool
    conditions: list[ConditionReport] = field(default_factory=list)
    drifts: list[DriftReport] = field(default_factory=list)
    classification: ClassificationResult | None = None
    claimed_classification: str | None = None
    errors: list[str] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    @property
    def classification_ok(self) -> bool:
        if self.claimed_classification is None:
            return True
        return self.classification is not None and self.classification.verdict == self.claimed_classification

    @property
    def passed(self) -> bool:
        return (not self.errors and all(c.passed for c in self.conditions)
                and all(d.passed for d in self.drifts) and self.classification_ok)

    @property
    def max_residual(self) -> float:
        vals = [c.max_residual for c in self.conditions if c.condition_name.startswith("dI/dt")]
        return max(vals) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "negative_control": self.negative_control,
            "pass": self.passed,
            "conditions": [c.to_dict() for c in self.conditions],
            "drifts": [d.to_dict() for d in self.drifts],
            "classification": self.classification.to_dict() if self.classification else None,
            "claimed_classification": self.claimed_classification,
            "classification_pass": self.classification_ok,
            "errors": self.errors,
        }


def entry_samples(entry: CatalogEntry, n: int, seed) -> Samples:
    guard = [entry.bound_V] + [e for _, e in entry.bound_fis()]
    return sample_points(n, seed, guard=guard)


def conservation_reports(entry: CatalogEntry, samples: Samples, tol: float) -> list[ConditionReport]:
    V = entry.bound_V
    out = []
    for f in entry.fis:
        I = entry.bind(f.expr)
        out.append(evaluate_condition(f"dI/dt = 0 for {f.name}", [total_time_derivative(I, V)], samples, tol))
        for rep in family_residuals(I, f.family, V, samples, tol, f.lam):
            rep.condition_name = f"{f.name}: {rep.condition_name}"
            out.append(rep)
    return out


def initial_conditions(rng: np.random.Generator, count: int) -> np.ndarray:
    q = rng.uniform(*POSITION_BOX, (count, 3))
    v = rng.uniform(*VELOCITY_BOX, (count, 3))
    return np.concatenate([q, v], axis=1).astype(complex)


def drift_reports(
    entry: CatalogEntry,
    tol: float = 1e-8,
    n_traj: int = 5,
    seed: int = DEFAULT_SEED,
    t_end: float = 10.0,
    h: float = 1e-3,
    max_attempts: int = 60,
) -> tuple[list[DriftReport], list[Trajectory]]:
    """Integrate ``n_traj`` regular trajectories and measure each integral's drift.

    Initial conditions come from the sampling box; a trajectory that aborts
    (singular approach or escape) or along which some integral is singular is
    replaced by a fresh draw.
    """
    rng = np.random.default_rng(seed)
    acc = Accelerator(entry.bound_V)
    exprs = [e for _, e in entry.bound_fis()]
    names = [n for n, _ in entry.bound_fis()]
    f = lambdify_numpy(exprs) if exprs else None
    worst = np.zeros(len(exprs))
    good: list[Trajectory] = []
    attempts = 0
    while len(good) < n_traj and attempts < max_attempts:
        attempts += 1
        ic = initial_conditions(rng, 1)[0]
        traj = integrate(acc, ic, t_end=t_end, h=h)
        if traj.aborted:
            continue
        if not exprs:
            good.append(traj)
            continue
        vals = f(*traj.columns())
        if not np.all(np.isfinite(vals)):
            continue
        mask = regular_mask(_traj_samples(traj), exprs, min_den=1e-4)
        if not mask.all():
            continue
        i0 = vals[:, :1]
        d = np.max(np.abs(vals - i0), axis=1) / np.maximum(1.0, np.abs(i0[:, 0]))
        worst = np.maximum(worst, d)
        good.append(traj)
    reps = [DriftReport(n, float(w), tol, len(good), bool(w <= tol and len(good) == n_traj))
            for n, w in zip(names, worst)]
    return reps, good


def _traj_samples(traj: Trajectory) -> Samples:
    return Samples(*traj.columns())


def claim_reports(entry: CatalogEntry, samples: Samples, tol: float) -> list[ConditionReport]:
    out = []
    c = entry.claims
    for lhs, rhs in c.relations:
        diff_e = sub(entry.parse_claim(lhs), entry.parse_claim(rhs))
        out.append(evaluate_condition(f"relation {lhs} = {rhs}", [diff_e], samples, tol))
    exprs = {f.name: entry.bind(f.expr) for f in entry.fis}
    exprs["H"] = entry.bind(hamiltonian(entry.V))
    for key, value in c.brackets.items():
        a, b = (s.strip() for s in key.split(","))
        e = sub(bracket(exprs[a], exprs[b]), entry.parse_claim(value))
        out.append(evaluate_condition(f"bracket {{{a},{b}}} = {value}", [e], samples, tol))
    for group in c.involution_sets:
        brs = []
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                brs.append(bracket(exprs[a], exprs[b]))
        out.append(evaluate_condition(f"involution {','.join(group)}", brs, samples, tol))
    for a, b in c.non_involution:
        e = bracket(exprs[a], exprs[b])
        vals = lambdify_numpy([e])(*samples.args())[0]
        vals = vals[np.isfinite(vals)]
        m = float(np.max(np.abs(vals))) if len(vals) else 0.0
        out.append(ConditionReport(f"non-involution {{{a},{b}}}", m, len(vals), len(samples) - len(vals),
                                   NON_INVOLUTION_FLOOR, m > NON_INVOLUTION_FLOOR))
    return out


def verify_entry(
    entry: CatalogEntry,
    tol_residual: float = 1e-10,
    tol_drift: float = 1e-8,
    samples: int = 200,
    seed: int = DEFAULT_SEED,
    drift: bool = True,
    classify_entry: bool = True,
) -> EntryReport:
    """Run every check attached to ``entry``."""
    rep = EntryReport(entry.id, entry.negative_control, claimed_classification=entry.claims.classification,
                      seed=seed)
    try:
        pts = entry_samples(entry, samples, seed)
        rep.conditions += conservation_reports(entry, pts, tol_residual)
        rep.conditions += claim_reports(entry, pts, tol_residual)
        if drift:
            rep.drifts, rep.trajectories = drift_reports(entry, tol_drift, seed=seed)
        if classify_entry:
            rep.classification = classify(entry.bound_fis(), entry.bound_V, pts)
    except (TooManySingularSamples, ExprError, ValueError) as exc:
        rep.errors.append(str(exc))
    return rep
