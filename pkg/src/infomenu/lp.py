"""Solver-neutral linear program container and the HiGHS backend adapter.

Every solver module in the package emits this one sparse LP form.  Solving
delegates to scipy's HiGHS interface; dual values are reported in the sign
convention of the *declared* objective sense (for a maximization problem the
dual of a binding "<=" row is the nonnegative marginal revenue of its rhs).

On-disk format (one item per line, whitespace-separated, ``repr`` floats so
round-trips are exact)::

    lp 1
    sense max
    var <name> <lb|-inf> <ub|+inf>
    obj <name> <coeff>
    con <name> <le|eq|ge> <rhs> <k> <var_1> <coeff_1> ... <var_k> <coeff_k>

Names must not contain whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import (
    BackendUnavailable,
    DuplicateVariable,
    InvalidInstance,
    NumericalFailure,
    UnknownConstraint,
)

LE, EQ, GE = "le", "eq", "ge"
FEAS_TOL = 1e-7


@dataclass
class Constraint:
    name: str
    coeffs: dict[str, float]
    relation: str
    rhs: float


@dataclass
class LinearProgram:
    """Sparse LP: named bounded variables, a sense, and named constraints."""

    sense: str = "max"
    variables: list[tuple[str, float | None, float | None]] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    _var_index: dict[str, int] = field(default_factory=dict, repr=False)
    _con_index: dict[str, int] = field(default_factory=dict, repr=False)

    def add_variable(self, name: str, lb: float | None = 0.0, ub: float | None = None) -> None:
        if name in self._var_index:
            raise DuplicateVariable(name)
        if lb is not None and ub is not None and lb > ub:
            raise InvalidInstance(f"variable {name}: lb {lb} > ub {ub}")
        self._var_index[name] = len(self.variables)
        self.variables.append((name, lb, ub))

    def set_objective(self, name: str, coeff: float) -> None:
        if name not in self._var_index:
            raise InvalidInstance(f"objective references unknown variable {name}")
        self.objective[name] = float(coeff)

    def add_constraint(self, name: str, coeffs: dict[str, float], relation: str, rhs: float) -> None:
        if name in self._con_index:
            raise InvalidInstance(f"duplicate constraint name {name}")
        if relation not in (LE, EQ, GE):
            raise InvalidInstance(f"bad relation {relation}")
        for v in coeffs:
            if v not in self._var_index:
                raise InvalidInstance(f"constraint {name} references unknown variable {v}")
        self._con_index[name] = len(self.constraints)
        self.constraints.append(Constraint(name, dict(coeffs), relation, float(rhs)))

    def add_column(self, name: str, lb: float | None, ub: float | None,
                   objective_coeff: float, entries: dict[str, float]) -> None:
        """Extend the LP with a fresh variable touching existing constraints."""
        for con in entries:
            if con not in self._con_index:
                raise UnknownConstraint(con)
        self.add_variable(name, lb, ub)
        if objective_coeff != 0.0:
            self.objective[name] = float(objective_coeff)
        for con, coeff in entries.items():
            self.constraints[self._con_index[con]].coeffs[name] = float(coeff)

    def n_variables(self) -> int:
        return len(self.variables)

    def n_constraints(self) -> int:
        return len(self.constraints)


@dataclass
class LPSolution:
    status: str                                  # Optimal | Infeasible | Unbounded
    values: dict[str, float]
    objective_value: float
    duals: dict[str, float] | None = None

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def solve(lp: LinearProgram, backend: str = "highs", want_duals: bool = True) -> LPSolution:
    """Solve the LP; Optimal solutions respect all constraints within 1e-7.

    Duals are attached when the backend exposes them (HiGHS does); callers
    needing duals without backend support must extract them themselves (see
    ``dual_values_via_auxiliary``).
    """
    if backend != "highs":
        raise BackendUnavailable(f"unknown LP backend {backend!r}")
    n = lp.n_variables()
    sign = -1.0 if lp.sense == "max" else 1.0
    c = np.zeros(n)
    for v, coeff in lp.objective.items():
        c[lp._var_index[v]] = sign * coeff

    ub_rows, ub_rhs, ub_names = [], [], []
    eq_rows, eq_rhs, eq_names = [], [], []
    for con in lp.constraints:
        idx = [lp._var_index[v] for v in con.coeffs]
        vals = list(con.coeffs.values())
        if con.relation == EQ:
            eq_rows.append((idx, vals))
            eq_rhs.append(con.rhs)
            eq_names.append(con.name)
        elif con.relation == LE:
            ub_rows.append((idx, vals))
            ub_rhs.append(con.rhs)
            ub_names.append(con.name)
        else:  # GE -> negate into LE
            ub_rows.append((idx, [-v for v in vals]))
            ub_rhs.append(-con.rhs)
            ub_names.append(con.name)

    def to_csr(rows):
        data, ri, ci = [], [], []
        for r, (idx, vals) in enumerate(rows):
            ri.extend([r] * len(idx))
            ci.extend(idx)
            data.extend(vals)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

    kwargs = {}
    if ub_rows:
        kwargs["A_ub"] = to_csr(ub_rows)
        kwargs["b_ub"] = np.array(ub_rhs)
    if eq_rows:
        kwargs["A_eq"] = to_csr(eq_rows)
        kwargs["b_eq"] = np.array(eq_rhs)
    bounds = [(lb, ub) for _, lb, ub in lp.variables]
    res = linprog(c, bounds=bounds, method="highs", **kwargs)

    if res.status == 2:
        return LPSolution("Infeasible", {}, float("nan"))
    if res.status == 3:
        return LPSolution("Unbounded", {}, float("inf") if lp.sense == "max" else float("-inf"))
    if res.status != 0:
        raise NumericalFailure(f"LP backend stopped with status {res.status}: {res.message}")

    values = {name: float(res.x[i]) for i, (name, _, _) in enumerate(lp.variables)}
    objective = float(sum(coeff * values[v] for v, coeff in lp.objective.items()))
    duals = None
    if want_duals:
        duals = {}
        # linprog minimizes; marginals are d(min-obj)/d(rhs).  Convert to the
        # declared sense, and undo the GE->LE negation.
        if ub_rows and res.ineqlin is not None:
            for name, marg in zip(ub_names, np.atleast_1d(res.ineqlin.marginals)):
                con = lp.constraints[lp._con_index[name]]
                d = sign * float(marg)
                duals[name] = -d if con.relation == GE else d
        if eq_rows and res.eqlin is not None:
            for name, marg in zip(eq_names, np.atleast_1d(res.eqlin.marginals)):
                duals[name] = sign * float(marg)
    return LPSolution("Optimal", values, objective, duals)


def check_feasibility(lp: LinearProgram, values: dict[str, float], tol: float = FEAS_TOL) -> float:
    """Largest constraint/bound violation of ``values``; <= tol for Optimal output."""
    worst = 0.0
    for name, lb, ub in lp.variables:
        x = values[name]
        if lb is not None:
            worst = max(worst, lb - x)
        if ub is not None:
            worst = max(worst, x - ub)
    for con in lp.constraints:
        lhs = sum(coeff * values[v] for v, coeff in con.coeffs.items())
        if con.relation == LE:
            worst = max(worst, lhs - con.rhs)
        elif con.relation == GE:
            worst = max(worst, con.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - con.rhs))
    return worst


def dual_values_via_auxiliary(lp: LinearProgram) -> dict[str, float]:
    """Recover constraint duals by solving the explicit dual LP.

    Fallback for backends without marginals.  The primal is normalized to a
    maximization with free variables (bounds become rows, GE rows are negated
    into LE); the textbook dual is then solved with the same backend.  Duals
    are returned in the declared sense of ``lp``.
    """
    sign = 1.0 if lp.sense == "max" else -1.0
    # Normalized rows: (tag, coeffs, rhs, is_eq); tag is the original name or
    # None for bound rows.
    rows: list[tuple[str | None, dict[str, float], float, bool]] = []
    for con in lp.constraints:
        if con.relation == EQ:
            rows.append((con.name, con.coeffs, con.rhs, True))
        elif con.relation == LE:
            rows.append((con.name, con.coeffs, con.rhs, False))
        else:
            rows.append((con.name, {v: -c for v, c in con.coeffs.items()}, -con.rhs, False))
    for name, lb, ub in lp.variables:
        if ub is not None:
            rows.append((None, {name: 1.0}, ub, False))
        if lb is not None:
            rows.append((None, {name: -1.0}, -lb, False))

    dual = LinearProgram(sense="min")
    for r, (_, _, rhs, is_eq) in enumerate(rows):
        dual.add_variable(f"y{r}", None if is_eq else 0.0, None)
        if rhs != 0.0:
            dual.set_objective(f"y{r}", rhs)
    cols: dict[str, dict[str, float]] = {name: {} for name, _, _ in lp.variables}
    for r, (_, coeffs, _, _) in enumerate(rows):
        for v, coeff in coeffs.items():
            cols[v][f"y{r}"] = coeff
    for name, _, _ in lp.variables:
        dual.add_constraint(f"d[{name}]", cols[name], EQ, sign * lp.objective.get(name, 0.0))
    sol = solve(dual, want_duals=False)
    if sol.status != "Optimal":
        raise NumericalFailure(f"auxiliary dual LP is {sol.status}")
    out = {}
    for r, (tag, _, _, is_eq) in enumerate(rows):
        if tag is None:
            continue
        con = lp.constraints[lp._con_index[tag]]
        y = sol.values[f"y{r}"]
        if con.relation == GE:
            y = -y
        out[tag] = sign * y
    return out


def serialize(lp: LinearProgram) -> str:
    lines = ["lp 1", f"sense {lp.sense}"]
    for name, lb, ub in lp.variables:
        lo = "-inf" if lb is None else repr(lb)
        hi = "+inf" if ub is None else repr(ub)
        lines.append(f"var {name} {lo} {hi}")
    for name, coeff in lp.objective.items():
        lines.append(f"obj {name} {coeff!r}")
    for con in lp.constraints:
        parts = [f"con {con.name} {con.relation} {con.rhs!r} {len(con.coeffs)}"]
        for v, coeff in con.coeffs.items():
            parts.append(f"{v} {coeff!r}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse(text: str) -> LinearProgram:
    lp = LinearProgram()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["lp", "1"]:
        raise InvalidInstance("not an lp v1 document")
    for ln in lines[1:]:
        tok = ln.split()
        if tok[0] == "sense":
            lp.sense = tok[1]
        elif tok[0] == "var":
            lb = None if tok[2] == "-inf" else float(tok[2])
            ub = None if tok[3] == "+inf" else float(tok[3])
            lp.add_variable(tok[1], lb, ub)
        elif tok[0] == "obj":
            lp.set_objective(tok[1], float(tok[2]))
        elif tok[0] == "con":
            name, rel, rhs, k = tok[1], tok[2], float(tok[3]), int(tok[4])
            body = tok[5:]
            if len(body) != 2 * k:
                raise InvalidInstance(f"constraint {name} expects {k} terms")
            coeffs = {body[2 * i]: float(body[2 * i + 1]) for i in range(k)}
            lp.add_constraint(name, coeffs, rel, rhs)
        else:
            raise InvalidInstance(f"unknown record {tok[0]!r}")
    return lp
