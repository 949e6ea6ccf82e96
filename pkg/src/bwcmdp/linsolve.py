"""Exact rational linear-system solving by primal simplex with Bland's rule.

The solver decides feasibility of systems mixing equalities, weak and
strict inequalities over rational coefficients.  Strict rows are handled
by one shared slack variable y >= 0: each `expr > rhs` becomes
`expr >= rhs + y`, and y is maximized.  The original system is solvable
iff the relaxation is feasible with optimum y* > 0 (or y unbounded);
a single shared slack suffices because any fully strict solution has a
positive minimum margin, and conversely y* > 0 makes every strict row
strict at once.

Everything is computed in `fractions.Fraction`; no floating point touches
a decision anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from bwcmdp.rationals import format_rational

EQ = "="
GE = ">="
GT = ">"

_RELATIONS = (EQ, GE, GT)


@dataclass(frozen=True)
class Constraint:
    coeffs: dict[str, Fraction]
    relation: str
    rhs: Fraction

    @staticmethod
    def build(coeffs: dict, relation: str, rhs) -> "Constraint":
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        return Constraint({str(k): Fraction(v) for k, v in coeffs.items() if Fraction(v) != 0},
                          relation, Fraction(rhs))


@dataclass
class LinearSystem:
    """Ordered variables plus constraints; `nonneg` forces all variables >= 0."""

    variables: list[str] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    nonneg: bool = True

    def add(self, coeffs: dict, relation: str, rhs) -> None:
        c = Constraint.build(coeffs, relation, rhs)
        for v in c.coeffs:
            if v not in self._var_set():
                raise KeyError(f"constraint references undeclared variable {v!r}")
        self.constraints.append(c)

    def _var_set(self) -> set[str]:
        cached = getattr(self, "_vars_cache", None)
        if cached is None or len(cached) != len(self.variables):
            cached = set(self.variables)
            self._vars_cache = cached
        return cached

    def has_strict(self) -> bool:
        return any(c.relation == GT for c in self.constraints)

    def dump_text(self) -> str:
        """Human-readable LP text: one constraint per line."""
        lines = [f"vars: {' '.join(self.variables)}" + ("  (all >= 0)" if self.nonneg else "")]
        for c in self.constraints:
            terms = []
            for v in self.variables:
                a = c.coeffs.get(v)
                if not a:
                    continue
                sign = "+" if a > 0 else "-"
                mag = abs(a)
                t = v if mag == 1 else f"{format_rational(mag)}*{v}"
                terms.append(f"{sign} {t}")
            expr = " ".join(terms) if terms else "0"
            if expr.startswith("+ "):
                expr = expr[2:]
            lines.append(f"{expr} {c.relation} {format_rational(c.rhs)}")
        return "\n".join(lines)


@dataclass(frozen=True)
class LpOutcome:
    """Result of solving a LinearSystem.

    status is "feasible", "infeasible" or "slack-unbounded".  For feasible
    outcomes `assignment` satisfies every constraint exactly and `slack`
    is the maximal shared strict margin (None when the system has no
    strict rows).  For slack-unbounded systems the assignment witnesses an
    arbitrarily large margin (reported at margin 1).
    """

    status: str
    assignment: Optional[dict[str, Fraction]] = None
    slack: Optional[Fraction] = None

    @property
    def strict_feasible(self) -> bool:
        """Whether the original system, strict rows included, is solvable."""
        if self.status == "infeasible":
            return False
        if self.status == "slack-unbounded":
            return True
        return self.slack is None or self.slack > 0


_SLACK = "__y"


def solve(system: LinearSystem) -> LpOutcome:
    """Decide a LinearSystem; see the module docstring for strict-row semantics."""
    seen = set()
    for v in system.variables:
        if v in seen:
            raise ValueError(f"duplicate variable {v!r}")
        seen.add(v)
    if _SLACK in seen:
        raise ValueError(f"variable name {_SLACK!r} is reserved")
    for c in system.constraints:
        for v in c.coeffs:
            if v not in seen:
                raise ValueError(f"constraint references undeclared variable {v!r}")

    strict = system.has_strict()
    variables = list(system.variables) + ([_SLACK] if strict else [])
    rows = []
    for c in system.constraints:
        coeffs = dict(c.coeffs)
        rel = c.relation
        if rel == GT:
            coeffs[_SLACK] = coeffs.get(_SLACK, Fraction(0)) - 1
            rel = GE
        rows.append((coeffs, rel, c.rhs))

    objective = {_SLACK: Fraction(1)} if strict else {}
    nonneg = set(variables) if system.nonneg else ({_SLACK} if strict else set())

    status, assignment, value = _simplex(variables, nonneg, rows, objective)
    if status == "infeasible":
        return LpOutcome("infeasible")
    if not strict:
        assignment.pop(_SLACK, None)
        return LpOutcome("feasible", assignment, None)
    if status == "unbounded":
        # Re-solve with the slack pinned at 1 to hand back a concrete witness.
        capped = [(dict(c), r, b) for c, r, b in rows]
        capped.append(({_SLACK: Fraction(1)}, EQ, Fraction(1)))
        st2, asg2, _ = _simplex(variables, nonneg, capped, {})
        if st2 != "optimal":
            raise AssertionError("unbounded slack but capped system infeasible")
        asg2.pop(_SLACK)
        return LpOutcome("slack-unbounded", asg2, None)
    y = assignment.pop(_SLACK)
    return LpOutcome("feasible", assignment, y)


def maximize(variables: Sequence[str], nonneg_vars: set[str],
             constraints: Sequence[tuple[dict, str, Fraction]],
             objective: dict) -> tuple[str, Optional[dict[str, Fraction]], Optional[Fraction]]:
    """Maximize a linear objective over {=, >=} constraints.

    Returns (status, assignment, value) with status in
    {"optimal", "infeasible", "unbounded"}; on "unbounded" the assignment
    is a feasible point from which the objective ray leaves.
    """
    rows = [(dict((k, Fraction(v)) for k, v in c.items()), r, Fraction(b))
            for c, r, b in constraints]
    obj = {k: Fraction(v) for k, v in objective.items()}
    st, asg, val = _simplex(list(variables), set(nonneg_vars), rows, obj)
    if st == "infeasible":
        return "infeasible", None, None
    return st, asg, val


def _simplex(variables, nonneg, rows, objective):
    """Two-phase primal simplex on named variables.

    Free variables are split into positive and negative parts; weak
    inequalities get surplus variables.  Bland's anti-cycling rule is used
    in both phases, so termination is guaranteed.
    """
    cols: list[str] = []
    col_of: dict[str, int] = {}

    def add_col(name):
        col_of[name] = len(cols)
        cols.append(name)

    split: dict[str, tuple[str, str]] = {}
    for v in variables:
        if v in nonneg:
            add_col(v)
        else:
            split[v] = (v + "⁺", v + "⁻")
            add_col(split[v][0])
            add_col(split[v][1])

    def expand(coeffs):
        out: dict[int, Fraction] = {}
        for v, a in coeffs.items():
            a = Fraction(a)
            if a == 0:
                continue
            if v in split:
                p, n = split[v]
                out[col_of[p]] = out.get(col_of[p], Fraction(0)) + a
                out[col_of[n]] = out.get(col_of[n], Fraction(0)) - a
            else:
                out[col_of[v]] = out.get(col_of[v], Fraction(0)) + a
        return out

    matrix: list[dict[int, Fraction]] = []
    rhs: list[Fraction] = []
    for i, (coeffs, rel, b) in enumerate(rows):
        row = expand(coeffs)
        if rel == GE:
            name = f"__s{i}"
            add_col(name)
            row[col_of[name]] = Fraction(-1)
        elif rel != EQ:
            raise ValueError(f"unsupported relation {rel!r} at simplex level")
        matrix.append(row)
        rhs.append(Fraction(b))

    ncols = len(cols)
    nrows = len(matrix)
    tab = [[Fraction(0)] * ncols + [Fraction(0)] for _ in range(nrows)]
    for i, row in enumerate(matrix):
        sign = 1 if rhs[i] >= 0 else -1
        for j, a in row.items():
            tab[i][j] = a * sign
        tab[i][ncols] = rhs[i] * sign

    # Phase 1: artificial basis, minimize artificial mass.
    art0 = ncols
    for i in range(nrows):
        for r in range(nrows):
            tab[r].insert(ncols + i, Fraction(1) if r == i else Fraction(0))
    total = ncols + nrows
    basis = [art0 + i for i in range(nrows)]

    obj1 = [Fraction(0)] * (total + 1)
    for j in range(art0, total):
        obj1[j] = Fraction(-1)
    _price_out(tab, obj1, basis)
    _iterate(tab, obj1, basis, total, blocked=())
    if obj1[total] != 0:
        return "infeasible", None, None

    _evict_artificials(tab, basis, art0, total)
    live = [i for i in range(len(tab)) if basis[i] < art0 or any(tab[i][j] != 0 for j in range(art0))]
    keep = []
    basis2 = []
    for i, row in enumerate(tab):
        if basis[i] >= art0:
            # Redundant all-zero row (after eviction attempts): drop it.
            continue
        keep.append(row)
        basis2.append(basis[i])
    tab = keep
    basis = basis2
    del live

    obj_expanded = expand(objective)
    obj2 = [Fraction(0)] * (total + 1)
    for j, a in obj_expanded.items():
        obj2[j] = a
    _price_out(tab, obj2, basis)
    status = _iterate(tab, obj2, basis, total, blocked=tuple(range(art0, total)))

    assignment = {v: Fraction(0) for v in cols}
    for i, bvar in enumerate(basis):
        if bvar < art0:
            assignment[cols[bvar]] = tab[i][total]
    merged: dict[str, Fraction] = {}
    for v in variables:
        if v in split:
            p, n = split[v]
            merged[v] = assignment[p] - assignment[n]
        else:
            merged[v] = assignment[v]
    value = sum((Fraction(a) * merged[v] for v, a in objective.items()), Fraction(0))
    if status == "unbounded":
        return "unbounded", merged, None
    return "optimal", merged, value


def _price_out(tab, obj, basis):
    total = len(obj) - 1
    for i, bvar in enumerate(basis):
        c = obj[bvar]
        if c != 0:
            row = tab[i]
            for j in range(total + 1):
                if row[j] != 0:
                    obj[j] -= c * row[j]


def _evict_artificials(tab, basis, art0, total):
    for i in range(len(tab)):
        if basis[i] < art0:
            continue
        row = tab[i]
        pivot_col = next((j for j in range(art0) if row[j] != 0), None)
        if pivot_col is not None:
            _pivot(tab, None, basis, i, pivot_col)


def _iterate(tab, obj, basis, total, blocked):
    blocked_set = set(blocked)
    while True:
        enter = None
        for j in range(total):
            if j in blocked_set:
                continue
            if obj[j] > 0:
                enter = j
                break
        if enter is None:
            return "optimal"
        leave = None
        best = None
        for i, row in enumerate(tab):
            a = row[enter]
            if a > 0:
                ratio = row[total] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave is None:
            return "unbounded"
        _pivot(tab, obj, basis, leave, enter)


def _pivot(tab, obj, basis, r, c):
    total = len(tab[r]) - 1
    row = tab[r]
    p = row[c]
    if p != 1:
        inv = Fraction(1) / p
        tab[r] = row = [x * inv for x in row]
    for i, other in enumerate(tab):
        if i == r:
            continue
        f = other[c]
        if f != 0:
            tab[i] = [x - f * y for x, y in zip(other, row)]
    if obj is not None:
        f = obj[c]
        if f != 0:
            for j in range(total + 1):
                obj[j] -= f * row[j]
    basis[r] = c


def residuals(system: LinearSystem, assignment: dict[str, Fraction]) -> list[Fraction]:
    """lhs - rhs for every constraint under an assignment, in order."""
    out = []
    for c in system.constraints:
        lhs = sum((a * assignment.get(v, Fraction(0)) for v, a in c.coeffs.items()), Fraction(0))
        out.append(lhs - c.rhs)
    return out


def check_assignment(system: LinearSystem, outcome: LpOutcome) -> bool:
    """Exact re-substitution: equalities to zero residue, strict rows to margin >= slack."""
    if outcome.assignment is None:
        return False
    asg = outcome.assignment
    if system.nonneg and any(asg.get(v, Fraction(0)) < 0 for v in system.variables):
        return False
    margin = outcome.slack if outcome.slack is not None else Fraction(1)
    for c, res in zip(system.constraints, residuals(system, asg)):
        if c.relation == EQ and res != 0:
            return False
        if c.relation == GE and res < 0:
            return False
        if c.relation == GT and res < margin:
            return False
    return True
