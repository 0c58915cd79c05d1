"""Generic LP container, CPLEX-LP text IO and solver backends.

Every variable is bounded below by zero (no free variables). Rows are either
``<=`` or ``=``; each row carries a name and a family tag so infeasibility
reports can point at a constraint group.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import simplex

OPTIMAL, INFEASIBLE, UNBOUNDED, ERROR = "Optimal", "Infeasible", "Unbounded", "Error"

_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


@dataclass
class LPModel:
    var_names: list[str]
    objective: np.ndarray
    upper: np.ndarray
    A: sp.csr_matrix
    senses: list[str]
    rhs: np.ndarray
    row_names: list[str]
    row_families: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.var_names)
        if self.objective.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("objective/upper length must equal number of variables")
        if self.A.shape != (len(self.senses), n):
            raise ValueError(f"constraint matrix shape {self.A.shape} != ({len(self.senses)}, {n})")
        if not (len(self.rhs) == len(self.row_names) == len(self.row_families) == len(self.senses)):
            raise ValueError("row metadata lengths disagree")
        bad = [s for s in self.senses if s not in ("<=", "=")]
        if bad:
            raise ValueError(f"unsupported row senses {set(bad)}")
        if np.any(self.upper < 0):
            raise ValueError("upper bounds must be >= 0")
        for name in list(self.var_names) + list(self.row_names):
            if not _NAME_OK.match(name):
                raise ValueError(f"name {name!r} is not LP-format safe")
        if len(set(self.var_names)) != n:
            raise ValueError("duplicate variable names")

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.senses)

    def split(self):
        """(A_ub, b_ub, A_eq, b_eq) as CSR matrices / arrays."""
        senses = np.array(self.senses)
        ub_rows = np.flatnonzero(senses == "<=")
        eq_rows = np.flatnonzero(senses == "=")
        return self.A[ub_rows], self.rhs[ub_rows], self.A[eq_rows], self.rhs[eq_rows]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation (>= 0) at ``x``."""
        ax = self.A @ x
        senses = np.array(self.senses)
        viol = np.where(senses == "=", np.abs(ax - self.rhs), np.maximum(0.0, ax - self.rhs))
        return viol


class ModelBuilder:
    """Accumulates variables and sparse rows, then freezes into an LPModel."""

    def __init__(self):
        self.names: list[str] = []
        self.obj: list[float] = []
        self.ub: list[float] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.families: list[str] = []

    def add_var(self, name: str, obj: float = 0.0, ub: float = np.inf) -> int:
        self.names.append(name)
        self.obj.append(obj)
        self.ub.append(ub)
        return len(self.names) - 1

    def add_row(self, name: str, family: str, cols, vals, sense: str, rhs: float) -> int:
        i = len(self.senses)
        for j, v in zip(cols, vals):
            if v != 0:
                self._rows.append(i)
                self._cols.append(j)
                self._vals.append(float(v))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name)
        self.families.append(family)
        return i

    def build(self, meta: dict | None = None) -> LPModel:
        A = sp.csr_matrix(
            (self._vals, (self._rows, self._cols)), shape=(len(self.senses), len(self.names)), dtype=float
        )
        A.sum_duplicates()
        return LPModel(
            list(self.names),
            np.asarray(self.obj, dtype=float),
            np.asarray(self.ub, dtype=float),
            A,
            list(self.senses),
            np.asarray(self.rhs, dtype=float),
            list(self.row_names),
            list(self.families),
            meta or {},
        )


# -- solving -------------------------------------------------------------------


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    message: str = ""


def _solve_highs(model: LPModel) -> LPSolution:
    from scipy.optimize import linprog

    A_ub, b_ub, A_eq, b_eq = model.split()
    bounds = [(0.0, None if not np.isfinite(u) else float(u)) for u in model.upper]
    res = linprog(
        model.objective,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
    )
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, ERROR)
    if status != OPTIMAL:
        return LPSolution(status, None, None, res.message)
    x = np.maximum(res.x, 0.0)
    return LPSolution(OPTIMAL, x, float(model.objective @ x), res.message)


def _solve_simplex(model: LPModel) -> LPSolution:
    A_ub, b_ub, A_eq, b_eq = model.split()
    res = simplex.solve_dense(
        model.objective, A_ub.toarray(), b_ub, A_eq.toarray(), b_eq, model.upper
    )
    if res.status != simplex.OPTIMAL:
        status = {simplex.INFEASIBLE: INFEASIBLE, simplex.UNBOUNDED: UNBOUNDED}.get(res.status, ERROR)
        return LPSolution(status, None, None, f"simplex: {res.status}")
    return LPSolution(OPTIMAL, res.x, res.objective, f"simplex: {res.iterations} pivots")


BACKENDS: dict[str, Callable[[LPModel], LPSolution]] = {
    "highs": _solve_highs,
    "simplex": _solve_simplex,
}


def solve_model(model: LPModel, backend: str = "highs") -> LPSolution:
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown LP backend {backend!r}; choose from {sorted(BACKENDS)}") from None
    return fn(model)


def elastic_violation(model: LPModel, backend: str = "highs", hard_families: tuple[str, ...] = ()) -> dict[str, float]:
    """Minimum total scaled slack needed to satisfy each row family.

    Each row outside ``hard_families`` gets non-negative slack (two for
    equalities) normalised by the row's scale; the optimum's slack is summed
    per family. A feasible model yields all zeros.
    """
    n, m = model.num_vars, model.num_rows
    A = model.A.tocsr()
    row_scale = np.maximum(1.0, np.maximum(np.abs(model.rhs), np.asarray(abs(A).max(axis=1).todense()).ravel()))
    s_rows, s_vals, fams = [], [], []
    for i, sense in enumerate(model.senses):
        if model.row_families[i] in hard_families:
            continue
        for sign in ((-1.0, 1.0) if sense == "=" else (-1.0,)):
            s_rows.append(i)
            s_vals.append(sign * row_scale[i])
            fams.append(model.row_families[i])
    k = len(s_rows)
    S = sp.csr_matrix((s_vals, (s_rows, np.arange(k))), shape=(m, k))
    A2 = sp.hstack([A, S]).tocsr()
    relaxed = LPModel(
        list(model.var_names) + [f"slack_{j}" for j in range(k)],
        np.concatenate([np.zeros(n), np.ones(k)]),
        np.concatenate([model.upper, np.full(k, np.inf)]),
        A2,
        list(model.senses),
        model.rhs.copy(),
        list(model.row_names),
        list(model.row_families),
    )
    sol = solve_model(relaxed, backend)
    out = {f: 0.0 for f in dict.fromkeys(model.row_families)}
    if sol.status != OPTIMAL:
        return out
    for j, fam in enumerate(fams):
        out[fam] += float(sol.x[n + j])
    return out


# -- CPLEX LP format -----------------------------------------------------------


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _expr(cols, vals, names) -> list[str]:
    terms = []
    for j, v in zip(cols, vals):
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1 else _num(mag) + " "
        terms.append(f"{sign} {coef}{names[j]}")
    if terms and terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    return terms


def _wrap(head: str, terms: list[str], tail: str = "", width: int = 200) -> list[str]:
    lines, cur = [], head
    for t in terms:
        if len(cur) + len(t) + 1 > width:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    if tail:
        if len(cur) + len(tail) + 1 > width:
            lines.append(cur)
            cur = "   "
        cur += " " + tail
    lines.append(cur)
    return lines


def format_lp(model: LPModel, comment: str | None = None) -> str:
    """Render ``model`` as CPLEX LP text (Minimize / Subject To / Bounds / End)."""
    out = []
    if comment:
        out.extend(f"\\ {line}" for line in comment.splitlines())
    out.append("Minimize")
    nz = np.flatnonzero(model.objective)
    if len(nz):
        out.extend(_wrap(" obj:", _expr(nz, model.objective[nz], model.var_names)))
    else:
        out.append(f" obj: 0 {model.var_names[0]}" if model.var_names else " obj:")
    out.append("Subject To")
    A = model.A.tocsr()
    for i in range(model.num_rows):
        start, end = A.indptr[i], A.indptr[i + 1]
        cols, vals = A.indices[start:end], A.data[start:end]
        order = np.argsort(cols, kind="stable")
        terms = _expr(cols[order], vals[order], model.var_names)
        if not terms:
            terms = [f"0 {model.var_names[0]}"]
        op = "<=" if model.senses[i] == "<=" else "="
        out.extend(_wrap(f" {model.row_names[i]}:", terms, f"{op} {_num(model.rhs[i])}"))
    out.append("Bounds")
    for j, name in enumerate(model.var_names):
        u = model.upper[j]
        out.append(f" 0 <= {name} <= {_num(u)}" if np.isfinite(u) else f" {name} >= 0")
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(model: LPModel, path: str | Path, comment: str | None = None) -> None:
    Path(path).write_text(format_lp(model, comment))


_TERM = re.compile(r"([+-]?)\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][A-Za-z0-9_.]*)")


def _parse_expr(text: str) -> list[tuple[str, float]]:
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse LP expression near {text[pos:pos + 30]!r}")
        sign, coef, name = m.groups()
        v = float(coef) if coef else 1.0
        out.append((name, -v if sign == "-" else v))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return out


def read_lp(path: str | Path) -> LPModel:
    """Parse the subset of CPLEX LP that :func:`format_lp` emits."""
    section = None
    obj_text, rows, bounds = [], [], []
    current: list[str] | None = None
    for raw in Path(path).read_text().splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        head = line.strip().lower()
        if head in ("minimize", "minimise", "min"):
            section = "obj"
            continue
        if head in ("subject to", "st", "s.t."):
            section = "st"
            continue
        if head == "bounds":
            section = "bounds"
            continue
        if head == "end":
            break
        if section == "obj":
            obj_text.append(line)
        elif section == "st":
            if ":" in line and not line.startswith("   "):
                current = [line]
                rows.append(current)
            else:
                current.append(line)
        elif section == "bounds":
            bounds.append(line.strip())

    names: list[str] = []
    index: dict[str, int] = {}

    def col(name):
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    obj_body = " ".join(obj_text).split(":", 1)[-1]
    obj_terms = _parse_expr(obj_body) if obj_body.strip() else []
    parsed_rows = []
    for parts in rows:
        text = " ".join(p.strip() for p in parts)
        name, body = text.split(":", 1)
        m = re.match(r"(.*?)(<=|>=|=)\s*([-+0-9.eE]+)\s*$", body)
        if not m:
            raise ValueError(f"malformed constraint {text!r}")
        expr, op, rhs = m.groups()
        parsed_rows.append((name.strip(), _parse_expr(expr), op, float(rhs)))
    for _, terms, _, _ in parsed_rows:
        for n, _ in terms:
            col(n)
    for n, _ in obj_terms:
        col(n)
    upper: dict[str, float] = {}
    for b in bounds:
        m = re.match(r"^0\s*<=\s*(\S+)\s*<=\s*(\S+)$", b)
        if m:
            upper[m.group(1)] = float(m.group(2))
            col(m.group(1))
            continue
        m = re.match(r"^(\S+)\s*>=\s*0$", b)
        if m:
            col(m.group(1))
            continue
        raise ValueError(f"unsupported bound line {b!r}")

    builder = ModelBuilder()
    obj = np.zeros(len(names))
    for n, v in obj_terms:
        obj[index[n]] += v
    for n in names:
        builder.add_var(n, obj[index[n]], upper.get(n, np.inf))
    for name, terms, op, rhs in parsed_rows:
        cols = [index[n] for n, _ in terms]
        vals = [v for _, v in terms]
        if op == ">=":
            vals = [-v for v in vals]
            rhs = -rhs
            op = "<="
        builder.add_row(name, name.split("_", 1)[0], cols, vals, op, rhs)
    return builder.build()
