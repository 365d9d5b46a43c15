"""Dense two-phase simplex for small linear programs.

Problem form:

    minimize    c . x
    subject to  A_eq x  = b_eq
                A_ub x <= b_ub
                lower <= x <= upper   (entries may be -inf / +inf)

The solver converts to standard form (finite lower bounds shifted to zero,
upper-bounded-below-only variables mirrored, doubly-unbounded variables
split into positive parts, finite upper bounds and inequality rows given
slacks), runs phase 1 with artificial variables, then phase 2 with Dantzig
pricing. After 50 consecutive degenerate pivots it switches permanently to
Bland's rule, which guarantees termination. Basic values are re-solved
against the original standard-form matrix at the end so feasibility
residuals do not inherit tableau roundoff.

Dispatch instances here are a few hundred rows, so a dense tableau is
adequate and easy to audit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_PIVOT_TOL = 1e-11
_BLAND_STALL = 50


class LpError(ValueError):
    """Malformed linear program or solution."""


class IterationLimitError(RuntimeError):
    """The simplex hit its iteration cap before classifying the program."""


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """Min-cost LP with equality rows, inequality rows, and box bounds."""

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise LpError("objective must be a non-empty vector")
        n = c.size
        if not np.isfinite(c).all():
            raise LpError("objective coefficients must be finite")

        def mat(a, b, label):
            if a is None or (hasattr(a, "size") and np.asarray(a).size == 0):
                return np.zeros((0, n)), np.zeros(0)
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if a.shape[1] != n:
                raise LpError(f"{label} rows have width {a.shape[1]}, need {n}")
            if b.shape != (a.shape[0],):
                raise LpError(f"{label} has {a.shape[0]} rows but {b.size} rhs values")
            if not (np.isfinite(a).all() and np.isfinite(b).all()):
                raise LpError(f"{label} coefficients must be finite")
            return a, b

        a_eq, b_eq = mat(self.A_eq, self.b_eq, "A_eq")
        a_ub, b_ub = mat(self.A_ub, self.b_ub, "A_ub")
        lower = (
            np.full(n, -np.inf)
            if self.lower is None
            else np.asarray(self.lower, dtype=float).copy()
        )
        upper = (
            np.full(n, np.inf)
            if self.upper is None
            else np.asarray(self.upper, dtype=float).copy()
        )
        if lower.shape != (n,) or upper.shape != (n,):
            raise LpError("bounds must have one entry per variable")
        if np.isnan(lower).any() or np.isnan(upper).any():
            raise LpError("bounds must not be NaN")
        if (lower > upper).any():
            j = int(np.argmax(lower > upper))
            raise LpError(f"variable {j}: lower bound {lower[j]} > upper {upper[j]}")
        names = self.names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != n:
                raise LpError(f"{len(names)} names for {n} variables")
        for attr, val in (
            ("c", c),
            ("A_eq", a_eq),
            ("b_eq", b_eq),
            ("A_ub", a_ub),
            ("b_ub", b_ub),
            ("lower", lower),
            ("upper", upper),
            ("names", names),
        ):
            object.__setattr__(self, attr, val)

    @property
    def n_vars(self) -> int:
        return int(self.c.size)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float | None
    iterations: int


@dataclass(frozen=True)
class Violation:
    kind: str  # "eq" | "ub" | "lower" | "upper" | "objective"
    index: int | None
    magnitude: float
    message: str


def check_solution(
    lp: LinearProgram, solution: LpSolution, tol: float = 1e-6
) -> list[Violation]:
    """Every constraint or bound violated beyond ``tol``, with magnitudes.

    An empty list certifies primal feasibility (and a consistent reported
    objective) at that tolerance.
    """
    if solution.x is None:
        raise LpError("solution carries no variable values")
    x = np.asarray(solution.x, dtype=float)
    if x.shape != (lp.n_vars,):
        raise LpError(f"solution has {x.size} values for {lp.n_vars} variables")
    out: list[Violation] = []
    if lp.A_eq.shape[0]:
        resid = lp.A_eq @ x - lp.b_eq
        for i in np.nonzero(np.abs(resid) > tol)[0]:
            out.append(
                Violation(
                    "eq",
                    int(i),
                    float(abs(resid[i])),
                    f"equality row {i} off by {resid[i]:.3e}",
                )
            )
    if lp.A_ub.shape[0]:
        excess = lp.A_ub @ x - lp.b_ub
        for i in np.nonzero(excess > tol)[0]:
            out.append(
                Violation(
                    "ub",
                    int(i),
                    float(excess[i]),
                    f"inequality row {i} exceeded by {excess[i]:.3e}",
                )
            )
    low_gap = lp.lower - x
    for j in np.nonzero(low_gap > tol)[0]:
        out.append(
            Violation(
                "lower",
                int(j),
                float(low_gap[j]),
                f"variable {j} below lower bound by {low_gap[j]:.3e}",
            )
        )
    up_gap = x - lp.upper
    for j in np.nonzero(up_gap > tol)[0]:
        out.append(
            Violation(
                "upper",
                int(j),
                float(up_gap[j]),
                f"variable {j} above upper bound by {up_gap[j]:.3e}",
            )
        )
    if solution.objective is not None:
        gap = abs(float(lp.c @ x) - solution.objective)
        if gap > tol:
            out.append(
                Violation(
                    "objective",
                    None,
                    gap,
                    f"reported objective off by {gap:.3e}",
                )
            )
    return out


def lp_to_text(lp: LinearProgram) -> str:
    """Human-readable listing of an LP for debugging; not a contract surface."""

    def name(j: int) -> str:
        return lp.names[j] if lp.names else f"x{j}"

    def terms(row: np.ndarray) -> str:
        parts = [
            f"{row[j]:+g} {name(j)}" for j in range(lp.n_vars) if row[j] != 0.0
        ]
        return " ".join(parts) if parts else "0"

    lines = ["minimize", f"  {terms(lp.c)}", "subject to"]
    for i in range(lp.A_eq.shape[0]):
        lines.append(f"  {terms(lp.A_eq[i])} = {lp.b_eq[i]:g}")
    for i in range(lp.A_ub.shape[0]):
        lines.append(f"  {terms(lp.A_ub[i])} <= {lp.b_ub[i]:g}")
    lines.append("bounds")
    for j in range(lp.n_vars):
        lines.append(f"  {lp.lower[j]:g} <= {name(j)} <= {lp.upper[j]:g}")
    return "\n".join(lines)


@dataclass
class _StandardForm:
    """min c.y, A y = b, y >= 0, with a map back to the original variables."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_struct: int  # structural columns (before slacks)
    # per original variable: ("shift", col, lo) | ("mirror", col, up) |
    # ("split", col_pos, col_neg)
    recon: list[tuple]
    n_eq: int  # leading rows that are equalities (no slack of their own)


def _to_standard_form(lp: LinearProgram) -> _StandardForm:
    n = lp.n_vars
    cols: list[tuple] = []
    recon: list[tuple] = []
    extra_ub_rows: list[tuple[int, float]] = []  # (column, rhs) for y_col <= rhs
    for j in range(n):
        lo, up = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            col = len(cols)
            cols.append(("plain", j, lo))
            recon.append(("shift", col, lo))
            if np.isfinite(up):
                extra_ub_rows.append((col, up - lo))
        elif np.isfinite(up):
            col = len(cols)
            cols.append(("mirror", j, up))
            recon.append(("mirror", col, up))
        else:
            col = len(cols)
            cols.append(("plain", j, 0.0))
            cols.append(("neg", j, 0.0))
            recon.append(("split", col, col + 1))
    n_struct = len(cols)

    def build_block(a_orig: np.ndarray, b_orig: np.ndarray):
        m = a_orig.shape[0]
        a_new = np.zeros((m, n_struct))
        b_new = b_orig.copy()
        for col, (kind, j, ref) in enumerate(cols):
            if kind == "plain":
                a_new[:, col] = a_orig[:, j]
                b_new -= a_orig[:, j] * ref
            elif kind == "mirror":
                a_new[:, col] = -a_orig[:, j]
                b_new -= a_orig[:, j] * ref
            else:  # neg half of a split variable
                a_new[:, col] = -a_orig[:, j]
        return a_new, b_new

    a_eq, b_eq = build_block(lp.A_eq, lp.b_eq)
    a_ub, b_ub = build_block(lp.A_ub, lp.b_ub)
    if extra_ub_rows:
        bound_a = np.zeros((len(extra_ub_rows), n_struct))
        bound_b = np.empty(len(extra_ub_rows))
        for i, (col, rhs) in enumerate(extra_ub_rows):
            bound_a[i, col] = 1.0
            bound_b[i] = rhs
        a_ub = np.vstack([a_ub, bound_a])
        b_ub = np.concatenate([b_ub, bound_b])

    n_ub = a_ub.shape[0]
    n_eq = a_eq.shape[0]
    a = np.zeros((n_eq + n_ub, n_struct + n_ub))
    a[:n_eq, :n_struct] = a_eq
    a[n_eq:, :n_struct] = a_ub
    a[n_eq:, n_struct:] = np.eye(n_ub)
    b = np.concatenate([b_eq, b_ub])

    c_new = np.zeros(n_struct + n_ub)
    for col, (kind, j, _ref) in enumerate(cols):
        if kind == "plain":
            c_new[col] = lp.c[j]
        elif kind == "mirror":
            c_new[col] = -lp.c[j]
        else:
            c_new[col] = -lp.c[j]
    return _StandardForm(a, b, c_new, n_struct, recon, n_eq)


class _Simplex:
    """Tableau state shared by the two phases."""

    def __init__(self, a: np.ndarray, b: np.ndarray, tol: float, max_iters: int):
        # Rows are sign-fixed so every rhs is nonnegative.
        self.a = a.copy()
        self.b = b.copy()
        self.negated = self.b < 0
        self.a[self.negated] *= -1.0
        self.b[self.negated] *= -1.0
        self.tol = tol
        self.max_iters = max_iters
        self.iterations = 0
        self.bland = False
        self._stall = 0

    def run(self, tableau: np.ndarray, basis: list[int]) -> str:
        """Pivot until optimal or unbounded. Returns "optimal"/"unbounded"."""
        while True:
            reduced = tableau[-1, :-1]
            if self.bland:
                negs = np.nonzero(reduced < -self.tol)[0]
                if negs.size == 0:
                    return "optimal"
                enter = int(negs[0])
            else:
                enter = int(np.argmin(reduced))
                if reduced[enter] >= -self.tol:
                    return "optimal"
            col = tableau[:-1, enter]
            rhs = tableau[:-1, -1]
            eligible = col > _PIVOT_TOL
            if not eligible.any():
                return "unbounded"
            ratios = np.where(eligible, rhs / np.where(eligible, col, 1.0), np.inf)
            best = ratios.min()
            # Tie-break on the smallest basis index (Bland-style) so the
            # pivot sequence is deterministic.
            tied = np.nonzero(ratios <= best + self.tol * (1.0 + best))[0]
            leave = int(min(tied, key=lambda r: basis[r]))
            if best <= self.tol:
                self._stall += 1
                if self._stall >= _BLAND_STALL:
                    self.bland = True
            else:
                self._stall = 0
            self._pivot(tableau, leave, enter)
            basis[leave] = enter
            self.iterations += 1
            if self.iterations > self.max_iters:
                raise IterationLimitError(
                    f"simplex exceeded {self.max_iters} iterations"
                )

    @staticmethod
    def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
        tableau[row] /= tableau[row, col]
        factors = tableau[:, col].copy()
        factors[row] = 0.0
        tableau -= np.outer(factors, tableau[row])
        tableau[:, col] = 0.0
        tableau[row, col] = 1.0


def solve_lp(
    lp: LinearProgram, tol: float = 1e-9, max_iters: int = 20000
) -> LpSolution:
    """Two-phase primal simplex.

    Optimal solutions satisfy the equality rows within ``tol``-scale
    residuals and the inequality rows and bounds up to the same order;
    exceeding ``max_iters`` raises :class:`IterationLimitError` instead of
    mislabeling the program.
    """
    sf = _to_standard_form(lp)
    m, n_total = sf.a.shape
    if m == 0:
        # No constraints at all: bounded iff every cost direction is blocked.
        x = np.zeros(lp.n_vars)
        for j, step in enumerate(sf.recon):
            kind = step[0]
            if kind == "shift":
                x[j] = step[2]
                if sf.c[step[1]] < 0 and not np.isfinite(lp.upper[j]):
                    return LpSolution(LpStatus.UNBOUNDED, None, None, 0)
            elif kind == "mirror":
                x[j] = step[2]
                if sf.c[step[1]] < 0:
                    return LpSolution(LpStatus.UNBOUNDED, None, None, 0)
            else:
                if lp.c[j] != 0.0:
                    return LpSolution(LpStatus.UNBOUNDED, None, None, 0)
        return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ x), 0)

    engine = _Simplex(sf.a, sf.b, tol, max_iters)
    a, b = engine.a, engine.b

    # Phase 1: an inequality row whose slack kept its +1 sign starts with
    # that slack basic; equality rows and sign-flipped rows get artificials.
    basis: list[int] = []
    art_rows: list[int] = []
    slack_start = sf.n_struct
    for i in range(m):
        if i >= sf.n_eq and not engine.negated[i]:
            basis.append(slack_start + (i - sf.n_eq))
        else:
            basis.append(-1)  # placeholder, artificial assigned below
            art_rows.append(i)
    n_art = len(art_rows)
    tableau = np.zeros((m + 1, n_total + n_art + 1))
    tableau[:m, :n_total] = a
    tableau[:m, -1] = b
    for k, i in enumerate(art_rows):
        tableau[i, n_total + k] = 1.0
        basis[i] = n_total + k

    if n_art:
        cost = np.zeros(n_total + n_art + 1)
        cost[n_total : n_total + n_art] = 1.0
        for i in art_rows:
            cost -= tableau[i]
        tableau[-1] = cost
        outcome = engine.run(tableau, basis)
        if outcome != "optimal":
            raise LpError("phase 1 reported unbounded; this cannot happen")
        phase1_obj = -tableau[-1, -1]
        if phase1_obj > max(1e-7, tol * 100.0):
            return LpSolution(LpStatus.INFEASIBLE, None, None, engine.iterations)
        # Drive surviving artificials out of the basis or drop their rows.
        keep_rows = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] < n_total:
                continue
            pivot_col = -1
            row = tableau[i, :n_total]
            candidates = np.nonzero(np.abs(row) > 1e-9)[0]
            if candidates.size:
                pivot_col = int(candidates[0])
            if pivot_col >= 0:
                engine._pivot(tableau, i, pivot_col)
                basis[i] = pivot_col
            else:
                keep_rows[i] = False
        if not keep_rows.all():
            rows = np.concatenate([np.nonzero(keep_rows)[0], [m]])
            tableau = tableau[rows]
            basis = [basis[i] for i in np.nonzero(keep_rows)[0]]
            m = len(basis)
    tableau = np.hstack([tableau[:, :n_total], tableau[:, -1:]])

    # Phase 2 objective, reduced against the current basis.
    cost = np.zeros(n_total + 1)
    cost[:n_total] = sf.c
    for i in range(m):
        cj = sf.c[basis[i]]
        if cj != 0.0:
            cost -= cj * tableau[i]
    tableau[-1] = cost
    outcome = engine.run(tableau, basis)
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, None, None, engine.iterations)

    y = np.zeros(n_total)
    y[basis] = tableau[:m, -1]
    # Refine basic values against the untouched standard-form system to
    # shed accumulated pivot roundoff.
    if m == sf.a.shape[0]:
        try:
            basis_mat = sf.a[:, basis]
            refined = np.linalg.solve(basis_mat, sf.b)
            scale = 1.0 + np.abs(sf.b).max(initial=0.0)
            residual = np.abs(basis_mat @ refined - sf.b).max(initial=0.0)
            if (
                np.isfinite(refined).all()
                and refined.min(initial=0.0) > -1e-7
                and residual <= 1e-8 * scale
            ):
                y[:] = 0.0
                y[basis] = np.maximum(refined, 0.0)
        except np.linalg.LinAlgError:
            pass

    x = np.zeros(lp.n_vars)
    for j, step in enumerate(sf.recon):
        kind = step[0]
        if kind == "shift":
            x[j] = y[step[1]] + step[2]
        elif kind == "mirror":
            x[j] = step[2] - y[step[1]]
        else:
            x[j] = y[step[1]] - y[step[2]]
    return LpSolution(
        LpStatus.OPTIMAL, x, float(lp.c @ x), engine.iterations
    )
