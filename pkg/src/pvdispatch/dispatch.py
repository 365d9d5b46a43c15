"""Day-ahead and real-time economic dispatch.

The day-ahead program schedules generators, renewable usage, and load
shedding against the forecast renewable cap:

    min  sum_vt C_v p[v,t] + sum_t VOLL * ls[t]
    s.t. sum_v p[v,t] + rnw[t] + ls[t] = demand[t]        for every hour
         pmin_v <= p[v,t] <= pmax_v
         0 <= rnw[t] <= forecast[t]
         0 <= ls[t] <= demand[t]
         -R_v <= p[v,t] - p[v,t-1] <= R_v   (t = 0 wraps to the last hour)

The real-time program holds the day-ahead schedule fixed and lets only the
flexible units move by a signed adjustment, with actual renewable output
replacing the forecast; surplus can be spilled and shedding can be revised
in either direction (negative revisions earn VOLL credits):

    min  sum_vt C_v d[v,t] + sum_t VOLL * ls_rt[t]
    s.t. sum_v p*[v,t] + sum_{v in Vf} d[v,t] + actual[t] - spill[t]
             + ls*[t] + ls_rt[t] = demand[t]
         pmin_v <= p*[v,t] + d[v,t] <= pmax_v              (v in Vf)
         ramp limits on the combined schedule p* + d, cyclic at t = 0
         0 <= spill[t] <= actual[t]
         0 <= ls*[t] + ls_rt[t] <= demand[t]

Metric accounting: gas-fired energy is the combined output of gas-flagged
units, CO2 is the emission factor times that energy, cost is the sum of
both objectives, and NMAE is the mean absolute forecast error divided by
the mean actual.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lp import LinearProgram, LpSolution, LpStatus, check_solution, solve_lp


class DispatchError(ValueError):
    """Invalid dispatch inputs."""


class DispatchInternalError(RuntimeError):
    """A dispatch LP failed in a way the formulation rules out."""


@dataclass(frozen=True)
class GeneratorSpec:
    """One conventional unit: marginal cost, output range, hourly ramp
    limit, real-time availability, and whether its fuel is gas."""

    name: str
    cost: float
    pmax: float
    pmin: float = 0.0
    ramp: float = 0.0
    rt_available: bool = False
    gas_fired: bool = False

    def __post_init__(self) -> None:
        if not self.name:
            raise DispatchError("generator needs a name")
        if not (0.0 <= self.pmin <= self.pmax):
            raise DispatchError(f"{self.name}: need 0 <= pmin <= pmax")
        if self.cost < 0:
            raise DispatchError(f"{self.name}: cost must be >= 0")
        if self.ramp <= 0:
            raise DispatchError(f"{self.name}: ramp must be > 0")


def default_fleet() -> tuple[GeneratorSpec, ...]:
    """Three-unit reference fleet; only the gas peaker can move in real time."""
    return (
        GeneratorSpec("G1", cost=20.0, pmax=50.0, pmin=0.0, ramp=20.0),
        GeneratorSpec("G2", cost=25.0, pmax=50.0, pmin=0.0, ramp=20.0),
        GeneratorSpec(
            "G3", cost=30.0, pmax=30.0, pmin=0.0, ramp=30.0,
            rt_available=True, gas_fired=True,
        ),
    )


@dataclass(frozen=True)
class DispatchCase:
    """One dispatch horizon: demand, the forecast renewable cap used day
    ahead, the actual renewable output seen in real time, and the fleet."""

    demand: np.ndarray
    forecast: np.ndarray
    actual: np.ndarray
    fleet: tuple[GeneratorSpec, ...]
    voll: float = 1000.0
    emission_factor: float = 202.0

    def __post_init__(self) -> None:
        demand = np.atleast_1d(np.asarray(self.demand, dtype=float))
        forecast = np.atleast_1d(np.asarray(self.forecast, dtype=float))
        actual = np.atleast_1d(np.asarray(self.actual, dtype=float))
        t = demand.shape[0]
        if t == 0:
            raise DispatchError("horizon must cover at least one hour")
        if forecast.shape != (t,) or actual.shape != (t,):
            raise DispatchError(
                f"series lengths differ: demand {t}, forecast "
                f"{forecast.shape[0]}, actual {actual.shape[0]}"
            )
        for label, series in (
            ("demand", demand), ("forecast", forecast), ("actual", actual)
        ):
            if not np.isfinite(series).all():
                raise DispatchError(f"{label} must be finite")
            if (series < 0).any():
                raise DispatchError(f"{label} must be nonnegative")
        if not self.fleet:
            raise DispatchError("fleet must not be empty")
        fleet = tuple(self.fleet)
        max_cost = max(g.cost for g in fleet)
        if self.voll <= max_cost:
            raise DispatchError(
                f"voll {self.voll} must exceed the dearest generator ({max_cost})"
            )
        if self.emission_factor <= 0:
            raise DispatchError("emission_factor must be > 0")
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "forecast", forecast)
        object.__setattr__(self, "actual", actual)
        object.__setattr__(self, "fleet", fleet)

    @property
    def horizon(self) -> int:
        return int(self.demand.shape[0])


@dataclass
class DaSolution:
    """Day-ahead schedule: generator outputs (V, T), renewable usage,
    shedding, and the objective value."""

    p: np.ndarray
    rnw: np.ndarray
    ls: np.ndarray
    objective: float
    iterations: int = 0


@dataclass
class RtSolution:
    """Real-time outcome: signed adjustments (zero rows for units frozen at
    their day-ahead schedule), spillage, signed shedding revision, and the
    adjustment objective."""

    delta: np.ndarray
    spill: np.ndarray
    ls_rt: np.ndarray
    objective: float
    iterations: int = 0


@dataclass(frozen=True)
class EvaluationReport:
    """The headline grid metrics for one forecast method."""

    gas_mwh: float
    co2_kg: float
    shed_mwh: float
    spill_mwh: float
    cost_usd: float
    nmae: float


def nmae(forecast: np.ndarray, actual: np.ndarray) -> float:
    """Mean absolute error divided by the mean of the actual series."""
    forecast = np.asarray(forecast, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if forecast.shape != actual.shape or forecast.ndim != 1 or forecast.size == 0:
        raise DispatchError("nmae needs two equal-length non-empty series")
    mean_actual = float(actual.mean())
    if mean_actual == 0.0:
        raise DispatchError("nmae undefined: actual series has zero mean")
    return float(np.abs(forecast - actual).mean()) / mean_actual


def build_da_lp(case: DispatchCase) -> LinearProgram:
    """Assemble the day-ahead program.

    Variable layout: p[v,t] grouped by generator, then rnw[t], then ls[t].
    Ramp rows cover every hour, with hour 0 wrapping to the final hour.
    """
    t_n = case.horizon
    v_n = len(case.fleet)
    n = v_n * t_n + 2 * t_n

    def p_col(v: int, t: int) -> int:
        return v * t_n + t

    rnw0 = v_n * t_n
    ls0 = rnw0 + t_n

    c = np.zeros(n)
    lower = np.zeros(n)
    upper = np.empty(n)
    names = []
    for v, gen in enumerate(case.fleet):
        for t in range(t_n):
            c[p_col(v, t)] = gen.cost
            lower[p_col(v, t)] = gen.pmin
            upper[p_col(v, t)] = gen.pmax
    for t in range(t_n):
        upper[rnw0 + t] = case.forecast[t]
        upper[ls0 + t] = case.demand[t]
        c[ls0 + t] = case.voll
    names = (
        [f"p[{g.name},{t}]" for g in case.fleet for t in range(t_n)]
        + [f"rnw[{t}]" for t in range(t_n)]
        + [f"ls[{t}]" for t in range(t_n)]
    )

    a_eq = np.zeros((t_n, n))
    for t in range(t_n):
        for v in range(v_n):
            a_eq[t, p_col(v, t)] = 1.0
        a_eq[t, rnw0 + t] = 1.0
        a_eq[t, ls0 + t] = 1.0
    b_eq = case.demand.copy()

    a_ub = np.zeros((2 * v_n * t_n, n))
    b_ub = np.empty(2 * v_n * t_n)
    row = 0
    for v, gen in enumerate(case.fleet):
        for t in range(t_n):
            prev = (t - 1) % t_n
            a_ub[row, p_col(v, t)] += 1.0
            a_ub[row, p_col(v, prev)] -= 1.0
            b_ub[row] = gen.ramp
            a_ub[row + 1, p_col(v, t)] -= 1.0
            a_ub[row + 1, p_col(v, prev)] += 1.0
            b_ub[row + 1] = gen.ramp
            row += 2

    return LinearProgram(
        c=c, A_eq=a_eq, b_eq=b_eq, A_ub=a_ub, b_ub=b_ub,
        lower=lower, upper=upper, names=tuple(names),
    )


def _require_optimal(sol: LpSolution, market: str) -> None:
    if sol.status is not LpStatus.OPTIMAL:
        raise DispatchInternalError(
            f"{market} dispatch came back {sol.status.value}; the formulation "
            "guarantees feasibility, so the inputs or solver are broken"
        )


def solve_da(case: DispatchCase, tol: float = 1e-9) -> DaSolution:
    """Solve the day-ahead program and unpack the schedule."""
    lp = build_da_lp(case)
    sol = solve_lp(lp, tol=tol)
    _require_optimal(sol, "day-ahead")
    bad = check_solution(lp, sol, tol=1e-6)
    if bad:
        raise DispatchInternalError(
            f"day-ahead solution failed feasibility audit: {bad[0].message}"
        )
    t_n = case.horizon
    v_n = len(case.fleet)
    x = sol.x
    p = x[: v_n * t_n].reshape(v_n, t_n).copy()
    rnw = x[v_n * t_n : v_n * t_n + t_n].copy()
    ls = x[v_n * t_n + t_n :].copy()
    return DaSolution(p, rnw, ls, float(sol.objective), sol.iterations)


def build_rt_lp(case: DispatchCase, da: DaSolution) -> LinearProgram:
    """Assemble the real-time adjustment program around a day-ahead schedule.

    Variable layout: d[v,t] for flexible units only (grouped by unit), then
    spill[t], then ls_rt[t]. Capacity and shedding windows are encoded as
    bounds; combined-schedule ramp limits are inequality rows.
    """
    t_n = case.horizon
    flex = [v for v, g in enumerate(case.fleet) if g.rt_available]
    f_n = len(flex)
    n = f_n * t_n + 2 * t_n

    def d_col(fi: int, t: int) -> int:
        return fi * t_n + t

    spill0 = f_n * t_n
    ls0 = spill0 + t_n

    c = np.zeros(n)
    lower = np.empty(n)
    upper = np.empty(n)
    names = []
    for fi, v in enumerate(flex):
        gen = case.fleet[v]
        for t in range(t_n):
            c[d_col(fi, t)] = gen.cost
            lower[d_col(fi, t)] = gen.pmin - da.p[v, t]
            upper[d_col(fi, t)] = gen.pmax - da.p[v, t]
        names.extend(f"d[{gen.name},{t}]" for t in range(t_n))
    for t in range(t_n):
        lower[spill0 + t] = 0.0
        upper[spill0 + t] = case.actual[t]
        lower[ls0 + t] = -da.ls[t]
        upper[ls0 + t] = case.demand[t] - da.ls[t]
        c[ls0 + t] = case.voll
    names += [f"spill[{t}]" for t in range(t_n)]
    names += [f"ls_rt[{t}]" for t in range(t_n)]

    # Balance: committed DA terms are constants, so the rhs carries them.
    a_eq = np.zeros((t_n, n))
    b_eq = np.empty(t_n)
    committed = da.p.sum(axis=0)
    for t in range(t_n):
        for fi in range(f_n):
            a_eq[t, d_col(fi, t)] = 1.0
        a_eq[t, spill0 + t] = -1.0
        a_eq[t, ls0 + t] = 1.0
        b_eq[t] = case.demand[t] - committed[t] - case.actual[t] - da.ls[t]

    a_ub = np.zeros((2 * f_n * t_n, n))
    b_ub = np.empty(2 * f_n * t_n)
    row = 0
    for fi, v in enumerate(flex):
        gen = case.fleet[v]
        for t in range(t_n):
            prev = (t - 1) % t_n
            base = da.p[v, t] - da.p[v, prev]
            a_ub[row, d_col(fi, t)] += 1.0
            a_ub[row, d_col(fi, prev)] -= 1.0
            b_ub[row] = gen.ramp - base
            a_ub[row + 1, d_col(fi, t)] -= 1.0
            a_ub[row + 1, d_col(fi, prev)] += 1.0
            b_ub[row + 1] = gen.ramp + base
            row += 2

    return LinearProgram(
        c=c, A_eq=a_eq, b_eq=b_eq, A_ub=a_ub, b_ub=b_ub,
        lower=lower, upper=upper, names=tuple(names),
    )


def solve_rt(case: DispatchCase, da: DaSolution, tol: float = 1e-9) -> RtSolution:
    """Solve the real-time adjustment program against actual renewables."""
    lp = build_rt_lp(case, da)
    sol = solve_lp(lp, tol=tol)
    if sol.status is LpStatus.INFEASIBLE:
        # Identify the hour whose balance cannot close, for the error text.
        worst = int(np.argmax(np.abs(lp.b_eq)))
        raise DispatchInternalError(
            f"real-time dispatch infeasible around hour {worst}; the "
            "formulation guarantees feasibility, so inputs are inconsistent"
        )
    _require_optimal(sol, "real-time")
    bad = check_solution(lp, sol, tol=1e-6)
    if bad:
        raise DispatchInternalError(
            f"real-time solution failed feasibility audit: {bad[0].message}"
        )
    t_n = case.horizon
    flex = [v for v, g in enumerate(case.fleet) if g.rt_available]
    f_n = len(flex)
    x = sol.x
    delta = np.zeros((len(case.fleet), t_n))
    for fi, v in enumerate(flex):
        delta[v] = x[fi * t_n : (fi + 1) * t_n]
    spill = x[f_n * t_n : f_n * t_n + t_n].copy()
    ls_rt = x[f_n * t_n + t_n :].copy()
    return RtSolution(delta, spill, ls_rt, float(sol.objective), sol.iterations)


def compute_metrics(
    case: DispatchCase,
    da: DaSolution,
    rt: RtSolution,
    forecast: np.ndarray,
    actual: np.ndarray,
) -> EvaluationReport:
    """Bundle the grid metrics for one solved case."""
    gas_mask = np.array([g.gas_fired for g in case.fleet], dtype=bool)
    combined = da.p + rt.delta
    gas_mwh = float(combined[gas_mask].sum()) if gas_mask.any() else 0.0
    shed = float((da.ls + rt.ls_rt).sum())
    spill = float(rt.spill.sum())
    cost = float(da.objective + rt.objective)
    return EvaluationReport(
        gas_mwh=gas_mwh,
        co2_kg=case.emission_factor * gas_mwh,
        shed_mwh=shed,
        spill_mwh=spill,
        cost_usd=cost,
        nmae=nmae(forecast, actual),
    )


def load_fleet_csv(path: str | Path) -> tuple[GeneratorSpec, ...]:
    """Fleet file: header ``name,cost,pmax,pmin,ramp,rt_available,gas_fired``
    with 0/1 flags."""
    path = Path(path)
    if not path.exists():
        raise DispatchError(f"no such file: {path}")
    expected = ["name", "cost", "pmax", "pmin", "ramp", "rt_available", "gas_fired"]
    fleet: list[GeneratorSpec] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise DispatchError(
                f"{path}: header must be {','.join(expected)!r}"
            )
        for i, row in enumerate(reader, start=1):
            if len(row) != len(expected):
                raise DispatchError(f"{path}: row {i}: expected 7 fields")
            try:
                fleet.append(
                    GeneratorSpec(
                        name=row[0].strip(),
                        cost=float(row[1]),
                        pmax=float(row[2]),
                        pmin=float(row[3]),
                        ramp=float(row[4]),
                        rt_available=_parse_flag(row[5]),
                        gas_fired=_parse_flag(row[6]),
                    )
                )
            except (ValueError, DispatchError) as exc:
                raise DispatchError(f"{path}: row {i}: {exc}") from None
    if not fleet:
        raise DispatchError(f"{path}: no generators")
    return tuple(fleet)


def save_fleet_csv(fleet: tuple[GeneratorSpec, ...], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["name", "cost", "pmax", "pmin", "ramp", "rt_available", "gas_fired"]
        )
        for g in fleet:
            writer.writerow(
                [g.name, repr(g.cost), repr(g.pmax), repr(g.pmin), repr(g.ramp),
                 int(g.rt_available), int(g.gas_fired)]
            )


def _parse_flag(cell: str) -> bool:
    v = cell.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ValueError(f"flag must be 0/1, got {cell!r}")
