"""Fixed-step Euler simulation of a validated model.

Per step k the auxiliaries and flows are evaluated in topological order
against the stock values at t_k (recording every IF branch taken), then
stocks integrate to t_{k+1}:

    stock[k+1] = stock[k] + dt * (sum of inflows[k] - sum of outflows[k])

`simulate` is a pure function; a RunResult is never mutated after it is
returned, so distinct runs may execute concurrently.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .dsl import (
    Bin,
    Builtin,
    Call,
    If,
    Loc,
    Model,
    Num,
    Ref,
    RunSpec,
    Unary,
    expr_refs,
    format_number,
    iter_if_nodes,
)

__all__ = [
    "SimulationError",
    "RunResult",
    "evaluation_order",
    "simulate",
    "eval_expr",
    "run_to_csv",
]


class SimulationError(Exception):
    """A run aborted: division by zero or a non-finite result."""

    def __init__(self, message: str, variable: str, step: int, loc: Loc | None = None):
        self.variable = variable
        self.step = step
        self.loc = loc
        where = f" ({loc})" if loc else ""
        super().__init__(f"{message} while evaluating {variable} at step {step}{where}")


@dataclass
class RunResult:
    """Dense record of a run: every variable at every step, plus the branch
    taken by every evaluated IF node.

    branch_trace[name][slot][k] is True (then) or False (else) for the
    IF node at pre-order position `slot` of `name`'s equation at
    evaluation step k, or None if that node sat inside an untaken outer
    branch at that step.
    """

    variables: tuple[str, ...]
    times: tuple[float, ...]
    values: dict[str, list[float]]
    branch_trace: dict[str, list[list[bool | None]]]
    spec: RunSpec

    @property
    def n(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return self.spec.dt

    def value(self, name: str, k: int) -> float:
        return self.values[name][k]

    def branches_at(self, name: str, k: int) -> list[bool | None]:
        return [slots[k] for slots in self.branch_trace[name]]


def evaluation_order(model: Model) -> list[str]:
    """Topological order of Aux/Flow variables under instantaneous
    dependencies, ties broken by declaration order.  Stocks and constants
    are excluded: their values are known before evaluation."""
    decl_index = {v.name: i for i, v in enumerate(model.variables)}
    af = model.by_kind("aux", "flow")
    af_names = {v.name for v in af}
    pending: dict[str, set[str]] = {}
    dependents: dict[str, list[str]] = {name: [] for name in af_names}
    for v in af:
        deps = {r for r in expr_refs(v.expr) if r in af_names and r != v.name}
        pending[v.name] = deps
        for d in deps:
            dependents[d].append(v.name)

    ready = [(decl_index[name], name) for name, deps in pending.items() if not deps]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        _, name = heapq.heappop(ready)
        order.append(name)
        for dep in dependents[name]:
            deps = pending[dep]
            deps.discard(name)
            if not deps:
                heapq.heappush(ready, (decl_index[dep], dep))
    if len(order) != len(af_names):
        unresolved = sorted(af_names - set(order))
        raise ValueError(f"instantaneous cycle among {', '.join(unresolved)}")
    return order


def eval_expr(
    node,
    values: dict[str, float],
    t: float,
    dt: float,
    slots: dict[int, int] | None = None,
    record: list | None = None,
    override: list | None = None,
) -> float:
    """Evaluate an expression tree against a value environment.

    With `record`, the branch of every evaluated IF node is written into
    record[slot].  With `override`, IF nodes take the recorded branch and
    their conditions are not evaluated at all (branch-gated evaluation).
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Ref):
        return values[node.name]
    if isinstance(node, Builtin):
        return dt if node.name == "DT" else t
    if isinstance(node, Unary):
        v = eval_expr(node.operand, values, t, dt, slots, record, override)
        return -v if node.op == "-" else (1.0 if v == 0.0 else 0.0)
    if isinstance(node, Bin):
        left = eval_expr(node.left, values, t, dt, slots, record, override)
        right = eval_expr(node.right, values, t, dt, slots, record, override)
        op = node.op
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if op == "/":
            return left / right
        if op == "<":
            return 1.0 if left < right else 0.0
        if op == ">":
            return 1.0 if left > right else 0.0
        if op == "<=":
            return 1.0 if left <= right else 0.0
        if op == ">=":
            return 1.0 if left >= right else 0.0
        if op == "=":
            return 1.0 if left == right else 0.0
        if op == "<>":
            return 1.0 if left != right else 0.0
        if op == "AND":
            return 1.0 if (left != 0.0 and right != 0.0) else 0.0
        if op == "OR":
            return 1.0 if (left != 0.0 or right != 0.0) else 0.0
        raise ValueError(f"unknown operator {op!r}")
    if isinstance(node, If):
        if override is not None:
            taken = override[slots[id(node)]]
            if taken is None:
                raise ValueError("no recorded branch for IF node")
        else:
            taken = eval_expr(node.cond, values, t, dt, slots, record, override) != 0.0
            if record is not None:
                record[slots[id(node)]] = taken
        branch = node.then if taken else node.orelse
        return eval_expr(branch, values, t, dt, slots, record, override)
    if isinstance(node, Call):
        args = [eval_expr(a, values, t, dt, slots, record, override) for a in node.args]
        if node.fn == "MIN":
            return min(args)
        if node.fn == "MAX":
            return max(args)
        return abs(args[0])
    raise TypeError(f"not an expression node: {node!r}")


def if_slot_map(expr) -> dict[int, int]:
    """Map id(IF node) -> pre-order slot for one equation."""
    return {id(n): i for i, n in enumerate(iter_if_nodes(expr))}


def _eval_initials(model: Model, spec: RunSpec | None = None) -> dict[str, float]:
    """Constants and stock initial values, resolved by memoized recursion
    (validation guarantees the reference graph is acyclic)."""
    spec = spec if spec is not None else model.run_spec
    byname = {v.name: v for v in model.variables}
    resolved: dict[str, float] = {}

    def value_of(name: str) -> float:
        if name in resolved:
            return resolved[name]
        var = byname[name]
        env = _LazyEnv(value_of)
        try:
            v = eval_expr(var.expr, env, spec.start, spec.dt, if_slot_map(var.expr))
        except ZeroDivisionError:
            raise SimulationError("division by zero", name, 0, var.loc) from None
        if not math.isfinite(v):
            raise SimulationError("non-finite value", name, 0, var.loc)
        resolved[name] = v
        return v

    for v in model.variables:
        if v.kind in ("const", "stock"):
            value_of(v.name)
    return resolved


class _LazyEnv(dict):
    def __init__(self, fetch):
        super().__init__()
        self._fetch = fetch

    def __missing__(self, name):
        v = self[name] = self._fetch(name)
        return v


def simulate(model: Model, spec: RunSpec | None = None) -> RunResult:
    """Run the model and record every variable at every step.

    Aborts with SimulationError naming the offending variable, step and
    source location on division by zero or any non-finite value.
    """
    spec = spec if spec is not None else model.run_spec
    n = spec.steps
    dt = spec.dt
    order = evaluation_order(model)
    byname = {v.name: v for v in model.variables}
    times = tuple(spec.start + i * dt for i in range(n + 1))

    initials = _eval_initials(model, spec)
    values: dict[str, list[float]] = {v.name: [0.0] * (n + 1) for v in model.variables}
    trace: dict[str, list[list[bool | None]]] = {}
    slot_maps: dict[str, dict[int, int]] = {}
    for name in order:
        smap = if_slot_map(byname[name].expr)
        slot_maps[name] = smap
        trace[name] = [[None] * (n + 1) for _ in range(len(smap))]

    for v in model.variables:
        if v.kind == "const":
            values[v.name] = [initials[v.name]] * (n + 1)
        elif v.kind == "stock":
            values[v.name][0] = initials[v.name]

    stocks = model.by_kind("stock")
    env: dict[str, float] = {}
    for k in range(n + 1):
        t = times[k]
        env.clear()
        for v in model.variables:
            if v.kind in ("const", "stock"):
                env[v.name] = values[v.name][k]
        for name in order:
            var = byname[name]
            record = [None] * len(trace[name])
            try:
                val = eval_expr(var.expr, env, t, dt, slot_maps[name], record=record)
            except ZeroDivisionError:
                raise SimulationError("division by zero", name, k, var.loc) from None
            if not math.isfinite(val):
                raise SimulationError("non-finite value", name, k, var.loc)
            env[name] = val
            values[name][k] = val
            for slot, taken in enumerate(record):
                trace[name][slot][k] = taken
        if k < n:
            for s in stocks:
                net = sum(values[f][k] for f in s.inflows) - sum(values[f][k] for f in s.outflows)
                nxt = values[s.name][k] + dt * net
                if not math.isfinite(nxt):
                    raise SimulationError("non-finite value", s.name, k + 1, s.loc)
                values[s.name][k + 1] = nxt

    return RunResult(model.names(), times, values, trace, spec)


def run_to_csv(run: RunResult) -> str:
    """CSV export: header ``time,var1,var2,...``, one row per step, with
    round-trip-exact decimal rendering."""
    lines = ["time," + ",".join(run.variables)]
    for k, t in enumerate(run.times):
        row = [format_number(t)]
        row.extend(repr(run.values[name][k]) for name in run.variables)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
