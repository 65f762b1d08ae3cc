"""Pure evaluation of the placement problem's objective terms and constraints.

Every solver in the package is audited against these functions; they are the
single source of truth for what a candidate solution costs and whether it is
feasible.  All operations are pure in (instance, solution) except
:func:`average_cost`, which caches per-node costs on the solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError
from .instance import FEAS_EPS, Instance


@dataclass
class Solution:
    """Sparse assignment/replication decision.

    `x` holds assignment indicators keyed by (iot, edge, model, variant);
    `n` holds replica counts keyed by (edge, model, variant).  Only nonzero
    entries are stored.  `z` is the per-edge-node utilization cost, filled
    by :func:`average_cost`.
    """

    x: dict[tuple[str, str, str, int], int] = field(default_factory=dict)
    n: dict[tuple[str, str, int], int] = field(default_factory=dict)
    z: dict[str, float] = field(default_factory=dict)

    def x_value(self, iot: str, edge: str, model: str, v: int) -> int:
        return self.x.get((iot, edge, model, v), 0)

    def n_value(self, edge: str, model: str, v: int) -> int:
        return self.n.get((edge, model, v), 0)

    @property
    def evaluated(self) -> bool:
        return bool(self.z)


@dataclass(frozen=True)
class Violation:
    constraint: str           # assignment | latency_req | load | replica_link | replica_cap | memory | utilization
    location: tuple
    magnitude: float


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.feasible


def inference_latency(instance: Instance, solution: Solution, edge: str, model: str, v: int) -> float:
    """Per-request latency of variant (model, v) on `edge` under co-location.

    Exclusive latency, plus the replication share of the variant's own
    instances, plus the interference contribution of every other co-located
    variant.  The replication term is clamped at zero replicas so the
    function stays total for undeployed variants.
    """
    var = instance.catalog.variant(model, v)
    lat = var.base_latency[edge]
    n_own = solution.n_value(edge, model, v)
    il = lat + var.interference_coeff * lat * max(n_own - 1, 0)
    for (e2, m2, v2), cnt in solution.n.items():
        if e2 != edge or (m2, v2) == (model, v) or cnt == 0:
            continue
        other = instance.catalog.variant(m2, v2)
        il += other.interference_coeff * other.base_latency[edge] * cnt
    return il


def average_latency(instance: Instance, solution: Solution) -> float:
    """Demand-weighted mean of communication plus inference latency; 0 when idle."""
    total_rate = sum(e.rate for e in instance.demand.entries.values())
    if total_rate == 0:
        return 0.0
    acc = 0.0
    for (i, e, m, v), xv in solution.x.items():
        if xv == 0:
            continue
        rate = instance.demand.entries[(i, m)].rate if (i, m) in instance.demand.entries else 0.0
        acc += rate * (instance.comm_latency[(i, e)] + inference_latency(instance, solution, e, m, v)) * xv
    return acc / total_rate


def node_utilization(instance: Instance, solution: Solution, edge: str) -> float:
    """Memory utilization of an edge node; may exceed 1 (flagged, not clamped)."""
    used = 0.0
    for (e, m, v), cnt in solution.n.items():
        if e == edge:
            used += instance.catalog.variant(m, v).memory_req * cnt
    return used / instance.topology.capacity[edge]


def utilization_cost(instance: Instance, u: float) -> float:
    """Piecewise-linear convex cost: the max over the instance's tangent lines."""
    if not instance.cost_tangents:
        raise ConfigurationError("instance has an empty cost tangent set")
    return max(a * u + b for a, b in instance.cost_tangents)


def average_cost(instance: Instance, solution: Solution) -> float:
    """Mean utilization cost over all edge nodes; fills solution.z."""
    edges = instance.topology.edge_nodes
    total = 0.0
    for e in edges:
        z = utilization_cost(instance, node_utilization(instance, solution, e))
        solution.z[e] = z
        total += z
    return total / len(edges)


def objective(instance: Instance, solution: Solution) -> float:
    """Weighted sum of average latency and average utilization cost."""
    a = instance.objective_weight
    return a * average_latency(instance, solution) + (1.0 - a) * average_cost(instance, solution)


def check_feasibility(instance: Instance, solution: Solution) -> FeasibilityReport:
    """Evaluate every constraint at every index; violations are data, not errors.

    The latency-requirement constraint is enforced only for (iot, edge,
    model) triples with an active assignment (with all indicators zero its
    left side is identically zero).
    """
    report = FeasibilityReport()
    add = report.violations.append
    entries = instance.demand.entries
    edges = instance.topology.edge_nodes

    # Assignment: exactly one (edge, variant) per demanded pair, none otherwise.
    sums: dict[tuple[str, str], float] = {}
    for (i, e, m, v), xv in solution.x.items():
        if xv:
            sums[(i, m)] = sums.get((i, m), 0.0) + xv
    demanded = set(instance.demand.demanded_pairs())
    for pair in demanded:
        s = sums.get(pair, 0.0)
        if abs(s - 1.0) > FEAS_EPS:
            add(Violation("assignment", pair, abs(s - 1.0)))
    for pair, s in sums.items():
        if pair not in demanded and s > FEAS_EPS:
            add(Violation("assignment", pair, s))

    # Latency requirement per active (iot, edge, model).
    by_iem: dict[tuple[str, str, str], float] = {}
    for (i, e, m, v), xv in solution.x.items():
        if xv == 0:
            continue
        lhs = (instance.comm_latency[(i, e)] + inference_latency(instance, solution, e, m, v)) * xv
        by_iem[(i, e, m)] = by_iem.get((i, e, m), 0.0) + lhs
    for (i, e, m), lhs in by_iem.items():
        lmax = entries[(i, m)].latency_req if (i, m) in entries else float("inf")
        if lhs > lmax + FEAS_EPS:
            add(Violation("latency_req", (i, e, m), lhs - lmax))

    # Load per (edge, model, variant).
    assigned_load: dict[tuple[str, str, int], float] = {}
    for (i, e, m, v), xv in solution.x.items():
        if xv and (i, m) in entries:
            assigned_load[(e, m, v)] = assigned_load.get((e, m, v), 0.0) + entries[(i, m)].rate * xv
    for key in set(assigned_load) | set(solution.n):
        e, m, v = key
        load = assigned_load.get(key, 0.0)
        cap = instance.catalog.variant(m, v).max_load * solution.n_value(e, m, v)
        if load > cap + FEAS_EPS:
            add(Violation("load", key, load - cap))

    # Replica link: an assignment requires at least one instance.
    for (i, e, m, v), xv in solution.x.items():
        if xv > solution.n_value(e, m, v):
            add(Violation("replica_link", (i, e, m, v), xv - solution.n_value(e, m, v)))

    # Replica cap.
    k = instance.max_replicas
    if instance.replica_cap_mode == "aggregate":
        per_edge: dict[str, int] = {}
        for (e, m, v), cnt in solution.n.items():
            per_edge[e] = per_edge.get(e, 0) + cnt
        for e, tot in per_edge.items():
            if tot > k:
                add(Violation("replica_cap", (e,), tot - k))
    else:
        for (e, m, v), cnt in solution.n.items():
            if cnt > k:
                add(Violation("replica_cap", (e, m, v), cnt - k))

    # Memory and utilization per edge node.
    for e in edges:
        used = 0.0
        for (e2, m, v), cnt in solution.n.items():
            if e2 == e:
                used += instance.catalog.variant(m, v).memory_req * cnt
        cap = instance.topology.capacity[e]
        if used > cap + FEAS_EPS:
            add(Violation("memory", (e,), used - cap))
        u = used / cap
        if u > 1.0 + FEAS_EPS:
            add(Violation("utilization", (e,), u - 1.0))

    return report
