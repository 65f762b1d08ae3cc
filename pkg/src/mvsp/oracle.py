"""Exhaustive brute-force optimizer for tiny instances.

Independent ground truth for solver and linearization tests: it walks every
assignment satisfying the one-placement-per-demand constraint, derives the
minimal replica counts, and audits each candidate through the formulation
module.  A paranoid mode additionally sweeps replica counts above their
minimal values to validate the minimal-replicas lemma against the full
problem.
"""
from __future__ import annotations

import itertools
import math
import time

from .errors import GuardExceededError
from .formulation import Solution, check_feasibility, objective
from .instance import Instance
from .solver import SolveResult, derive_replicas

ENUM_GUARD = 10_000_000
PARANOID_GUARD = 100_000


def _pair_options(instance: Instance) -> tuple[list[tuple[str, str]], list[list[tuple[str, int]]]]:
    """Demanded (iot, model) pairs and their assignable (edge, variant) options.

    Edges with no path from the IoT node (infinite communication latency)
    are not assignable.
    """
    pairs = instance.demand.demanded_pairs()
    options: list[list[tuple[str, int]]] = []
    for i, m in pairs:
        model = instance.catalog.model(m)
        opts = [(e, v)
                for e in instance.topology.edge_nodes
                if math.isfinite(instance.comm_latency[(i, e)])
                for v in range(1, len(model.variants) + 1)]
        options.append(opts)
    return pairs, options


def brute_force(instance: Instance, paranoid: bool = False) -> SolveResult:
    """Enumerate every assignment; return the minimum-objective feasible one.

    With ``paranoid`` the replica counts are additionally enumerated over
    [minimal, K] per dimension, so the result is the optimum of the full
    joint (assignment, replication) space rather than relying on the
    minimal-replicas argument.
    """
    t0 = time.perf_counter()
    pairs, options = _pair_options(instance)

    space = 1
    for opts in options:
        space *= len(opts)
        if space > ENUM_GUARD:
            raise GuardExceededError(
                f"assignment space exceeds the {ENUM_GUARD} guard "
                f"(at least {space} candidates for {len(pairs)} demanded pairs)")

    best_obj = math.inf
    best_solution: Solution | None = None
    explored = 0
    for combo in itertools.product(*options):
        explored += 1
        x = {(i, e, m, v): 1 for (i, m), (e, v) in zip(pairs, combo)}
        candidates = [derive_replicas(instance, x)]
        if paranoid:
            candidates = _replica_grid(instance, candidates[0])
        for n in candidates:
            sol = Solution(x=dict(x), n=n)
            if not check_feasibility(instance, sol).feasible:
                continue
            obj = objective(instance, sol)
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_solution = sol

    status = "optimal" if best_solution is not None else "infeasible"
    lb = best_obj if best_solution is not None else math.inf
    return SolveResult(solution=best_solution, status=status, best_objective=best_obj,
                       lower_bound=lb, nodes_explored=explored,
                       elapsed_s=time.perf_counter() - t0)


def _replica_grid(instance: Instance, n_min: dict[tuple[str, str, int], int]) -> list[dict]:
    """All replica maps with n in [minimal, K] per (edge, model, variant).

    Dimensions never touched by the assignment keep zero replicas: adding
    unused instances only raises cost, and the grid stays enumerable.
    """
    k = instance.max_replicas
    keys = sorted(n_min)
    ranges = [range(n_min[key], k + 1) for key in keys]
    space = 1
    for r in ranges:
        space *= len(r)
        if space > PARANOID_GUARD:
            raise GuardExceededError(
                f"replica grid exceeds the {PARANOID_GUARD} paranoid-mode guard ({space} points)")
    grids = []
    for counts in itertools.product(*ranges):
        grids.append({key: cnt for key, cnt in zip(keys, counts) if cnt})
    return grids
