"""Exact branch-and-bound and greedy/local-search solvers.

Both solvers search only over the assignment indicators and derive the
replica counts, exploiting that average latency and average cost are
non-decreasing in every replica count: the componentwise-minimal counts
satisfying the load and linking constraints are always objective-optimal
for a given assignment (property-tested in the suite).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import MvspError, ValidationError
from .formulation import Solution, check_feasibility, objective
from .instance import FEAS_EPS, Instance

DEFAULT_MAX_NODES = 1_000_000
OBJ_TOL = 1e-9  # absolute tolerance for incumbent comparison


@dataclass(frozen=True)
class SolveBudget:
    """Search effort limits; at least one of nodes/wall-time must be finite."""

    max_nodes_explored: int | None = None
    wall_time_limit: float | None = None
    optimality_gap_target: float = 0.0

    def __post_init__(self):
        if self.max_nodes_explored is None and self.wall_time_limit is None:
            raise ValidationError("budget", "at least one of max_nodes_explored/wall_time_limit must be set")
        if self.optimality_gap_target < 0:
            raise ValidationError("budget.optimality_gap_target", "must be >= 0")


@dataclass
class SolveResult:
    solution: Solution | None
    status: str               # optimal | feasible | infeasible | budget_exhausted
    best_objective: float
    lower_bound: float
    nodes_explored: int
    elapsed_s: float


def derive_replicas(instance: Instance, x: dict[tuple[str, str, str, int], int]) -> dict[tuple[str, str, int], int]:
    """Componentwise-minimal replica counts for an assignment.

    Per (edge, model, variant): enough instances to carry the routed load,
    and at least one whenever any indicator is set.
    """
    loads: dict[tuple[str, str, int], float] = {}
    indic: dict[tuple[str, str, int], int] = {}
    for (i, e, m, v), xv in x.items():
        if not xv:
            continue
        entry = instance.demand.entries.get((i, m))
        rate = entry.rate if entry is not None else 0.0
        key = (e, m, v)
        loads[key] = loads.get(key, 0.0) + rate * xv
        indic[key] = max(indic.get(key, 0), 1)
    n: dict[tuple[str, str, int], int] = {}
    for key, load in loads.items():
        _, m, v = key
        limit = instance.catalog.variant(m, v).max_load
        cnt = int(math.ceil(load / limit - FEAS_EPS)) if load > FEAS_EPS else 0
        cnt = max(cnt, indic[key])
        if cnt:
            n[key] = cnt
    return n


# ---------------------------------------------------------------------------
# Incremental search state
# ---------------------------------------------------------------------------

class _State:
    """Mutable assignment state with O(1) objective bookkeeping.

    Assignment option tuples are (static_cost, latency_part, e, t) where
    t is the flat variant index; static_cost is the option's exact
    interference-free objective contribution and latency_part is the
    communication latency plus (1 - a_t) * exclusive latency used by the
    latency-requirement checks.
    """

    def __init__(self, inst: Instance):
        idx = inst.index
        self.inst = inst
        self.idx = idx
        self.K = inst.max_replicas
        self.aggregate = inst.replica_cap_mode == "aggregate"
        alpha = inst.objective_weight
        self.NE, self.T = idx.n_edge, idx.n_var
        self.rho_total = idx.total_rate
        self.aor = (alpha / self.rho_total) if self.rho_total > 0 else 0.0
        self.cost_coef = (1.0 - alpha) / self.NE

        pairs = sorted(idx.demanded, key=lambda im: (-idx.rate[im[0], im[1]], im[0], im[1]))
        self.pairs = pairs
        self.P = len(pairs)
        self.rate_p = [float(idx.rate[i, m]) for i, m in pairs]
        self.lmax_p = [float(idx.lat_req[i, m]) for i, m in pairs]

        self.opts: list[list[tuple[float, float, int, int]]] = []
        self.opt_by_et: list[dict[tuple[int, int], tuple[float, float, int, int]]] = []
        for (i, m), r in zip(pairs, self.rate_p):
            lst = []
            for e in range(self.NE):
                cl = float(idx.cl[i, e])
                if not math.isfinite(cl):
                    continue  # unreachable edges are not assignable
                for t in idx.model_tranges[m]:
                    part = cl + (1.0 - idx.alpha_t[t]) * idx.lat[t, e]
                    lst.append((self.aor * r * part, float(part), e, int(t)))
            lst.sort(key=lambda o: (o[0], o[2], o[3]))
            self.opts.append(lst)
            self.opt_by_et.append({(o[2], o[3]): o for o in lst})

        mins = [lst[0][0] if lst else math.inf for lst in self.opts]
        self.suffix_min = [0.0] * (self.P + 1)
        for d in range(self.P - 1, -1, -1):
            self.suffix_min[d] = self.suffix_min[d + 1] + mins[d]

        self.alpha_lat = [float(idx.alpha_t[t] * idx.lat[t, e]) for e in range(self.NE) for t in range(self.T)]
        self.mem_t = [float(v) for v in idx.mem_t]
        self.load_lim = [float(v) for v in idx.load_t]
        self.cap = [float(v) for v in idx.cap_e]
        self.tan = [(float(a), float(b)) for a, b in inst.cost_tangents]

        cost0 = self._cost(0.0)
        self.load = [0.0] * (self.NE * self.T)
        self.xcnt = [0] * (self.NE * self.T)
        self.n = [0] * (self.NE * self.T)
        self.mem = [0.0] * self.NE
        self.s = [0.0] * self.NE
        self.rho = [0.0] * self.NE
        self.sumn = [0] * self.NE
        self.cost_e = [cost0] * self.NE
        self.cost_total = cost0 * self.NE
        self.interf = 0.0
        self.static = 0.0
        self.on_e: list[dict[int, tuple[float, float]]] = [dict() for _ in range(self.NE)]

    def _cost(self, u: float) -> float:
        best = -math.inf
        for a, b in self.tan:
            v = a * u + b
            if v > best:
                best = v
        return best

    def _needed(self, load: float, limit: float, xc: int) -> int:
        base = int(math.ceil(load / limit - FEAS_EPS)) if load > FEAS_EPS else 0
        if xc > 0 and base < 1:
            base = 1
        return base

    def objective_value(self) -> float:
        return self.static + self.aor * self.interf + self.cost_coef * self.cost_total

    def bound(self, d: int) -> float:
        """Admissible lower bound on any feasible completion of pairs[d:]."""
        return self.objective_value() + self.suffix_min[d]

    def attempt(self, p: int, opt: tuple[float, float, int, int]):
        """Validate and commit one assignment; returns an undo record or None.

        Rejects choices that can never complete feasibly: replica cap,
        memory overflow, or a latency requirement already exceeded by the
        interference floor on the target node.
        """
        sc, part, e, t = opt
        r = self.rate_p[p]
        et = e * self.T + t
        old_load, old_n, old_xc = self.load[et], self.n[et], self.xcnt[et]
        new_load = old_load + r
        new_n = self._needed(new_load, self.load_lim[t], old_xc + 1)
        dn = new_n - old_n
        if self.aggregate:
            if self.sumn[e] + dn > self.K:
                return None
        elif new_n > self.K:
            return None
        old_mem, old_s = self.mem[e], self.s[e]
        new_mem = old_mem + dn * self.mem_t[t] if dn else old_mem
        if new_mem > self.cap[e] + FEAS_EPS:
            return None
        new_s = old_s + dn * self.alpha_lat[et] if dn else old_s
        if part + new_s > self.lmax_p[p] + FEAS_EPS:
            return None
        if dn:
            for part2, lmax2 in self.on_e[e].values():
                if part2 + new_s > lmax2 + FEAS_EPS:
                    return None
        old_rho, old_cost_e = self.rho[e], self.cost_e[e]
        old_ct, old_interf, old_static = self.cost_total, self.interf, self.static
        new_cost_e = self._cost(new_mem / self.cap[e]) if dn else old_cost_e

        self.load[et] = new_load
        self.n[et] = new_n
        self.xcnt[et] = old_xc + 1
        self.mem[e] = new_mem
        self.s[e] = new_s
        self.rho[e] = old_rho + r
        self.sumn[e] += dn
        self.cost_e[e] = new_cost_e
        self.cost_total = old_ct - old_cost_e + new_cost_e
        self.interf = old_interf - old_s * old_rho + new_s * (old_rho + r)
        self.static = old_static + sc
        self.on_e[e][p] = (part, self.lmax_p[p])
        return (p, et, e, old_load, old_n, old_xc, old_mem, old_s, old_rho,
                old_cost_e, old_ct, old_interf, old_static, self.sumn[e] - dn)

    def revert(self, rec) -> None:
        (p, et, e, old_load, old_n, old_xc, old_mem, old_s, old_rho,
         old_cost_e, old_ct, old_interf, old_static, old_sumn) = rec
        self.load[et] = old_load
        self.n[et] = old_n
        self.xcnt[et] = old_xc
        self.mem[e] = old_mem
        self.s[e] = old_s
        self.rho[e] = old_rho
        self.sumn[e] = old_sumn
        self.cost_e[e] = old_cost_e
        self.cost_total = old_ct
        self.interf = old_interf
        self.static = old_static
        del self.on_e[e][p]

    def remove(self, p: int, opt: tuple[float, float, int, int]) -> None:
        """Take an assignment back out (recompute-based; used by local search)."""
        sc, part, e, t = opt
        r = self.rate_p[p]
        et = e * self.T + t
        new_load = self.load[et] - r
        if new_load < FEAS_EPS:
            new_load = 0.0
        new_xc = self.xcnt[et] - 1
        new_n = self._needed(new_load, self.load_lim[t], new_xc)
        dn = new_n - self.n[et]
        old_s, old_rho = self.s[e], self.rho[e]
        self.load[et] = new_load
        self.xcnt[et] = new_xc
        self.n[et] = new_n
        self.sumn[e] += dn
        if dn:
            self.mem[e] += dn * self.mem_t[t]
            if self.mem[e] < FEAS_EPS:
                self.mem[e] = 0.0
            self.s[e] = old_s + dn * self.alpha_lat[et]
            if self.s[e] < FEAS_EPS:
                self.s[e] = 0.0
            new_cost_e = self._cost(self.mem[e] / self.cap[e])
            self.cost_total += new_cost_e - self.cost_e[e]
            self.cost_e[e] = new_cost_e
        self.rho[e] = old_rho - r
        self.interf += self.s[e] * self.rho[e] - old_s * old_rho
        self.static -= sc
        del self.on_e[e][p]

    def materialize(self, chosen: dict[int, tuple[float, float, int, int]]) -> Solution:
        """Build a Solution (identifier-keyed, sparse) from chosen options."""
        idx = self.idx
        x: dict[tuple[str, str, str, int], int] = {}
        for p, (_, _, e, t) in chosen.items():
            i, m = self.pairs[p]
            mi, v = idx.variants[t]
            x[(idx.iot_ids[i], idx.edge_ids[e], idx.model_names[mi], v)] = 1
        n: dict[tuple[str, str, int], int] = {}
        for et, cnt in enumerate(self.n):
            if cnt:
                e, t = divmod(et, self.T)
                mi, v = idx.variants[t]
                n[(idx.edge_ids[e], idx.model_names[mi], v)] = cnt
        return Solution(x=x, n=n)


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------

def solve_exact(instance: Instance, budget: SolveBudget | None = None,
                initial: Solution | None = None, on_node=None) -> SolveResult:
    """Depth-first branch-and-bound over the assignment of each demanded pair.

    Pairs are branched in descending-rate order; each pair's (edge, variant)
    options are tried in ascending static-cost order with lexicographic
    (edge, variant) tie-breaking, which makes the search deterministic.
    `initial`, when feasible, seeds the incumbent.  `on_node` is a debug
    hook called as on_node(depth, fixed_options, bound) at every node.
    """
    t0 = time.perf_counter()
    if budget is None:
        budget = SolveBudget(max_nodes_explored=DEFAULT_MAX_NODES)
    st = _State(instance)
    P = st.P
    max_nodes = budget.max_nodes_explored if budget.max_nodes_explored is not None else math.inf
    tlimit = budget.wall_time_limit

    best = math.inf
    best_assign: list | None = None
    initial_solution: Solution | None = None
    if initial is not None and check_feasibility(instance, initial).feasible:
        best = objective(instance, initial)
        initial_solution = initial

    nodes = 0
    aborted = False
    frontier_lb = math.inf
    cur: list = [None] * P
    path_bounds = [math.inf] * (P + 1)

    def rec(d: int) -> None:
        nonlocal best, best_assign, nodes, aborted, frontier_lb
        if d == P:
            obj = st.objective_value()
            if obj < best - OBJ_TOL:
                best = obj
                best_assign = cur[:]
            return
        entry_bound = st.bound(d)
        path_bounds[d] = entry_bound
        if on_node is not None:
            on_node(d, tuple((o[2], o[3]) for o in cur[:d]), entry_bound)
        base = st.objective_value() + st.suffix_min[d + 1]
        for opt in st.opts[d]:
            if aborted:
                return
            if nodes >= max_nodes or (tlimit is not None and time.perf_counter() - t0 > tlimit):
                aborted = True
                frontier_lb = min(frontier_lb, min(path_bounds[: d + 1]))
                return
            if base + opt[0] >= best - OBJ_TOL:
                break  # options sorted by static cost: no later child can improve
            rec_ = st.attempt(d, opt)
            if rec_ is None:
                continue
            nodes += 1
            if st.bound(d + 1) < best - OBJ_TOL:
                cur[d] = opt
                rec(d + 1)
                cur[d] = None
            st.revert(rec_)

    rec(0)
    elapsed = time.perf_counter() - t0

    solution: Solution | None = None
    if best_assign is not None:
        chosen = {p: best_assign[p] for p in range(P)}
        recs = [st.attempt(p, best_assign[p]) for p in range(P)]
        if any(r is None for r in recs):
            raise MvspError("internal error: incumbent replay failed")
        solution = st.materialize(chosen)
        for r in reversed(recs):
            st.revert(r)
    elif initial_solution is not None:
        solution = initial_solution

    if solution is not None:
        best = objective(instance, solution)
        if not check_feasibility(instance, solution).feasible:
            raise MvspError("internal error: incumbent fails the feasibility audit")

    if not aborted:
        if solution is not None:
            status, lb = "optimal", best
        else:
            status, lb = "infeasible", math.inf
    else:
        lb = min(frontier_lb, best - OBJ_TOL) if solution is not None else frontier_lb
        status = "budget_exhausted"
        gap = budget.optimality_gap_target
        if solution is not None and gap > 0 and best - lb <= gap * max(abs(best), 1e-12):
            status = "optimal"

    return SolveResult(solution=solution, status=status, best_objective=best,
                       lower_bound=lb, nodes_explored=nodes, elapsed_s=elapsed)


# ---------------------------------------------------------------------------
# Heuristic solver
# ---------------------------------------------------------------------------

def solve_heuristic(instance: Instance, budget: SolveBudget | None = None,
                    seed: int = 0) -> SolveResult:
    """Greedy construction plus move/swap local search.

    Greedy assigns demanded pairs in descending rate order to the feasible
    option with the lowest incremental objective; on a dead end it restarts
    once with a seeded shuffled order.  Local search then reassigns single
    pairs and swaps same-model pairs until no improving move remains or the
    budget is exhausted.  Never claims optimality.
    """
    t0 = time.perf_counter()
    if budget is None:
        budget = SolveBudget(max_nodes_explored=200_000)
    max_evals = budget.max_nodes_explored if budget.max_nodes_explored is not None else math.inf
    tlimit = budget.wall_time_limit

    st = _State(instance)
    P = st.P
    evals = 0

    def out_of_budget() -> bool:
        return evals >= max_evals or (tlimit is not None and time.perf_counter() - t0 > tlimit)

    def greedy(order: list[int]):
        nonlocal evals
        chosen: dict[int, tuple] = {}
        applied: list[tuple[int, tuple]] = []
        for p in order:
            best_opt, best_val = None, math.inf
            for opt in st.opts[p]:
                rec = st.attempt(p, opt)
                evals += 1
                if rec is None:
                    continue
                val = st.objective_value()
                st.revert(rec)
                if val < best_val - OBJ_TOL:
                    best_val, best_opt = val, opt
            if best_opt is None:
                for q, opt in reversed(applied):
                    st.remove(q, opt)
                return None
            st.attempt(p, best_opt)
            chosen[p] = best_opt
            applied.append((p, best_opt))
        return chosen

    chosen = greedy(list(range(P)))
    if chosen is None:
        rng = np.random.default_rng(seed)
        chosen = greedy([int(q) for q in rng.permutation(P)])
    if chosen is None:
        return SolveResult(solution=None, status="infeasible", best_objective=math.inf,
                           lower_bound=st.suffix_min[0], nodes_explored=evals,
                           elapsed_s=time.perf_counter() - t0)

    improved = True
    while improved and not out_of_budget():
        improved = False
        for p in range(P):  # single reassignment moves
            if out_of_budget():
                break
            cur_opt = chosen[p]
            base_obj = st.objective_value()
            st.remove(p, cur_opt)
            best_opt, best_val = None, math.inf
            for opt in st.opts[p]:
                rec = st.attempt(p, opt)
                evals += 1
                if rec is None:
                    continue
                val = st.objective_value()
                st.revert(rec)
                if val < best_val - OBJ_TOL:
                    best_val, best_opt = val, opt
            if best_opt is not None and best_opt is not cur_opt and best_val < base_obj - OBJ_TOL:
                target = best_opt
                chosen[p] = best_opt
                improved = True
            else:
                target = cur_opt
            if st.attempt(p, target) is None:
                raise MvspError("internal error: local-search reinsertion failed")
        for p in range(P):  # same-model swaps
            if out_of_budget():
                break
            i_p, m_p = st.pairs[p]
            for q in range(p + 1, P):
                if st.pairs[q][1] != m_p:
                    continue
                op, oq = chosen[p], chosen[q]
                if (op[2], op[3]) == (oq[2], oq[3]):
                    continue
                new_p = st.opt_by_et[p].get((oq[2], oq[3]))
                new_q = st.opt_by_et[q].get((op[2], op[3]))
                if new_p is None or new_q is None:
                    continue  # the partner's edge is unreachable for this pair
                base = st.objective_value()
                st.remove(p, op)
                st.remove(q, oq)
                r1 = st.attempt(p, new_p)
                r2 = st.attempt(q, new_q) if r1 is not None else None
                evals += 2
                if r2 is not None and st.objective_value() < base - OBJ_TOL:
                    chosen[p], chosen[q] = new_p, new_q
                    improved = True
                else:
                    if r2 is not None:
                        st.revert(r2)
                    if r1 is not None:
                        st.revert(r1)
                    if st.attempt(p, op) is None or st.attempt(q, oq) is None:
                        raise MvspError("internal error: swap rollback failed")

    solution = st.materialize(chosen)
    best = objective(instance, solution)
    if not check_feasibility(instance, solution).feasible:
        raise MvspError("internal error: heuristic result fails the feasibility audit")
    return SolveResult(solution=solution, status="feasible", best_objective=best,
                       lower_bound=st.suffix_min[0], nodes_explored=evals,
                       elapsed_s=time.perf_counter() - t0)
