"""Problem data model: network topology, variant catalog, demand, instances.

An :class:`Instance` is the immutable problem statement consumed by the
formulation, linearization and solver modules.  Construction goes through
:func:`build_instance` (validation + derived data) or
:func:`random_instance` (seeded generation for experiments).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .catalog import ModelProfile, load_default_profiles
from .errors import ConfigurationError, UnknownNodeError, UnreachableError, ValidationError

# Shared feasibility epsilon: constraint checks and replica sizing use the
# same slack so the evaluator and the solvers agree on boundary cases.
FEAS_EPS = 1e-9


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    """Undirected network of IoT and edge nodes with per-link delays."""

    iot_nodes: tuple[str, ...]
    edge_nodes: tuple[str, ...]
    links: tuple[tuple[str, str, float], ...]
    capacity: dict[str, float]

    def __post_init__(self):
        object.__setattr__(self, "iot_nodes", tuple(self.iot_nodes))
        object.__setattr__(self, "edge_nodes", tuple(self.edge_nodes))
        object.__setattr__(self, "links",
                           tuple((str(a), str(b), float(d)) for a, b, d in self.links))
        object.__setattr__(self, "capacity", {str(k): float(v) for k, v in self.capacity.items()})
        all_nodes = list(self.iot_nodes) + list(self.edge_nodes)
        if len(set(all_nodes)) != len(all_nodes):
            raise ValidationError("topology.nodes", "node identifiers must be unique across IoT and edge sets")
        declared = set(all_nodes)
        for a, b, d in self.links:
            if a not in declared or b not in declared:
                raise ValidationError("topology.links", f"link ({a}, {b}) references an undeclared node")
            if not math.isfinite(d) or d < 0:
                raise ValidationError("topology.links", f"link ({a}, {b}) has invalid delay {d}")
        for e in self.edge_nodes:
            cap = self.capacity.get(e)
            if cap is None:
                raise ValidationError("topology.capacity", f"edge node {e} has no memory capacity")
            if not math.isfinite(cap) or cap <= 0:
                raise ValidationError("topology.capacity", f"edge node {e} has invalid capacity {cap}")

    def adjacency(self) -> dict[str, list[tuple[str, float]]]:
        adj: dict[str, list[tuple[str, float]]] = {n: [] for n in self.iot_nodes + self.edge_nodes}
        for a, b, d in self.links:
            adj[a].append((b, d))
            adj[b].append((a, d))
        return adj


@dataclass(frozen=True)
class Variant:
    """One deployable configuration of a model."""

    memory_req: float
    max_load: float
    base_latency: dict[str, float]  # edge node id -> exclusive latency (ms)
    interference_coeff: float

    def __post_init__(self):
        if self.memory_req <= 0:
            raise ValidationError("variant.memory_req", f"must be > 0, got {self.memory_req}")
        if self.max_load <= 0:
            raise ValidationError("variant.max_load", f"must be > 0, got {self.max_load}")
        if self.interference_coeff < 0:
            raise ValidationError("variant.interference_coeff", f"must be >= 0, got {self.interference_coeff}")
        for e, lat in self.base_latency.items():
            if not math.isfinite(lat) or lat <= 0:
                raise ValidationError("variant.base_latency", f"latency on {e} must be > 0, got {lat}")


@dataclass(frozen=True)
class Model:
    name: str
    variants: tuple[Variant, ...]

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.variants:
            raise ValidationError("model.variants", f"model {self.name} declares no variants")


@dataclass(frozen=True)
class VariantCatalog:
    """All models and their variants. Variant indices are 1-based positions."""

    models: tuple[Model, ...]

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ValidationError("catalog.models", "model names must be unique")

    def model(self, name: str) -> Model:
        for m in self.models:
            if m.name == name:
                return m
        raise ValidationError("catalog.models", f"unknown model {name}")

    def variant(self, name: str, v: int) -> Variant:
        m = self.model(name)
        if not 1 <= v <= len(m.variants):
            raise ValidationError("catalog.variant", f"model {name} has no variant {v}")
        return m.variants[v - 1]


@dataclass(frozen=True)
class DemandEntry:
    rate: float
    latency_req: float

    def __post_init__(self):
        if self.rate < 0 or not math.isfinite(self.rate):
            raise ValidationError("demand.rate", f"must be >= 0, got {self.rate}")
        if self.latency_req <= 0:
            raise ValidationError("demand.latency_req", f"must be > 0, got {self.latency_req}")


@dataclass(frozen=True)
class DemandMatrix:
    """Per (IoT node, model) request rate and latency requirement."""

    entries: dict[tuple[str, str], DemandEntry]

    def __post_init__(self):
        object.__setattr__(self, "entries",
                           {(str(i), str(m)): e for (i, m), e in self.entries.items()})

    def demanded_pairs(self) -> list[tuple[str, str]]:
        """(iot, model) pairs with positive rate; rate-0 entries are absent demand."""
        return [(i, m) for (i, m), e in self.entries.items() if e.rate > 0]


@dataclass(frozen=True)
class CostConfig:
    """Shape of the convex utilization-cost curve and its tangent grid.

    The curve is phi(u) = (exp(k*u) - 1) / (exp(k) - 1), normalized so
    phi(0) = 0 and phi(1) = 1.  `tangents`, when given, overrides the
    generated grid with explicit (slope, intercept) lines; they must still
    under-approximate the configured phi on [0, 1].
    """

    curvature: float = 4.0
    tangent_points: tuple[float, ...] = tuple(round(0.1 * i, 10) for i in range(11))
    tangents: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "tangent_points", tuple(float(t) for t in self.tangent_points))
        if self.tangents is not None:
            object.__setattr__(self, "tangents",
                               tuple((float(a), float(b)) for a, b in self.tangents))
        if self.curvature <= 0:
            raise ValidationError("cost.curvature", f"must be > 0, got {self.curvature}")

    def phi(self, u: float) -> float:
        k = self.curvature
        return (math.exp(k * u) - 1.0) / (math.exp(k) - 1.0)

    def _phi_slope(self, u: float) -> float:
        k = self.curvature
        return k * math.exp(k * u) / (math.exp(k) - 1.0)

    def make_tangents(self) -> tuple[tuple[float, float], ...]:
        """Tangent lines y(u) = a*u + b touching phi at the grid points."""
        if self.tangents is not None:
            lines = self.tangents
        else:
            lines = tuple(
                (self._phi_slope(u0), self.phi(u0) - self._phi_slope(u0) * u0)
                for u0 in self.tangent_points
            )
        if not lines:
            raise ConfigurationError("cost tangent set is empty")
        # Tangency check: no line may overshoot phi anywhere on [0, 1].
        grid = np.linspace(0.0, 1.0, 1001)
        phi_vals = (np.exp(self.curvature * grid) - 1.0) / (math.exp(self.curvature) - 1.0)
        for a, b in lines:
            if np.any(a * grid + b > phi_vals + 1e-9):
                raise ValidationError("cost.tangents", f"line y = {a}*u + {b} overshoots the cost curve")
        return lines


@dataclass(frozen=True)
class Instance:
    """Immutable problem statement; safe to share across solver workers."""

    topology: Topology
    catalog: VariantCatalog
    demand: DemandMatrix
    objective_weight: float          # weight of average latency in the objective
    max_replicas: int                # cap K on instances per (edge, model, variant)
    cost_config: CostConfig
    cost_tangents: tuple[tuple[float, float], ...]
    comm_latency: dict[tuple[str, str], float]   # (iot, edge) -> ms, round trip applied
    round_trip: bool = True
    replica_cap_mode: str = "per_variant"        # or "aggregate": sum of replicas per node <= K

    @cached_property
    def index(self) -> "InstanceIndex":
        return InstanceIndex(self)


class InstanceIndex:
    """Array view of an instance for the numeric modules.

    Flattens (model, variant) into a single axis t; all arrays are indexed
    by positional ids (IoT i, edge e, flat variant t).
    """

    def __init__(self, inst: Instance):
        top, cat = inst.topology, inst.catalog
        self.iot_ids = list(top.iot_nodes)
        self.edge_ids = list(top.edge_nodes)
        self.model_names = [m.name for m in cat.models]
        self.iot_pos = {n: k for k, n in enumerate(self.iot_ids)}
        self.edge_pos = {n: k for k, n in enumerate(self.edge_ids)}
        self.model_pos = {n: k for k, n in enumerate(self.model_names)}

        self.variants: list[tuple[int, int]] = []   # t -> (model idx, 1-based variant)
        self.t_of: dict[tuple[int, int], int] = {}
        self.model_tranges: list[range] = []
        t = 0
        for mi, m in enumerate(cat.models):
            start = t
            for v in range(1, len(m.variants) + 1):
                self.variants.append((mi, v))
                self.t_of[(mi, v)] = t
                t += 1
            self.model_tranges.append(range(start, t))
        self.n_iot = len(self.iot_ids)
        self.n_edge = len(self.edge_ids)
        self.n_models = len(self.model_names)
        self.n_var = t

        self.cl = np.full((self.n_iot, self.n_edge), np.inf)
        for (i, e), v in inst.comm_latency.items():
            self.cl[self.iot_pos[i], self.edge_pos[e]] = v

        self.lat = np.zeros((self.n_var, self.n_edge))
        self.alpha_t = np.zeros(self.n_var)
        self.mem_t = np.zeros(self.n_var)
        self.load_t = np.zeros(self.n_var)
        for tt, (mi, v) in enumerate(self.variants):
            var = cat.models[mi].variants[v - 1]
            self.alpha_t[tt] = var.interference_coeff
            self.mem_t[tt] = var.memory_req
            self.load_t[tt] = var.max_load
            for e, lv in var.base_latency.items():
                self.lat[tt, self.edge_pos[e]] = lv

        self.cap_e = np.array([top.capacity[e] for e in self.edge_ids])

        self.rate = np.zeros((self.n_iot, self.n_models))
        self.lat_req = np.full((self.n_iot, self.n_models), np.inf)
        for (i, m), entry in inst.demand.entries.items():
            ii, mi = self.iot_pos[i], self.model_pos[m]
            self.rate[ii, mi] = entry.rate
            self.lat_req[ii, mi] = entry.latency_req

        self.demanded = [(self.iot_pos[i], self.model_pos[m]) for i, m in inst.demand.demanded_pairs()]
        self.total_rate = float(sum(self.rate[i, m] for i, m in self.demanded))
        self.tangents = np.array(inst.cost_tangents) if inst.cost_tangents else np.zeros((0, 2))

    def cost_of_utilization(self, u: float) -> float:
        """max over tangent lines a*u + b."""
        a = self.tangents[:, 0]
        b = self.tangents[:, 1]
        return float(np.max(a * u + b))


# ---------------------------------------------------------------------------
# Shortest paths
# ---------------------------------------------------------------------------

def _dijkstra(adj: dict[str, list[tuple[str, float]]], source: str) -> dict[str, float]:
    dist = {source: 0.0}
    heap = [(0.0, source)]
    done: set[str] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path_delay(topology: Topology, iot_node: str, edge_node: str,
                        round_trip: bool = False) -> float:
    """Minimum-total-delay path cost between an IoT node and an edge node.

    With ``round_trip`` the one-way cost is doubled (request out, response
    back over the same symmetric path).
    """
    if iot_node not in topology.iot_nodes:
        raise UnknownNodeError(f"unknown IoT node {iot_node!r}")
    if edge_node not in topology.edge_nodes:
        raise UnknownNodeError(f"unknown edge node {edge_node!r}")
    dist = _dijkstra(topology.adjacency(), iot_node)
    if edge_node not in dist:
        raise UnreachableError(f"no path from {iot_node!r} to {edge_node!r}")
    d = dist[edge_node]
    return 2.0 * d if round_trip else d


# ---------------------------------------------------------------------------
# Instance construction
# ---------------------------------------------------------------------------

def build_instance(topology: Topology, catalog: VariantCatalog, demand: DemandMatrix,
                   objective_weight: float, max_replicas: int,
                   cost_config: CostConfig | None = None, *,
                   round_trip: bool = True,
                   replica_cap_mode: str = "per_variant") -> Instance:
    """Validate all components and assemble an Instance.

    Fills the (iot, edge) communication-latency table from shortest paths
    (infinity for unreachable pairs; construction fails only when an IoT
    node cannot reach any edge node) and generates the cost tangent set.
    """
    if not topology.iot_nodes:
        raise ValidationError("topology.iot_nodes", "need at least one IoT node")
    if not topology.edge_nodes:
        raise ValidationError("topology.edge_nodes", "need at least one edge node")
    if not 0.0 <= objective_weight <= 1.0:
        raise ValidationError("objective_weight", f"must be in [0, 1], got {objective_weight}")
    if max_replicas < 1:
        raise ValidationError("max_replicas", f"must be >= 1, got {max_replicas}")
    if replica_cap_mode not in ("per_variant", "aggregate"):
        raise ValidationError("replica_cap_mode", f"unknown mode {replica_cap_mode!r}")

    edge_set = set(topology.edge_nodes)
    for m in catalog.models:
        for v, var in enumerate(m.variants, start=1):
            missing = edge_set - set(var.base_latency)
            if missing:
                raise ValidationError(
                    "catalog.base_latency",
                    f"model {m.name} variant {v} lacks a base latency for edge node(s) {sorted(missing)}")

    model_names = {m.name for m in catalog.models}
    iot_set = set(topology.iot_nodes)
    for (i, m) in demand.entries:
        if i not in iot_set:
            raise ValidationError("demand.entries", f"unknown IoT node {i!r}")
        if m not in model_names:
            raise ValidationError("demand.entries", f"unknown model {m!r}")

    adj = topology.adjacency()
    comm: dict[tuple[str, str], float] = {}
    factor = 2.0 if round_trip else 1.0
    for i in topology.iot_nodes:
        dist = _dijkstra(adj, i)
        reached = False
        for e in topology.edge_nodes:
            d = dist.get(e, math.inf)
            comm[(i, e)] = factor * d if math.isfinite(d) else math.inf
            reached = reached or math.isfinite(d)
        if not reached:
            raise ValidationError("topology.links", f"IoT node {i!r} cannot reach any edge node")

    cfg = cost_config if cost_config is not None else CostConfig()
    tangents = cfg.make_tangents()

    return Instance(topology=topology, catalog=catalog, demand=demand,
                    objective_weight=float(objective_weight), max_replicas=int(max_replicas),
                    cost_config=cfg, cost_tangents=tangents, comm_latency=comm,
                    round_trip=bool(round_trip), replica_cap_mode=replica_cap_mode)


# ---------------------------------------------------------------------------
# Random generation
# ---------------------------------------------------------------------------

def _random_connected_graph(node_ids: list[str], rng: np.random.Generator,
                            delay_mean: float, extra_edge_prob: float) -> list[tuple[str, str, float]]:
    """Random spanning tree plus extra edges; delays uniform on [0.5, 1.5] * mean."""
    order = [node_ids[k] for k in rng.permutation(len(node_ids))]
    pairs: list[tuple[str, str]] = []
    seen: set[frozenset[str]] = set()
    for j in range(1, len(order)):
        k = int(rng.integers(0, j))
        pairs.append((order[k], order[j]))
        seen.add(frozenset((order[k], order[j])))
    for a_idx in range(len(node_ids)):
        for b_idx in range(a_idx + 1, len(node_ids)):
            a, b = node_ids[a_idx], node_ids[b_idx]
            if frozenset((a, b)) in seen:
                continue
            if rng.random() < extra_edge_prob:
                pairs.append((a, b))
                seen.add(frozenset((a, b)))
    delays = rng.uniform(0.5 * delay_mean, 1.5 * delay_mean, size=len(pairs))
    return [(a, b, float(d)) for (a, b), d in zip(pairs, delays)]


def _materialize_catalog(profiles: tuple[ModelProfile, ...], n_models: int, n_variants: int,
                         edge_ids: list[str], rng: np.random.Generator) -> VariantCatalog:
    """Instantiate concrete per-edge-node catalogs from reference profiles.

    Model profiles are drawn by a seeded permutation, wrapping around when
    more models are requested than profiles exist.  Each edge node gets a
    speed factor in [0.8, 1.2] applied to the reference latencies.
    """
    if n_variants > min(len(p.variants) for p in profiles):
        raise ValidationError("shape.variants",
                              f"built-in profiles define at most {min(len(p.variants) for p in profiles)} variants")
    perm = list(rng.permutation(len(profiles)))
    chosen = [profiles[perm[j % len(profiles)]] for j in range(n_models)]
    factors = rng.uniform(0.8, 1.2, size=len(edge_ids))
    models = []
    for j, prof in enumerate(chosen):
        variants = []
        for var in prof.variants[:n_variants]:
            base = {e: float(var.latency_ms * factors[k]) for k, e in enumerate(edge_ids)}
            variants.append(Variant(memory_req=var.memory, max_load=var.max_load,
                                    base_latency=base, interference_coeff=var.interference_coeff))
        models.append(Model(name=f"m{j + 1}_{prof.name}", variants=tuple(variants)))
    return VariantCatalog(models=tuple(models))


def random_instance(shape: tuple[int, int, int, int], seed: int,
                    load_mean: float = 5.5, link_delay_mean: float = 12.23, *,
                    capacity: float = 8.0, objective_weight: float = 0.1,
                    max_replicas: int = 2, latency_req_factor: float = 10.0,
                    extra_edge_prob: float = 0.2,
                    cost_config: CostConfig | None = None,
                    round_trip: bool = True,
                    replica_cap_mode: str = "per_variant") -> Instance:
    """Seeded random instance of the given (N_I, N_E, M, V_m) shape.

    Deterministic for a fixed seed.  Link delays are uniform with the given
    mean; request rates are integers uniform on [1, round(2*load_mean) - 1]
    so their mean is load_mean.  Rate draws for a given seed are coupled
    across load_mean values: raising load_mean never lowers any rate.
    """
    n_iot, n_edge, n_models, n_variants = shape
    if min(shape) < 1:
        raise ValidationError("shape", f"all shape entries must be >= 1, got {shape}")
    if load_mean <= 0 or link_delay_mean <= 0:
        raise ValidationError("means", "load_mean and link_delay_mean must be > 0")

    iot_ids = [f"i{k + 1}" for k in range(n_iot)]
    edge_ids = [f"e{k + 1}" for k in range(n_edge)]

    rng_graph = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    rng_cat = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    rng_rate = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))

    links = _random_connected_graph(iot_ids + edge_ids, rng_graph, link_delay_mean, extra_edge_prob)
    topology = Topology(iot_nodes=tuple(iot_ids), edge_nodes=tuple(edge_ids),
                        links=tuple(links), capacity={e: float(capacity) for e in edge_ids})

    catalog = _materialize_catalog(load_default_profiles(), n_models, n_variants, edge_ids, rng_cat)

    high = max(1, int(round(2.0 * load_mean)) - 1)
    u = rng_rate.random(size=(n_iot, n_models))  # u < 1, so rates stay within [1, high]
    rates = 1 + np.floor(u * high).astype(int)

    max_lat = max(lv for m in catalog.models for var in m.variants for lv in var.base_latency.values())
    adj = topology.adjacency()
    diameter = 0.0
    factor = 2.0 if round_trip else 1.0
    for i in iot_ids:
        dist = _dijkstra(adj, i)
        finite = [dist[e] for e in edge_ids if e in dist]
        if finite:
            diameter = max(diameter, factor * max(finite))
    lat_req = latency_req_factor * max_lat + diameter

    entries = {}
    for ii, i in enumerate(iot_ids):
        for mi, m in enumerate(catalog.models):
            entries[(i, m.name)] = DemandEntry(rate=float(rates[ii, mi]), latency_req=float(lat_req))
    demand = DemandMatrix(entries=entries)

    return build_instance(topology, catalog, demand, objective_weight, max_replicas,
                          cost_config, round_trip=round_trip, replica_cap_mode=replica_cap_mode)
