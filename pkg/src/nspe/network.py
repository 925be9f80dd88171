"""Task universe, node interests, topology and combination-weight policies.

Node and task ids are dense 0-based integers everywhere inside the package.
The JSON representation (:func:`network_from_dict` / :func:`network_to_dict`)
uses 1-based labels.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

import numpy as np

from .errors import ConfigError, InterestError, PolicyError, UnknownTaskError

Pair = tuple[int, int]

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TaskSpec:
    id: int
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"task {self.id}: dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class NodeSpec:
    """Static description of one node.

    ``regressor_var`` is ``None`` when the variance is calibrated per run to
    hit a target SNR ("auto-snr" in the config file).
    """

    id: int
    tasks: tuple[int, ...]
    step_size: float
    noise_var: float
    regressor_var: float | None = None
    obs_rows: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(int(t) for t in self.tasks))
        if not self.tasks:
            raise ConfigError(f"node {self.id}: task list is empty")
        if len(set(self.tasks)) != len(self.tasks):
            raise ConfigError(f"node {self.id}: duplicate task ids in {self.tasks}")
        if self.obs_rows < 1:
            raise ConfigError(f"node {self.id}: obs_rows must be >= 1")
        if not self.step_size > 0:
            raise ConfigError(f"node {self.id}: step_size must be positive")
        if not self.noise_var >= 0:
            raise ConfigError(f"node {self.id}: noise_var must be nonnegative")
        if self.regressor_var is not None and not self.regressor_var >= 0:
            raise ConfigError(f"node {self.id}: regressor_var must be nonnegative")

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)


@dataclass(frozen=True, eq=False)
class Topology:
    """Undirected one-hop neighbor relation over ``size`` nodes.

    ``adjacency`` is kept as given so that :func:`validate_topology` can
    report asymmetric input; :meth:`from_edges` always produces a symmetric
    relation with self-membership on the diagonal.
    """

    size: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        if adj.shape != (self.size, self.size):
            raise ConfigError(
                f"adjacency shape {adj.shape} does not match size {self.size}")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, size: int, edges: Iterable[tuple[int, int]]) -> Topology:
        adj = np.eye(size, dtype=bool)
        for a, b in edges:
            if not (0 <= a < size and 0 <= b < size):
                raise ConfigError(f"edge ({a}, {b}) references a node outside 0..{size - 1}")
            adj[a, b] = adj[b, a] = True
        return cls(size, adj)

    @classmethod
    def complete(cls, size: int) -> Topology:
        return cls(size, np.ones((size, size), dtype=bool))

    def neighbors(self, k: int) -> tuple[int, ...]:
        """The neighborhood of ``k``, always including ``k`` itself."""
        row = self.adjacency[k].copy()
        row[k] = True
        return tuple(int(i) for i in np.flatnonzero(row))

    @property
    def edges(self) -> list[tuple[int, int]]:
        a, b = np.nonzero(np.triu(self.adjacency | self.adjacency.T, 1))
        return [(int(i), int(j)) for i, j in zip(a, b)]

    def degree(self, k: int) -> int:
        return len(self.neighbors(k)) - 1


@dataclass(frozen=True)
class ClusterSet:
    owner: Pair
    members: frozenset[Pair]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if self.owner not in self.members:
            raise PolicyError(f"cluster set of {self.owner} must contain its owner")

    def __contains__(self, pair) -> bool:
        return pair in self.members

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class CombinationWeights:
    """Convex weights ``c_{kl,tp}`` used by owner ``(k, t)``."""

    owner: Pair
    weights: Mapping[Pair, float]

    def __post_init__(self):
        w = {tuple(p): float(c) for p, c in self.weights.items()}
        if not w:
            raise PolicyError(f"owner {self.owner}: empty weight support")
        if any(c < 0 for c in w.values()):
            raise PolicyError(f"owner {self.owner}: negative combination weight")
        total = sum(w.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise PolicyError(f"owner {self.owner}: weights sum to {total!r}, not 1")
        object.__setattr__(self, "weights", MappingProxyType(w))

    @property
    def support(self) -> frozenset[Pair]:
        return frozenset(p for p, c in self.weights.items() if c > 0)


@dataclass(frozen=True, eq=False)
class StackedIndex:
    """Ordering of all (node, task) pairs: nodes by id, tasks in interest order."""

    pairs: tuple[Pair, ...]
    position: Mapping[Pair, int] = field(repr=False)

    @classmethod
    def from_nodes(cls, nodes: Sequence[NodeSpec]) -> StackedIndex:
        pairs = tuple((n.id, t) for n in sorted(nodes, key=lambda n: n.id) for t in n.tasks)
        return cls(pairs, MappingProxyType({p: i for i, p in enumerate(pairs)}))

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, pair: Pair) -> int:
        return self.position[pair]

    @cached_property
    def owners(self) -> np.ndarray:
        return np.array([k for k, _ in self.pairs], dtype=np.intp)

    @cached_property
    def tasks(self) -> np.ndarray:
        return np.array([t for _, t in self.pairs], dtype=np.intp)


@dataclass(frozen=True)
class ValidationReport:
    symmetric: bool
    self_loops: bool
    connected: bool
    asymmetric_pairs: list[tuple[int, int]]
    missing_self: list[int]
    components: list[list[int]]

    @property
    def ok(self) -> bool:
        return self.symmetric and self.self_loops and self.connected

    def describe(self) -> str:
        if self.ok:
            return "topology ok: symmetric, self-inclusive, connected"
        msgs = []
        if not self.symmetric:
            msgs.append(f"asymmetric links {self.asymmetric_pairs}")
        if not self.self_loops:
            msgs.append(f"nodes missing from their own neighborhood {self.missing_self}")
        if not self.connected:
            msgs.append(f"disconnected, components {self.components}")
        return "; ".join(msgs)


def validate_topology(topology: Topology, nodes: Sequence[NodeSpec]) -> ValidationReport:
    """Check symmetry, self-membership and connectivity of ``topology``.

    Connectivity is decided by breadth-first search over the symmetrized
    relation; when it fails the report lists every connected component.
    """
    if len(nodes) != topology.size:
        raise ConfigError(
            f"{len(nodes)} node specs for a topology of size {topology.size}")
    adj = topology.adjacency
    asym = [(int(i), int(j)) for i, j in zip(*np.nonzero(adj != adj.T)) if i < j]
    missing_self = [int(k) for k in np.flatnonzero(~np.diag(adj))]

    und = adj | adj.T
    seen = np.zeros(topology.size, dtype=bool)
    components = []
    for start in range(topology.size):
        if seen[start]:
            continue
        comp, queue = [], deque([start])
        seen[start] = True
        while queue:
            k = queue.popleft()
            comp.append(k)
            for j in np.flatnonzero(und[k]):
                if not seen[j]:
                    seen[j] = True
                    queue.append(int(j))
        components.append(sorted(comp))
    return ValidationReport(
        symmetric=not asym,
        self_loops=not missing_self,
        connected=len(components) == 1,
        asymmetric_pairs=asym,
        missing_self=missing_self,
        components=components,
    )


@dataclass(frozen=True, eq=False)
class Network:
    """Tasks, nodes and topology bundled together and cross-validated."""

    tasks: tuple[TaskSpec, ...]
    nodes: tuple[NodeSpec, ...]
    topology: Topology

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(sorted(self.tasks, key=lambda t: t.id)))
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate task ids {ids}")
        if [n.id for n in self.nodes] != list(range(len(self.nodes))):
            raise ConfigError("node ids must be exactly 0..K-1")
        if self.topology.size != len(self.nodes):
            raise ConfigError(
                f"topology has {self.topology.size} nodes but {len(self.nodes)} node specs given")
        known = set(ids)
        for n in self.nodes:
            unknown = [t for t in n.tasks if t not in known]
            if unknown:
                raise ConfigError(f"node {n.id} lists unknown tasks {unknown}")

    @property
    def size(self) -> int:
        return len(self.nodes)

    @cached_property
    def dims(self) -> Mapping[int, int]:
        return MappingProxyType({t.id: t.dim for t in self.tasks})

    @cached_property
    def index(self) -> StackedIndex:
        return StackedIndex.from_nodes(self.nodes)

    @property
    def equal_dims(self) -> bool:
        return len(set(self.dims.values())) == 1

    @property
    def common_dim(self) -> int:
        if not self.equal_dims:
            raise ConfigError(f"tasks have unequal dims {dict(self.dims)}")
        return self.tasks[0].dim

    def node_dim(self, k: int) -> int:
        return sum(self.dims[t] for t in self.nodes[k].tasks)

    def neighbors(self, k: int) -> tuple[int, ...]:
        return self.topology.neighbors(k)

    def candidate_pairs(self, k: int) -> list[Pair]:
        """All (l, p) with l in the neighborhood of k and p in the interests of l."""
        return [(l, p) for l in self.neighbors(k) for p in self.nodes[l].tasks]

    def task_kind(self, t: int) -> str:
        size = len(interest_group(t, self.nodes))
        if size == self.size:
            return "global"
        return "local" if size == 1 else "common"

    def replace_nodes(self, nodes: Sequence[NodeSpec]) -> Network:
        return Network(self.tasks, tuple(nodes), self.topology)

    def validate(self) -> ValidationReport:
        return validate_topology(self.topology, self.nodes)


def interest_group(task: int, nodes: Sequence[NodeSpec]) -> frozenset[int]:
    """Ids of the nodes interested in ``task``."""
    group = frozenset(n.id for n in nodes if task in n.tasks)
    if not group:
        raise UnknownTaskError(task)
    return group


def oracle_cluster_set(owner: Pair, topology: Topology, nodes: Sequence[NodeSpec]) -> ClusterSet:
    """Neighbors that share task ``t`` with node ``k``, paired with that same task."""
    k, t = owner
    if t not in nodes[k].tasks:
        raise InterestError(f"task {t} is not in the interests of node {k}")
    group = interest_group(t, nodes)
    return ClusterSet(owner, frozenset((l, t) for l in topology.neighbors(k) if l in group))


def uniform_weights(members: Iterable[Pair], owner: Pair | None = None) -> CombinationWeights:
    members = sorted(set(members))
    if not members:
        raise PolicyError("cannot build uniform weights over an empty member set")
    c = 1.0 / len(members)
    return CombinationWeights(owner if owner is not None else members[0],
                              {m: c for m in members})


def geometric_topology(size: int, radius: float, seed: int, max_tries: int = 1000) -> Topology:
    """Random geometric graph in the unit square, redrawn until connected.

    Deterministic in ``seed``: the k-th attempt uses ``(seed, k)`` so the same
    arguments always give the same graph.
    """
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        pos = rng.uniform(size=(size, 2))
        # sort by x so that node ids sweep the region left to right
        pos = pos[np.argsort(pos[:, 0])]
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        topo = Topology(size, dist <= radius)
        if validate_topology(topo, [None] * size).connected:
            return topo
    raise ConfigError(f"no connected geometric graph with radius {radius} in {max_tries} draws")


def _reject_unknown(entry: Mapping, allowed: set, where: str) -> None:
    if not isinstance(entry, Mapping):
        raise ConfigError(f"{where}: expected an object")
    extra = sorted(set(entry) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown fields {extra}")


def network_from_dict(cfg: Mapping) -> Network:
    """Build a :class:`Network` from the 1-based JSON representation."""
    _reject_unknown(cfg, {"tasks", "nodes", "edges"}, "network")
    for n in cfg.get("nodes", []):
        _reject_unknown(n, {"id", "tasks", "step_size", "noise_var", "regressor_var", "obs_rows"},
                        f"network.nodes[{n.get('id', '?')}]")
    try:
        tasks = [TaskSpec(int(t["id"]) - 1, int(t["dim"])) for t in cfg["tasks"]]
        nodes = []
        for n in cfg["nodes"]:
            rv = n.get("regressor_var", "auto-snr")
            nodes.append(NodeSpec(
                id=int(n["id"]) - 1,
                tasks=tuple(int(t) - 1 for t in n["tasks"]),
                step_size=float(n["step_size"]),
                noise_var=float(n["noise_var"]),
                regressor_var=None if rv == "auto-snr" else float(rv),
                obs_rows=int(n.get("obs_rows", 1)),
            ))
        edges = [(int(a) - 1, int(b) - 1) for a, b in cfg.get("edges", [])]
    except KeyError as exc:
        raise ConfigError(f"network config is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed network config: {exc}") from None
    return Network(tuple(tasks), tuple(nodes), Topology.from_edges(len(nodes), edges))


def network_to_dict(net: Network) -> dict:
    return {
        "tasks": [{"id": t.id + 1, "dim": t.dim} for t in net.tasks],
        "nodes": [
            {
                "id": n.id + 1,
                "tasks": [t + 1 for t in n.tasks],
                "obs_rows": n.obs_rows,
                "step_size": n.step_size,
                "noise_var": n.noise_var,
                "regressor_var": "auto-snr" if n.regressor_var is None else n.regressor_var,
            }
            for n in net.nodes
        ],
        "edges": [[a + 1, b + 1] for a, b in net.topology.edges],
    }


PAPER_TOPOLOGY_SEED = 2016
PAPER_RADIUS = 0.45


def paper_network(step_size: float = 4e-3, noise_var: float = 1e-3,
                  topology_seed: int = PAPER_TOPOLOGY_SEED) -> Network:
    """The ten-node simulation setting.

    Every node estimates one global task and its own local task; two common
    tasks are shared by the left (nodes 0-5) and right (nodes 4-9) halves of
    the deployment, all tasks of dimension 3. Local tasks are ids 0-9, the
    global task is 10 and the common tasks are 11 and 12.
    """
    K, M = 10, 3
    tasks = [TaskSpec(t, M) for t in range(K + 3)]
    common_a, common_b = set(range(0, 6)), set(range(4, 10))
    nodes = []
    for k in range(K):
        interests = [k, K]
        if k in common_a:
            interests.append(K + 1)
        if k in common_b:
            interests.append(K + 2)
        nodes.append(NodeSpec(k, tuple(interests), step_size, noise_var, None, 1))
    topo = geometric_topology(K, PAPER_RADIUS, topology_seed)
    return Network(tuple(tasks), tuple(nodes), topo)
