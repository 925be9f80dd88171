"""Per-node diffusion updates for the four estimation strategies.

These functions follow the recursions literally, one node and one task at a
time, and operate on plain dictionaries. They are the readable reference;
:mod:`nspe.simulate` runs the same rounds vectorized over many Monte Carlo
runs and is checked against this module in the test suite.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .data import ObservationSample
from .errors import ConfigError, ExchangeError, InterestError, ModelError, PolicyError
from .network import (ClusterSet, CombinationWeights, Network, NodeSpec, Pair,
                      Topology, oracle_cluster_set, uniform_weights)


class Variant(str, enum.Enum):
    NONCOOP = "noncoop"
    ORACLE = "oracle"
    BLIND = "blind"
    UDNSPE = "udnspe"


class Hypothesis(enum.Enum):
    H0 = 0  # same task
    H1 = 1  # different tasks


@dataclass(frozen=True)
class AlgorithmVariant:
    """A strategy plus its policy parameters.

    ``tau`` is the global clustering threshold used by UD-NSPE. Instead of a
    fixed value, ``tau_relative`` sets it per run to that fraction of the
    smallest squared distance between two true task vectors. Entries of
    ``tau_overrides`` keyed by ``(k, l, t, p)`` replace it for single pairs.
    """

    kind: Variant
    tau: float | None = None
    tau_overrides: Mapping[tuple[int, int, int, int], float] = field(default_factory=dict)
    tau_relative: float | None = None
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Variant(self.kind))
        if self.kind is Variant.UDNSPE:
            if (self.tau is None) == (self.tau_relative is None):
                raise ConfigError("UD-NSPE needs exactly one of tau and tau_relative")
            if not (self.tau or self.tau_relative) > 0:
                raise ConfigError("UD-NSPE threshold must be positive")
            if any(not v > 0 for v in self.tau_overrides.values()):
                raise ConfigError("per-pair tau overrides must be positive")

    @property
    def name(self) -> str:
        return self.label or self.kind.value

    def threshold(self, k: int, l: int, t: int, p: int) -> float:
        if self.tau is None:
            raise ConfigError("relative threshold must be resolved against a ground truth first")
        return self.tau_overrides.get((k, l, t, p), self.tau)


@dataclass
class NodeState:
    node: int
    phi: dict[int, np.ndarray]
    varsigma: dict[int, np.ndarray] | None = None
    psi: dict[int, np.ndarray] = field(default_factory=dict)
    clusters: dict[int, ClusterSet] | None = None


@dataclass
class RoundLog:
    weights: dict[Pair, CombinationWeights]
    clusters: dict[Pair, ClusterSet]
    messages: int


def adaptation_step(estimates: Mapping[int, np.ndarray], sample: ObservationSample,
                    step_size: float, tasks: Sequence[int] | None = None) -> dict[int, np.ndarray]:
    """One LMS correction of every task estimate of a node.

    The residual ``d - sum_p U_p x_p`` is formed once and shared by all tasks.
    ``tasks`` gives the column-block order of ``sample.U``; it defaults to the
    iteration order of ``estimates``.
    """
    tasks = list(estimates) if tasks is None else list(tasks)
    if set(tasks) != set(estimates):
        raise ModelError(f"estimates cover {sorted(estimates)}, expected {sorted(tasks)}")
    U = np.atleast_2d(np.asarray(sample.U, dtype=float))
    d = np.atleast_1d(np.asarray(sample.d, dtype=float))
    blocks, start = [], 0
    for t in tasks:
        m = np.asarray(estimates[t]).size
        blocks.append((t, slice(start, start + m)))
        start += m
    if U.shape != (d.size, start):
        raise ModelError(f"regressor shape {U.shape} does not match ({d.size}, {start})")
    r = d - sum(U[:, sl] @ estimates[t] for t, sl in blocks)
    return {t: estimates[t] + step_size * (U[:, sl].T @ r) for t, sl in blocks}


def combination_step(intermediates: Mapping[Pair, np.ndarray],
                     weights: CombinationWeights) -> np.ndarray:
    out = None
    for pair, c in weights.weights.items():
        try:
            vec = np.asarray(intermediates[pair], dtype=float)
        except KeyError:
            raise ExchangeError(f"no intermediate estimate received from {pair}") from None
        if out is None:
            out = c * vec
        elif vec.shape != out.shape:
            raise ModelError(f"member {pair} has shape {vec.shape}, expected {out.shape}")
        else:
            out = out + c * vec
    return out


def blind_weights(owner: Pair, topology: Topology, nodes: Sequence[NodeSpec]) -> CombinationWeights:
    """Uniform weight on every (l, p) in the neighborhood, whatever the task."""
    k, t = owner
    if t not in nodes[k].tasks:
        raise InterestError(f"task {t} is not in the interests of node {k}")
    members = [(l, p) for l in topology.neighbors(k) for p in nodes[l].tasks]
    return uniform_weights(members, owner)


def hypothesis_test(a, b, tau: float) -> Hypothesis:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ModelError(f"cannot compare estimates of shapes {a.shape} and {b.shape}")
    if not tau > 0:
        raise ConfigError("threshold must be positive")
    return Hypothesis.H0 if float(np.sum((a - b) ** 2)) < tau else Hypothesis.H1


def update_cluster_set(owner: Pair, own, neighbor_estimates: Mapping[Pair, np.ndarray],
                       tau: float | Callable[[int, int], float],
                       network: Network) -> ClusterSet:
    """Members ``(l, p)`` of the neighborhood whose estimate passes the test against ``own``.

    ``tau`` is either a scalar or a callable ``(l, p) -> threshold``.
    """
    k, t = owner
    thr = tau if callable(tau) else (lambda l, p: tau)
    members = {owner}
    for l, p in network.candidate_pairs(k):
        if (l, p) == owner:
            continue
        try:
            other = neighbor_estimates[(l, p)]
        except KeyError:
            raise ExchangeError(f"node {k} did not receive the estimate of {(l, p)}") from None
        if np.shape(other) != np.shape(own):
            continue  # different dimension: cannot be the same task
        if hypothesis_test(own, other, thr(l, p)) is Hypothesis.H0:
            members.add((l, p))
    return ClusterSet(owner, frozenset(members))


def init_states(network: Network, variant: AlgorithmVariant | Variant,
                initial: Mapping[Pair, np.ndarray] | None = None) -> list[NodeState]:
    """Zero estimates (or ``initial``) and singleton cluster sets for every node."""
    kind = variant.kind if isinstance(variant, AlgorithmVariant) else Variant(variant)
    states = []
    for node in network.nodes:
        def start(t):
            if initial is not None and (node.id, t) in initial:
                return np.array(initial[(node.id, t)], dtype=float)
            return np.zeros(network.dims[t])

        st = NodeState(node.id, {t: start(t) for t in node.tasks})
        if kind is Variant.UDNSPE:
            st.varsigma = {t: start(t) for t in node.tasks}
            st.clusters = {t: ClusterSet((node.id, t), frozenset({(node.id, t)}))
                           for t in node.tasks}
        states.append(st)
    return states


def static_weights(variant: Variant, network: Network) -> dict[Pair, CombinationWeights]:
    """Time-invariant weights of the non-adaptive strategies."""
    nodes, topo = network.nodes, network.topology
    out = {}
    for pair in network.index.pairs:
        if variant is Variant.NONCOOP:
            out[pair] = CombinationWeights(pair, {pair: 1.0})
        elif variant is Variant.ORACLE:
            out[pair] = uniform_weights(oracle_cluster_set(pair, topo, nodes).members, pair)
        elif variant is Variant.BLIND:
            out[pair] = blind_weights(pair, topo, nodes)
        else:
            raise PolicyError(f"{variant.value} has no static weights")
    return out


def run_round(states: Sequence[NodeState], samples: Mapping[int, ObservationSample],
              variant: AlgorithmVariant, network: Network, i: int,
              step_sizes: Mapping[int, float] | None = None,
              weights: Mapping[Pair, CombinationWeights] | None = None):
    """One synchronous round: every node adapts, estimates are exchanged, every node combines.

    For UD-NSPE the stand-alone estimates are updated first, the diffusion
    estimates are combined over the cluster sets of the previous round, and
    the cluster sets are then refreshed from the new stand-alone estimates.
    ``weights`` may pass precomputed static weights for the other strategies.
    Returns ``(new_states, log)``; the input states are not modified.
    """
    kind = variant.kind
    mu = {n.id: n.step_size for n in network.nodes} if step_sizes is None else step_sizes

    # phase 1: local adaptation
    psi, varsigma = {}, {}
    for st in states:
        node = network.nodes[st.node]
        sample = samples[st.node]
        new = adaptation_step(st.phi, sample, mu[st.node], node.tasks)
        psi.update({(st.node, t): v for t, v in new.items()})
        if kind is Variant.UDNSPE:
            new = adaptation_step(st.varsigma, sample, mu[st.node], node.tasks)
            varsigma.update({(st.node, t): v for t, v in new.items()})

    # phase 2: combination over the weights in force for this round
    if kind is Variant.UDNSPE:
        applied = {(st.node, t): uniform_weights(cs.members, (st.node, t))
                   for st in states for t, cs in st.clusters.items()}
    elif weights is not None:
        applied = dict(weights)
    else:
        applied = static_weights(kind, network)

    out, clusters = [], {}
    for st in states:
        node = network.nodes[st.node]
        phi = {t: combination_step(psi, applied[(st.node, t)]) for t in node.tasks}
        new_state = NodeState(st.node, phi, psi={t: psi[(st.node, t)] for t in node.tasks})
        if kind is Variant.UDNSPE:
            new_state.varsigma = {t: varsigma[(st.node, t)] for t in node.tasks}
            new_state.clusters = {}
            for t in node.tasks:
                owner = (st.node, t)
                cs = update_cluster_set(
                    owner, varsigma[owner], varsigma,
                    lambda l, p, t=t, k=st.node: variant.threshold(k, l, t, p), network)
                new_state.clusters[t] = cs
                clusters[owner] = cs
        out.append(new_state)

    per_message = 2 if kind is Variant.UDNSPE else 1
    messages = per_message * sum(
        network.nodes[l].n_tasks for k in range(network.size)
        for l in network.neighbors(k) if l != k)
    return out, RoundLog(applied, clusters, messages)
