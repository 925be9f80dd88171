"""Steady-state bias prediction, step-size bound and learning metrics."""

from __future__ import annotations

import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .data import ObservationSample, node_vector
from .errors import ConfigError, MetricError, ModelError, PolicyError
from .network import (WEIGHT_SUM_TOL, ClusterSet, CombinationWeights, Network, NodeSpec,
                      Pair, StackedIndex)

DB_FLOOR = 1e-12

__all__ = [
    "DB_FLOOR", "StackedIndex", "BiasPrediction", "MsdTrace", "LinkRates",
    "build_weight_matrix", "theoretical_bias", "step_size_bound", "to_db",
    "msd", "msd_from_sq_dev", "pair_groups", "link_counts", "link_rates",
    "cluster_accuracy", "empirical_cost", "stacked_truth",
]


def to_db(x):
    """``10 log10(x)`` with values below :data:`DB_FLOOR` clamped to -120 dB."""
    return 10.0 * np.log10(np.maximum(np.asarray(x, dtype=float), DB_FLOOR))


def stacked_truth(truth, index: StackedIndex) -> np.ndarray:
    """``(N, M)`` array holding the true vector of the task of every pair."""
    if isinstance(truth, np.ndarray):
        if truth.shape[0] != len(index):
            raise ModelError(f"stacked truth has {truth.shape[0]} rows, index has {len(index)}")
        return np.asarray(truth, dtype=float)
    try:
        return np.stack([np.asarray(truth[t], dtype=float) for t in index.tasks])
    except KeyError as exc:
        raise ModelError(f"ground truth has no vector for task {exc.args[0]}") from None


# --------------------------------------------------------------- weight matrix

def build_weight_matrix(weights: Mapping[Pair, CombinationWeights], index: StackedIndex) -> np.ndarray:
    """Row-stochastic ``(N, N)`` matrix: row ``(k, t)`` holds ``c`` at column ``(l, p)``."""
    N = len(index)
    C = np.zeros((N, N))
    for pair in index.pairs:
        if pair not in weights:
            raise IndexError(f"no combination weights for pair {pair}")
        for member, c in weights[pair].weights.items():
            try:
                C[index[pair], index[member]] = c
            except KeyError:
                raise IndexError(f"weights of {pair} reference unknown pair {member}") from None
    sums = C.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > WEIGHT_SUM_TOL)
    if bad.size:
        raise PolicyError(f"row {index.pairs[bad[0]]} sums to {sums[bad[0]]!r}, not 1")
    return C


# -------------------------------------------------------------- bias analysis

@dataclass(frozen=True)
class BiasPrediction:
    """Predicted limiting mean error ``q - phi`` per pair.

    ``bias`` is ``None`` when the mean recursion does not converge.
    """

    index: StackedIndex
    spectral_radius: float
    converged: bool
    bias: np.ndarray | None  # (N, M)

    def per_pair(self) -> dict[Pair, np.ndarray]:
        if self.bias is None:
            return {}
        return {p: self.bias[n] for n, p in enumerate(self.index.pairs)}

    def to_dict(self) -> dict:
        return {
            "spectral_radius": self.spectral_radius,
            "converged": self.converged,
            "bias": None if self.bias is None else [
                {"node": k + 1, "task": t + 1, "vector": self.bias[n].tolist()}
                for n, (k, t) in enumerate(self.index.pairs)],
        }


def _gain(nodes: Sequence[NodeSpec], index: StackedIndex, regressor_var=None) -> np.ndarray:
    """Per-pair ``mu_k * lambda(R_U)`` where ``R_U = L_k sigma_u^2 I``."""
    gains = []
    for k in index.owners:
        node = nodes[k]
        rv = node.regressor_var if regressor_var is None else regressor_var[k]
        if rv is None:
            raise ConfigError(f"node {node.id}: regressor variance not calibrated")
        gains.append(node.step_size * node.obs_rows * rv)
    return np.array(gains)


def theoretical_bias(C: np.ndarray, nodes: Sequence[NodeSpec], truth, index: StackedIndex,
                     regressor_var=None) -> BiasPrediction:
    """Fixed point of the mean-error recursion ``e <- C_M (I - M D) e + (I - C_M) q``.

    ``C_M`` is ``C`` expanded by the task dimension. Regressor blocks are
    isotropic, so ``I - M D`` acts as a per-pair scalar and the Kronecker
    product never has to be formed. ``regressor_var`` optionally overrides
    the variances stored in ``nodes`` (one entry per node).
    """
    C = np.asarray(C, dtype=float)
    N = len(index)
    if C.shape != (N, N):
        raise ModelError(f"weight matrix has shape {C.shape}, expected {(N, N)}")
    q = stacked_truth(truth, index)
    A = C * (1.0 - _gain(nodes, index, regressor_var))[None, :]
    radius = float(np.max(np.abs(np.linalg.eigvals(A)))) if N else 0.0
    if not radius < 1.0:
        return BiasPrediction(index, radius, False, None)
    rhs = q - C @ q
    try:
        bias = np.linalg.solve(np.eye(N) - A, rhs)
    except np.linalg.LinAlgError:
        return BiasPrediction(index, radius, False, None)
    return BiasPrediction(index, radius, True, bias)


def step_size_bound(node: NodeSpec, regressor_var: float | None = None) -> float:
    """Largest step size keeping the node's LMS mean recursion stable: ``2 / (L sigma_u^2)``."""
    rv = node.regressor_var if regressor_var is None else regressor_var
    if rv is None:
        raise ConfigError(f"node {node.id}: regressor variance not calibrated")
    lam = node.obs_rows * rv
    if lam == 0:
        warnings.warn(f"node {node.id}: zero regressor variance, step size unbounded",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    return 2.0 / lam


# ---------------------------------------------------------------------- MSD

@dataclass(frozen=True)
class MsdTrace:
    """Mean squared deviation per group over the recorded iterations."""

    iterations: np.ndarray
    linear: dict[str, np.ndarray]

    @property
    def db(self) -> dict[str, np.ndarray]:
        return {g: to_db(v) for g, v in self.linear.items()}

    def steady_state(self, fraction: float = 0.1) -> dict[str, float]:
        """Mean linear MSD over the trailing ``fraction`` of the recorded points."""
        n = max(1, math.ceil(fraction * len(self.iterations)))
        return {g: float(np.mean(v[-n:])) for g, v in self.linear.items()}


def pair_groups(network: Network, grouping: str = "network") -> dict[str, np.ndarray]:
    """Pair positions of each group.

    ``grouping`` is ``"network"`` (all pairs), ``"category"`` (global, common
    and local tasks; absent categories are skipped), ``"task"`` (one group per
    task id, 1-based names) or ``"all"`` for the union of the three.
    """
    idx = network.index
    if grouping == "network":
        return {"network": np.arange(len(idx))}
    if grouping == "category":
        kinds = np.array([network.task_kind(int(t)) for t in idx.tasks])
        return {c: np.flatnonzero(kinds == c) for c in ("global", "common", "local")
                if np.any(kinds == c)}
    if grouping == "task":
        return {f"task{t + 1}": np.flatnonzero(idx.tasks == t) for t in sorted(set(idx.tasks))}
    if grouping == "all":
        out = {}
        for g in ("network", "category", "task"):
            out.update(pair_groups(network, g))
        return out
    raise ConfigError(f"unknown grouping {grouping!r}")


def msd_from_sq_dev(sq_dev: np.ndarray, groups: Mapping[str, Sequence[int]],
                    iterations=None) -> MsdTrace:
    """Group averages of per-pair squared deviations.

    ``sq_dev`` is ``(T, N)`` or ``(R, T, N)``; with a run axis the per-run
    group MSD is averaged over runs.
    """
    sq = np.asarray(sq_dev, dtype=float)
    if sq.ndim == 2:
        sq = sq[None]
    if sq.ndim != 3:
        raise ModelError(f"squared deviations must be (T, N) or (R, T, N), got {sq_dev.shape}")
    lin = {}
    for name, members in groups.items():
        members = np.asarray(members, dtype=int)
        if members.size == 0:
            raise MetricError(f"group {name!r} has no pairs")
        lin[name] = sq[:, :, members].mean(axis=2).mean(axis=0)
    its = np.arange(1, sq.shape[1] + 1) if iterations is None else np.asarray(iterations)
    return MsdTrace(its, lin)


def msd(history, truth, network: Network, grouping="network", iterations=None) -> MsdTrace:
    """MSD of recorded estimates.

    ``history`` holds stacked estimates with shape ``(T, N, M)`` or
    ``(R, T, N, M)``; ``truth`` is a task mapping or an ``(N, M)`` array (or
    ``(R, N, M)`` with a run axis). ``grouping`` is a name accepted by
    :func:`pair_groups` or an explicit mapping of group name to positions.
    """
    h = np.asarray(history, dtype=float)
    q = truth if isinstance(truth, np.ndarray) else stacked_truth(truth, network.index)
    if h.ndim == 3:
        sq = np.sum((q[None] - h) ** 2, axis=-1)
    elif h.ndim == 4:
        q = q if q.ndim == 3 else q[None]
        sq = np.sum((q[:, None] - h) ** 2, axis=-1)
    else:
        raise ModelError(f"history must be (T, N, M) or (R, T, N, M), got {h.shape}")
    groups = pair_groups(network, grouping) if isinstance(grouping, str) else grouping
    return msd_from_sq_dev(sq, groups, iterations)


# -------------------------------------------------------------- clustering

@dataclass(frozen=True)
class LinkRates:
    """Link classification against the oracle sets."""

    precision: np.ndarray
    recall: np.ndarray
    false_alarm: np.ndarray    # same-task links dropped, over same-task links
    misdetection: np.ndarray   # different-task links kept, over different-task links
    error_rate: np.ndarray     # wrong decisions over all decisions


def _ratio(num, den):
    num, den = np.asarray(num, dtype=float), np.asarray(den, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def link_rates(counts) -> LinkRates:
    """Rates from ``[..., 4]`` counts ordered ``tp, fp, fn, tn``.

    Undefined ratios (empty denominators) are NaN.
    """
    c = np.asarray(counts, dtype=float)
    tp, fp, fn, tn = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    return LinkRates(_ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(fn, tp + fn),
                     _ratio(fp, fp + tn), _ratio(fp + fn, tp + fp + fn + tn))


def _members(x) -> frozenset:
    return x.members if isinstance(x, ClusterSet) else frozenset(x)


def link_counts(clusters: Mapping[Pair, ClusterSet], oracle: Mapping[Pair, ClusterSet],
                candidates: Mapping[Pair, Sequence[Pair]] | None = None,
                include_self: bool = True) -> np.ndarray:
    """``[tp, fp, fn, tn]`` of kept links against the oracle sets, over all owners.

    ``tn`` needs the candidate pairs of every owner; it is 0 without them.
    With ``include_self=False`` the trivial link of each owner to itself,
    which is always kept, is left out of the counts.
    """
    tp = fp = fn = tn = 0
    for owner, orc in oracle.items():
        drop = set() if include_self else {owner}
        got = _members(clusters[owner]) - drop
        want = _members(orc) - drop
        tp += len(got & want)
        fp += len(got - want)
        fn += len(want - got)
        if candidates is not None:
            tn += len(set(candidates[owner]) - drop - got - want)
    return np.array([tp, fp, fn, tn])


def cluster_accuracy(history: Sequence[Mapping[Pair, ClusterSet]],
                     oracle: Mapping[Pair, ClusterSet],
                     candidates: Mapping[Pair, Sequence[Pair]] | None = None,
                     include_self: bool = True) -> LinkRates:
    """Per-iteration link rates of a sequence of cluster-set snapshots."""
    counts = np.array([link_counts(h, oracle, candidates, include_self)
                       for h in history]).reshape(-1, 4)
    return link_rates(counts)


# -------------------------------------------------------------------- cost

def empirical_cost(estimates: Mapping[Pair, np.ndarray],
                   samples: Sequence[Mapping[int, ObservationSample]],
                   network: Network) -> float:
    """Window average of ``sum_k ||d_k - sum_t U_{k,t} x_{k,t}||^2``."""
    if not samples:
        raise MetricError("empirical cost needs a non-empty sample window")
    total = 0.0
    for round_samples in samples:
        for node in network.nodes:
            s = round_samples[node.id]
            x = node_vector(node, {t: estimates[(node.id, t)] for t in node.tasks})
            r = np.atleast_1d(s.d) - np.atleast_2d(s.U) @ x
            total += float(r @ r)
    return total / len(samples)
