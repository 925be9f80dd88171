"""Synthetic streaming data for the linear node-specific observation model.

Random streams are derived from ``(master_seed, run, node, block)`` through
:class:`numpy.random.SeedSequence`; one block covers :data:`BLOCK` consecutive
time instants. Any sample can therefore be regenerated on its own, and the
result never depends on the order in which runs or nodes are simulated.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ConfigError, ModelError
from .network import NodeSpec, TaskSpec

BLOCK = 1024
MAX_CALIBRATION_DRAWS = 10_000

# domain-separation tags for SeedSequence entropy
_DATA, _TRUTH, _CALIBRATION = 0, 1, 2

GroundTruth = Mapping[int, np.ndarray]


@dataclass(frozen=True)
class StreamSeed:
    master_seed: int
    run_index: int
    node: int


@dataclass(frozen=True, eq=False)
class ObservationSample:
    """One realization ``d = U w + v`` at a node.

    ``U`` has ``L_k`` rows and one column block per task of the node, in
    interest order. ``v`` is the noise that was added, kept for checks.
    """

    node: int
    d: np.ndarray
    U: np.ndarray
    v: np.ndarray | None = None


def _generator(*entropy: int) -> np.random.Generator:
    # SFC64 draws normals about a quarter faster than PCG64
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(list(entropy))))


def raw_normals(stream: StreamSeed, block: int, obs_rows: int, width: int,
                out: np.ndarray | None = None) -> np.ndarray:
    """Unit normals of one block, shape ``(BLOCK, obs_rows * (width + 1))``.

    Each row holds the flattened regressor followed by the noise entries.
    A C-contiguous ``out`` of that shape is filled in place and returned.
    """
    rng = _generator(stream.master_seed, stream.run_index, stream.node, block, _DATA)
    if out is None:
        return rng.standard_normal((BLOCK, obs_rows * (width + 1)))
    return rng.standard_normal(out=out)


def raw_block(stream: StreamSeed, block: int, obs_rows: int, width: int):
    """Unit-variance regressors and noise for one block of time instants.

    Returns ``(U, v)`` with shapes ``(BLOCK, obs_rows, width)`` and
    ``(BLOCK, obs_rows)``.
    """
    z = raw_normals(stream, block, obs_rows, width)
    U = z[:, : obs_rows * width].reshape(BLOCK, obs_rows, width)
    v = z[:, obs_rows * width:]
    return U, v


def node_vector(node: NodeSpec, truth: GroundTruth) -> np.ndarray:
    """The stacked parameter vector of a node, tasks in interest order."""
    try:
        return np.concatenate([np.asarray(truth[t], dtype=float) for t in node.tasks])
    except KeyError as exc:
        raise ModelError(f"ground truth has no vector for task {exc.args[0]}") from None


def generate_observation(node: NodeSpec, truth: GroundTruth, stream: StreamSeed,
                         i: int) -> ObservationSample:
    if node.regressor_var is None:
        raise ConfigError(f"node {node.id}: regressor variance not calibrated")
    w = node_vector(node, truth)
    block, offset = divmod(int(i), BLOCK)
    U, v = raw_block(stream, block, node.obs_rows, w.size)
    U = math.sqrt(node.regressor_var) * U[offset]
    v = math.sqrt(node.noise_var) * v[offset]
    return ObservationSample(node.id, U @ w + v, U, v)


def draw_ground_truth(tasks, master_seed: int, run_index: int) -> dict[int, np.ndarray]:
    """Entries uniform on (0, 1), one vector per task."""
    rng = _generator(master_seed, run_index, _TRUTH)
    return {t.id: rng.uniform(0.0, 1.0, size=t.dim) for t in sorted(tasks, key=lambda t: t.id)}


def snr_of(node: NodeSpec, truth: GroundTruth, regressor_var: float | None = None) -> float:
    """Expected signal power over noise power at a node, in dB."""
    if node.noise_var <= 0:
        raise ModelError(f"node {node.id}: SNR undefined for zero noise variance")
    rv = node.regressor_var if regressor_var is None else regressor_var
    signal = rv * float(np.sum(node_vector(node, truth) ** 2))
    if signal == 0:
        return -math.inf
    return 10.0 * math.log10(signal / node.noise_var)


def calibrate_snr(node: NodeSpec, truth: GroundTruth, snr_range, stream: StreamSeed) -> float:
    """Draw a regressor variance uniform on (0, 1) until the SNR is in range.

    Raises :class:`CalibrationError` when no variance in (0, 1) can land in
    ``snr_range``, or after :data:`MAX_CALIBRATION_DRAWS` rejected draws.
    """
    lo, hi = (float(x) for x in snr_range)
    if node.noise_var <= 0:
        raise ModelError(f"node {node.id}: SNR undefined for zero noise variance")
    wnorm2 = float(np.sum(node_vector(node, truth) ** 2))
    top = 10.0 * math.log10(wnorm2 / node.noise_var) if wnorm2 > 0 else -math.inf
    achievable = (-math.inf, top)
    if lo >= top or hi < lo:
        raise CalibrationError(
            f"node {node.id}: SNR range [{lo}, {hi}] dB unreachable with regressor "
            f"variance in (0, 1); achievable range is below {top:.2f} dB",
            achievable)
    rng = _generator(stream.master_seed, stream.run_index, stream.node, _CALIBRATION)
    for _ in range(MAX_CALIBRATION_DRAWS):
        rv = rng.uniform(0.0, 1.0)
        if rv > 0 and lo <= snr_of(node, truth, rv) <= hi:
            return rv
    raise CalibrationError(
        f"node {node.id}: no draw in {MAX_CALIBRATION_DRAWS} attempts reached "
        f"[{lo}, {hi}] dB; achievable range is below {top:.2f} dB", achievable)


def relative_threshold(truth: GroundTruth, factor: float = 0.25) -> float:
    """``factor`` times the smallest squared distance between two task vectors."""
    vecs = [np.asarray(v) for _, v in sorted(truth.items())]
    best = math.inf
    for a in range(len(vecs)):
        for b in range(a + 1, len(vecs)):
            if vecs[a].shape == vecs[b].shape:
                best = min(best, float(np.sum((vecs[a] - vecs[b]) ** 2)))
    if not math.isfinite(best) or best <= 0:
        raise ConfigError("relative threshold needs at least two distinct task vectors")
    return factor * best


def truth_matrix(tasks: list[TaskSpec], truth: GroundTruth) -> np.ndarray:
    return np.stack([np.asarray(truth[t.id], dtype=float) for t in tasks])
