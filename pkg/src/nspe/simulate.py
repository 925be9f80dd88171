"""Fast simulation of many Monte Carlo runs and strategies at once.

Estimates are stacked over (node, task) pairs in :class:`StackedIndex` order
and every strategy is stepped on the same observation arrays, so strategies
within a run always face identical data. The inner loop is compiled with
numba; it walks sparse neighbor lists instead of dense weight matrices.
Observation streams are produced by :func:`nspe.data.raw_normals` exactly as
for :func:`nspe.data.generate_observation`.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import BLOCK, StreamSeed, raw_normals, relative_threshold
from .errors import ConfigError
from .estimators import AlgorithmVariant, Variant, static_weights
from .network import Network

_KIND_CODE = {Variant.NONCOOP: 0, Variant.ORACLE: 1, Variant.BLIND: 1, Variant.UDNSPE: 2}


@dataclass(frozen=True)
class StepSchedule:
    """Constant step sizes, or ``mu * i0 / (i0 + i)`` when ``i0`` is set."""

    i0: float | None = None

    def factor(self, i):
        if self.i0 is None:
            return np.ones_like(np.asarray(i, dtype=float))
        return self.i0 / (self.i0 + np.asarray(i, dtype=float))


@dataclass
class RunSetup:
    """Per-run draws: ground truth and calibrated regressor variances."""

    index: int
    truth: Mapping[int, np.ndarray]
    regressor_var: np.ndarray


@dataclass
class VariantTrace:
    """Result of one strategy over a batch of runs (leading axis = run)."""

    label: str
    kind: Variant
    iterations: np.ndarray            # recorded round counts, 1-based
    sq_dev: np.ndarray                # (R, n_rec, N) squared deviation per pair
    window_error: np.ndarray          # (R, N, M) mean of q - phi over the window
    window_sq_dev: np.ndarray         # (R, N) mean squared deviation over the window
    final_phi: np.ndarray             # (R, N, M)
    diverged: np.ndarray              # (R,) bool
    tau: np.ndarray | None = None     # (R,) global threshold actually used
    link_counts: np.ndarray | None = None         # (R, n_rec, 4) tp, fp, fn, tn, self links excluded
    window_link_counts: np.ndarray | None = None  # (R, 4) summed over the window
    final_mask: np.ndarray | None = None          # (R, N, N) cluster membership
    history: np.ndarray | None = None             # (R, T, N, M) when requested
    extra: dict = field(default_factory=dict)


def weight_matrix(variant: Variant, network: Network) -> np.ndarray:
    """Dense ``(N, N)`` matrix of the static weights of a strategy."""
    idx = network.index
    C = np.zeros((len(idx), len(idx)))
    for pair, cw in static_weights(variant, network).items():
        for member, c in cw.weights.items():
            C[idx[pair], idx[member]] = c
    return C


def candidate_mask(network: Network) -> np.ndarray:
    idx = network.index
    adj = network.topology.adjacency | network.topology.adjacency.T
    np.fill_diagonal(adj, True)
    return adj[np.ix_(idx.owners, idx.owners)]


def oracle_mask(network: Network) -> np.ndarray:
    idx = network.index
    return candidate_mask(network) & (idx.tasks[:, None] == idx.tasks[None, :])


def _csr(mask, values=None):
    rows, cols = np.nonzero(mask)
    indptr = np.zeros(mask.shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    vals = np.ones(len(cols)) if values is None else values[rows, cols]
    return indptr, cols.astype(np.int64), np.ascontiguousarray(vals, dtype=float)


def _tau_entries(variant, tau, network, rows, cols):
    idx = network.index
    out = np.full(len(cols), float(tau))
    if variant.tau_overrides:
        where = {(a, b): e for e, (a, b) in enumerate(zip(rows, cols))}
        for (k, l, t, p), v in variant.tau_overrides.items():
            key = (idx.position.get((k, t)), idx.position.get((l, p)))
            if key in where:
                out[where[key]] = v
    return out


@numba.njit(cache=True)
def _observe(z, nb, d, zoff, width, Lk, su, sv, truth, node_ptr):
    """Observations ``d[o, k, l]`` from the raw unit normals ``z`` of one block.

    Node ``k`` owns the row-major ``(BLOCK, Lk[k] * (width[k] + 1))`` slab of
    the flat ``z`` starting at ``zoff[k]``.
    """
    K = Lk.shape[0]
    M = truth.shape[1]
    for o in range(nb):
        for k in range(K):
            W = width[k]
            row = zoff[k] + o * Lk[k] * (W + 1)
            for l in range(Lk[k]):
                base = row + l * W
                acc = 0.0
                c = 0
                for n in range(node_ptr[k], node_ptr[k + 1]):
                    for m in range(M):
                        acc += (su[k] * z[base + c]) * truth[n, m]
                        c += 1
                d[o, k, l] = acc + sv[k] * z[row + Lk[k] * W + l]


@numba.njit(cache=True)
def _adapt(X, out, z, d, o, step, zoff, width, Lk, su, node_ptr):
    """LMS correction of stacked estimates ``X`` into ``out`` at block offset ``o``."""
    K = Lk.shape[0]
    M = X.shape[1]
    for n in range(X.shape[0]):
        for m in range(M):
            out[n, m] = X[n, m]
    for k in range(K):
        W = width[k]
        s = su[k]
        p0, p1 = node_ptr[k], node_ptr[k + 1]
        row = zoff[k] + o * Lk[k] * (W + 1)
        for l in range(Lk[k]):
            base = row + l * W
            r = d[o, k, l]
            c = base
            for n in range(p0, p1):
                for m in range(M):
                    r -= (s * z[c]) * X[n, m]
                    c += 1
            c = base
            for n in range(p0, p1):
                g = step[n]
                for m in range(M):
                    out[n, m] += g * (s * z[c]) * r
                    c += 1


@numba.njit(cache=True)
def _adapt_pair(X, out, S, z, d, o, step, zoff, width, Lk, su, node_ptr, rbuf):
    """:func:`_adapt` of ``X`` into ``out`` and of ``S`` in place, sharing regressor reads."""
    K = Lk.shape[0]
    M = X.shape[1]
    for k in range(K):
        W = width[k]
        s = su[k]
        p0, p1 = node_ptr[k], node_ptr[k + 1]
        row = zoff[k] + o * Lk[k] * (W + 1)
        for l in range(Lk[k]):
            r = d[o, k, l]
            q = r
            c = row + l * W
            for n in range(p0, p1):
                for m in range(M):
                    u = s * z[c]
                    r -= u * X[n, m]
                    q -= u * S[n, m]
                    c += 1
            rbuf[l, 0] = r
            rbuf[l, 1] = q
        for n in range(p0, p1):
            for m in range(M):
                out[n, m] = X[n, m]
        for l in range(Lk[k]):
            r = rbuf[l, 0]
            q = rbuf[l, 1]
            c = row + l * W
            for n in range(p0, p1):
                g = step[n]
                for m in range(M):
                    u = s * z[c]
                    out[n, m] += g * u * r
                    S[n, m] += g * u * q
                    c += 1


@numba.njit(cache=True)
def _combine(psi, phi, rows, ptr, idx, val, rep):
    """``phi[n] = sum_e val[e] psi[idx[e]]`` over the entries of row ``rep[n]``.

    Only the distinct rows listed in ``rows`` are evaluated; ``rep`` maps
    every pair to the distinct row holding its weights.
    """
    M = psi.shape[1]
    for n in rows:
        for m in range(M):
            acc = 0.0
            for e in range(ptr[n], ptr[n + 1]):
                acc += val[e] * psi[idx[e], m]
            phi[n, m] = acc
    for n in range(phi.shape[0]):
        r = rep[n]
        if r != n:
            for m in range(M):
                phi[n, m] = phi[r, m]


@numba.njit(cache=True)
def _member_lists(keep, c_ptr, c_idx, m_ptr, members):
    """Kept candidate entries as per-row member lists, without branching."""
    pos = 0
    for n in range(c_ptr.shape[0] - 1):
        m_ptr[n] = pos
        for e in range(c_ptr[n], c_ptr[n + 1]):
            members[pos] = c_idx[e]
            pos += keep[e]
    m_ptr[c_ptr.shape[0] - 1] = pos


@numba.njit(cache=True)
def _member_mean(psi, phi, m_ptr, members):
    """``phi[n]`` is the plain average of ``psi`` over the member list of ``n``."""
    N, M = phi.shape
    for n in range(N):
        c = 1.0 / (m_ptr[n + 1] - m_ptr[n])
        if M == 3:
            a0 = a1 = a2 = 0.0
            for e in range(m_ptr[n], m_ptr[n + 1]):
                j = members[e]
                a0 += psi[j, 0]
                a1 += psi[j, 1]
                a2 += psi[j, 2]
            phi[n, 0] = c * a0
            phi[n, 1] = c * a1
            phi[n, 2] = c * a2
            continue
        for m in range(M):
            acc = 0.0
            for e in range(m_ptr[n], m_ptr[n + 1]):
                acc += psi[members[e], m]
            phi[n, m] = c * acc


@numba.njit(cache=True)
def _pair_distances(sig, pair_a, pair_b, dist):
    M = sig.shape[1]
    if M == 3:  # the usual case, unrolled: about twice as fast
        for q in range(pair_a.shape[0]):
            n, j = pair_a[q], pair_b[q]
            d0 = sig[n, 0] - sig[j, 0]
            d1 = sig[n, 1] - sig[j, 1]
            d2 = sig[n, 2] - sig[j, 2]
            dist[q] = d0 * d0 + d1 * d1 + d2 * d2
        return
    for q in range(pair_a.shape[0]):
        n, j = pair_a[q], pair_b[q]
        acc = 0.0
        for m in range(M):
            diff = sig[n, m] - sig[j, m]
            acc += diff * diff
        dist[q] = acc


@numba.njit(cache=True)
def _retest(dist, tau_ab, tau_ba, k_ab, k_ba):
    """Distance test of every unordered pair in both directions; True if a link flipped."""
    changed = False
    for q in range(dist.shape[0]):
        a = dist[q] < tau_ab[q]
        b = dist[q] < tau_ba[q]
        changed |= (a ^ k_ab[q]) | (b ^ k_ba[q])
        k_ab[q] = a
        k_ba[q] = b
    return changed


@numba.njit(cache=True)
def _run_block(kind, phi, sig, keep, z, d, fac, b0, mu, zoff, width, Lk, su, node_ptr,
               w_rows, w_ptr, w_idx, w_val, w_rep, c_ptr, c_idx, c_oracle, c_tau,
               pair_a, pair_b, ent_ab, ent_ba,
               truth, stride, w0, sq_dev, links, win_err, win_sq, win_links,
               hist, record_hist):
    N, M = phi.shape
    psi = np.empty_like(phi)
    rbuf = np.empty((Lk.max(), 2))
    step = np.empty(N)
    nb = fac.shape[0]
    m_ptr = np.zeros(N + 1, dtype=np.int64)
    members = np.empty(c_idx.shape[0], dtype=np.int64)
    P = pair_a.shape[0]
    dist = np.empty(P)
    tau_ab = np.empty(P)
    tau_ba = np.empty(P)
    k_ab = np.empty(P, dtype=np.bool_)
    k_ba = np.empty(P, dtype=np.bool_)
    if kind == 2:
        for q in range(P):
            tau_ab[q] = c_tau[ent_ab[q]]
            tau_ba[q] = c_tau[ent_ba[q]]
            k_ab[q] = keep[ent_ab[q]]
            k_ba[q] = keep[ent_ba[q]]
        _member_lists(keep, c_ptr, c_idx, m_ptr, members)
    for o in range(nb):
        i = b0 + o
        for n in range(N):
            step[n] = mu[n] * fac[o]
        if kind == 2:
            _adapt_pair(phi, psi, sig, z, d, o, step, zoff, width, Lk, su, node_ptr, rbuf)
        else:
            _adapt(phi, psi, z, d, o, step, zoff, width, Lk, su, node_ptr)
        if kind == 0:
            for n in range(N):
                for m in range(M):
                    phi[n, m] = psi[n, m]
        elif kind == 1:
            _combine(psi, phi, w_rows, w_ptr, w_idx, w_val, w_rep)
        else:
            # combine over the cluster sets of the previous round
            _member_mean(psi, phi, m_ptr, members)
            # refresh the cluster sets; each unordered pair is measured once
            _pair_distances(sig, pair_a, pair_b, dist)
            if _retest(dist, tau_ab, tau_ba, k_ab, k_ba):
                for q in range(P):
                    keep[ent_ab[q]] = k_ab[q]
                    keep[ent_ba[q]] = k_ba[q]
                _member_lists(keep, c_ptr, c_idx, m_ptr, members)

        recording = (i + 1) % stride == 0
        in_window = i >= w0
        if recording or in_window:
            rec = (i + 1) // stride - 1
            for n in range(N):
                s = 0.0
                for m in range(M):
                    err = truth[n, m] - phi[n, m]
                    s += err * err
                    if in_window:
                        win_err[n, m] += err
                if recording:
                    sq_dev[rec, n] = s
                if in_window:
                    win_sq[n] += s
            if kind == 2:
                tp = fp = fn = tn = 0
                for e in range(c_idx.shape[0]):
                    if keep[e]:
                        if c_oracle[e]:
                            tp += 1
                        else:
                            fp += 1
                    elif c_oracle[e]:
                        fn += 1
                    else:
                        tn += 1
                if recording:
                    links[rec, 0] = tp
                    links[rec, 1] = fp
                    links[rec, 2] = fn
                    links[rec, 3] = tn
                if in_window:
                    win_links[0] += tp
                    win_links[1] += fp
                    win_links[2] += fn
                    win_links[3] += tn
        if record_hist:
            for n in range(N):
                for m in range(M):
                    hist[i, n, m] = phi[n, m]


def _fill_normals(z, network, run, master_seed, block, zoff, slab):
    """Write the unit normals of every node for one RNG block into the flat ``z``."""
    for k, node in enumerate(network.nodes):
        raw_normals(StreamSeed(master_seed, run.index, node.id), block, node.obs_rows,
                    network.node_dim(node.id),
                    out=z[zoff[k]:zoff[k] + slab[k]].reshape(BLOCK, -1))


def _static_csr(C):
    """CSR of the distinct rows of ``C`` plus the row representative of every pair."""
    N = C.shape[0]
    rep = np.arange(N)
    seen = {}
    for n in range(N):
        key = C[n].tobytes()
        rep[n] = seen.setdefault(key, n)
    ptr, idx, val = _csr(C != 0, C)
    rows = np.unique(rep)
    return rows.astype(np.int64), ptr, idx, val, rep.astype(np.int64)


def simulate(network: Network, runs: Sequence[RunSetup], variants: Sequence[AlgorithmVariant],
             iterations: int, master_seed: int, schedule: StepSchedule | None = None,
             trace_stride: int = 1, window: int | None = None,
             record_history: bool = False, digest: bool = False,
             initial: np.ndarray | None = None) -> dict[str, VariantTrace]:
    """Simulate ``variants`` over ``runs`` for ``iterations`` rounds.

    Parameters
    ----------
    network : Network
        Topology and interests; all tasks must share one dimension.
    runs : sequence of RunSetup
        Ground truth and regressor variances of each run. Observation
        streams are seeded by ``(master_seed, run.index, node)``.
    variants : sequence of AlgorithmVariant
        Strategies to step on the shared data. Results are keyed by
        :attr:`AlgorithmVariant.name`.
    iterations : int
        Number of rounds.
    trace_stride : int
        Record per-pair squared deviation every ``trace_stride`` rounds.
    window : int, optional
        Length of the trailing window for steady-state averages; defaults
        to the last 10% of the rounds.
    record_history : bool
        Keep every ``phi`` (memory ``R * T * N * M``); for small checks only.
    digest : bool
        Store a SHA-256 digest of the observations of each run in
        ``extra["stream_digest"]``.
    initial : ndarray, optional
        ``(N, M)`` starting estimates; zeros by default.
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if trace_stride < 1:
        raise ConfigError("trace_stride must be >= 1")
    if not variants:
        raise ConfigError("no variants to simulate")
    labels = [v.name for v in variants]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"variant labels must be unique, got {labels}")
    M = network.common_dim
    idx = network.index
    N, R = len(idx), len(runs)
    schedule = schedule or StepSchedule()
    window = max(1, math.ceil(0.1 * iterations)) if window is None else max(1, min(window, iterations))
    w0 = iterations - window

    nodes = network.nodes
    Lk = np.array([n.obs_rows for n in nodes], dtype=np.int64)
    width = np.array([network.node_dim(n.id) for n in nodes], dtype=np.int64)
    # start of each node's slab of raw normals inside the flat block buffer
    slab = BLOCK * Lk * (width + 1)
    zoff = np.concatenate([[0], np.cumsum(slab)[:-1]]).astype(np.int64)
    node_ptr = np.array([idx[(n.id, n.tasks[0])] for n in nodes] + [N], dtype=np.int64)
    mu = np.array([nodes[k].step_size for k in idx.owners], dtype=float)
    sv = np.sqrt([n.noise_var for n in nodes])

    truth = np.stack([np.stack([np.asarray(r.truth[t], dtype=float) for t in idx.tasks])
                      for r in runs])
    rvar = np.stack([np.asarray(r.regressor_var, dtype=float) for r in runs])
    if rvar.shape != (R, network.size) or np.any(~np.isfinite(rvar)) or np.any(rvar < 0):
        raise ConfigError("regressor variances must be finite, nonnegative, one per node")

    cand = candidate_mask(network)
    c_ptr, c_idx, _ = _csr(cand)
    c_rows = np.repeat(np.arange(N), np.diff(c_ptr))
    c_oracle = oracle_mask(network)[c_rows, c_idx]
    self_entry = c_rows == c_idx
    entry = {(a, b): e for e, (a, b) in enumerate(zip(c_rows, c_idx))}
    upper = np.flatnonzero(c_rows < c_idx)
    mirror = np.array([entry[(c_idx[e], c_rows[e])] for e in upper], dtype=np.int64)
    pairs = (c_rows[upper].astype(np.int64), c_idx[upper].astype(np.int64),
             upper.astype(np.int64), mirror)

    x0 = np.zeros((N, M)) if initial is None else np.asarray(initial, dtype=float)
    rec_iters = np.arange(trace_stride, iterations + 1, trace_stride)
    n_rec = len(rec_iters)

    specs = []
    for v in variants:
        spec = {"variant": v, "code": _KIND_CODE[v.kind]}
        if v.kind in (Variant.ORACLE, Variant.BLIND):
            C = weight_matrix(v.kind, network)
            spec["w"] = _static_csr(C)
        else:
            spec["w"] = (np.zeros(0, dtype=np.int64), np.zeros(N + 1, dtype=np.int64),
                         np.zeros(0, dtype=np.int64), np.zeros(0), np.arange(N))
        if v.kind is Variant.UDNSPE:
            spec["tau"] = np.array([v.tau if v.tau is not None
                                    else relative_threshold(r.truth, v.tau_relative) for r in runs])
        specs.append(spec)

    out = {}
    for spec in specs:
        v = spec["variant"]
        ud = v.kind is Variant.UDNSPE
        out[v.name] = VariantTrace(
            label=v.name, kind=v.kind, iterations=rec_iters,
            sq_dev=np.zeros((R, n_rec, N)), window_error=np.zeros((R, N, M)),
            window_sq_dev=np.zeros((R, N)), final_phi=np.zeros((R, N, M)),
            diverged=np.zeros(R, dtype=bool), tau=spec.get("tau"),
            link_counts=np.zeros((R, n_rec, 4), dtype=np.int64) if ud else None,
            window_link_counts=np.zeros((R, 4), dtype=np.int64) if ud else None,
            final_mask=np.zeros((R, N, N), dtype=bool) if ud else None,
            history=np.zeros((R, iterations, N, M)) if record_history else None,
        )
        if ud:
            out[v.name].extra["final_varsigma"] = np.zeros((R, N, M))
    digests = []
    no_hist = np.zeros((0, N, M))
    no_links = np.zeros((0, 4), dtype=np.int64)
    no_keep = np.zeros(0, dtype=np.bool_)

    z = np.empty(int(slab.sum()))
    d = np.zeros((BLOCK, network.size, Lk.max()))
    with np.errstate(over="ignore", invalid="ignore"):
        for r, run in enumerate(runs):
            su = np.sqrt(rvar[r])
            state = []
            for spec in specs:
                phi = x0.copy()
                ud = spec["code"] == 2
                sig = x0.copy() if ud else np.zeros((0, M))
                keep = self_entry.copy() if ud else no_keep
                tau = (_tau_entries(spec["variant"], spec["tau"][r], network, c_rows, c_idx)
                       if ud else np.zeros(0))
                state.append((phi, sig, keep, tau))
            h = hashlib.sha256() if digest else None
            for b0 in range(0, iterations, BLOCK):
                nb = min(BLOCK, iterations - b0)
                _fill_normals(z, network, run, master_seed, b0 // BLOCK, zoff, slab)
                _observe(z, nb, d, zoff, width, Lk, su, sv, truth[r], node_ptr)
                if h is not None:
                    for k in range(network.size):
                        h.update(z[zoff[k]:zoff[k] + slab[k]].reshape(BLOCK, -1)[:nb].tobytes())
                    h.update(d[:nb].tobytes())
                fac = schedule.factor(np.arange(b0, b0 + nb))
                for spec, (phi, sig, keep, tau) in zip(specs, state):
                    res = out[spec["variant"].name]
                    ud = spec["code"] == 2
                    _run_block(spec["code"], phi, sig, keep, z, d, fac, b0, mu,
                               zoff, width, Lk, su, node_ptr,
                               *spec["w"], c_ptr, c_idx, c_oracle, tau, *pairs,
                               truth[r], trace_stride, w0, res.sq_dev[r],
                               res.link_counts[r] if ud else no_links,
                               res.window_error[r], res.window_sq_dev[r],
                               res.window_link_counts[r] if ud else no_links[0:0].reshape(0),
                               res.history[r] if record_history else no_hist,
                               record_history)
            for spec, (phi, sig, keep, tau) in zip(specs, state):
                res = out[spec["variant"].name]
                res.final_phi[r] = phi
                finite = np.isfinite(phi).all() and np.isfinite(res.window_sq_dev[r]).all()
                if spec["code"] == 2:
                    res.final_mask[r, c_rows, c_idx] = keep
                    res.extra["final_varsigma"][r] = sig
                    finite = finite and np.isfinite(sig).all()
                res.diverged[r] = not finite
            if h is not None:
                digests.append(h.hexdigest())

    for res in out.values():
        if res.link_counts is not None:
            # the trivial self entries are always kept; count only real links
            res.link_counts[..., 0] -= N
            res.window_link_counts[:, 0] -= N * window
        res.window_error /= window
        res.window_sq_dev /= window
        res.extra["window"] = window
        if digest:
            res.extra["stream_digest"] = digests
    return out
