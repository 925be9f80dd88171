"""Experiment configuration, Monte Carlo orchestration and result files.

A config is a JSON object::

    {
      "network": {...} | "path/to/network.json" | "preset:paper",
      "iterations": 3000, "runs": 100, "seed": 2016,
      "variants": ["noncoop", "oracle", "blind", {"kind": "udnspe", "label": "ud"}],
      "tau": {"relative": 0.25} | 0.01,
      "snr_db": [10, 20],
      "schedule": "constant" | {"kind": "decaying", "i0": 1000},
      "freeze_truth": false, "trace_stride": 1, "window_fraction": 0.1,
      "output_dir": "out"
    }

Only ``network`` is mandatory; ``tau`` is required as soon as a UD-NSPE
variant is requested. Ids in files are 1-based.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
import time
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import MsdTrace, link_rates, pair_groups, theoretical_bias, to_db
from .data import StreamSeed, calibrate_snr, draw_ground_truth
from .errors import CalibrationError, ConfigError, NSPEError
from .estimators import AlgorithmVariant, Variant
from .network import Network, network_from_dict, network_to_dict
from .simulate import RunSetup, StepSchedule, VariantTrace, candidate_mask, simulate, weight_matrix

DEFAULTS = {
    "iterations": 3000,
    "runs": 100,
    "seed": 0,
    "variants": ["noncoop", "oracle", "blind", "udnspe"],
    "snr_db": [10.0, 20.0],
    "schedule": "constant",
    "freeze_truth": False,
    "trace_stride": 1,
    "window_fraction": 0.1,
    "output_dir": "out",
    "digest": False,
}

# steady state: fitted MSD slope over the trailing window below this, in dB per 100 rounds
STEADY_SLOPE_DB = 0.01
# per-variant budget for retained squared deviations before runs are chunked
_CHUNK_BYTES = 64 * 2**20


class OutputError(NSPEError, OSError):
    """The output directory cannot be written."""


@dataclass(frozen=True)
class ExperimentConfig:
    network: Network
    iterations: int = 3000
    runs: int = 100
    seed: int = 0
    variants: tuple[AlgorithmVariant, ...] = ()
    snr_db: tuple[float, float] = (10.0, 20.0)
    schedule: StepSchedule = field(default_factory=StepSchedule)
    freeze_truth: bool = False
    trace_stride: int = 1
    window_fraction: float = 0.1
    output_dir: Path = Path("out")
    digest: bool = False
    tau: float | dict | None = None

    def __post_init__(self):
        _check(isinstance(self.iterations, int) and self.iterations >= 1,
               "iterations", f"must be an integer >= 1, got {self.iterations!r}")
        _check(isinstance(self.runs, int) and self.runs >= 1,
               "runs", f"must be an integer >= 1, got {self.runs!r}")
        _check(isinstance(self.trace_stride, int) and 1 <= self.trace_stride <= self.iterations,
               "trace_stride", f"must be an integer in [1, iterations], got {self.trace_stride!r}")
        _check(0 < self.window_fraction <= 1, "window_fraction",
               f"must be in (0, 1], got {self.window_fraction!r}")
        _check(len(self.variants) > 0, "variants", "must not be empty")
        lo, hi = self.snr_db
        _check(lo <= hi, "snr_db", f"lower bound {lo} exceeds upper bound {hi}")
        _check(self.network.equal_dims, "network.tasks", "all tasks must have the same dimension")
        labels = [v.name for v in self.variants]
        _check(len(set(labels)) == len(labels), "variants", f"labels must be unique, got {labels}")

    @property
    def window(self) -> int:
        return max(1, math.ceil(self.window_fraction * self.iterations))

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        sched = ("constant" if self.schedule.i0 is None
                 else {"kind": "decaying", "i0": self.schedule.i0})
        return {
            "network": network_to_dict(self.network),
            "iterations": self.iterations,
            "runs": self.runs,
            "seed": self.seed,
            "variants": [_variant_to_dict(v) for v in self.variants],
            "tau": self.tau,
            "snr_db": list(self.snr_db),
            "schedule": sched,
            "freeze_truth": self.freeze_truth,
            "trace_stride": self.trace_stride,
            "window_fraction": self.window_fraction,
            "output_dir": str(self.output_dir),
            "digest": self.digest,
        }


def _check(ok, name, message):
    if not ok:
        raise ConfigError(f"{name}: {message}")


def _variant_to_dict(v: AlgorithmVariant) -> dict:
    out = {"kind": v.kind.value}
    if v.label:
        out["label"] = v.label
    if v.tau is not None:
        out["tau"] = v.tau
    if v.tau_relative is not None:
        out["tau_relative"] = v.tau_relative
    if v.tau_overrides:
        out["tau_overrides"] = [[k + 1, l + 1, t + 1, p + 1, x]
                                for (k, l, t, p), x in sorted(v.tau_overrides.items())]
    return out


# ------------------------------------------------------------------ loading

def preset_path(name: str) -> Path:
    path = resources.files("nspe") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return Path(str(path))


def _read_json(path: Path, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{what}: file {str(path)!r} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: cannot parse {str(path)!r}: {exc}") from None


def _parse_tau(raw, where):
    if isinstance(raw, Mapping):
        _check(set(raw) == {"relative"}, where, "expected a number or {\"relative\": factor}")
        f = raw["relative"]
        _check(isinstance(f, (int, float)) and f > 0, where, "relative factor must be > 0")
        return {"tau_relative": float(f)}
    _check(isinstance(raw, (int, float)) and not isinstance(raw, bool) and raw > 0,
           where, f"must be a positive number, got {raw!r}")
    return {"tau": float(raw)}


def _parse_variant(raw, pos, tau):
    where = f"variants[{pos}]"
    if isinstance(raw, str):
        raw = {"kind": raw}
    _check(isinstance(raw, Mapping) and "kind" in raw, where, "expected a name or an object with 'kind'")
    try:
        kind = Variant(raw["kind"])
    except ValueError:
        raise ConfigError(f"{where}.kind: unknown strategy {raw['kind']!r}; "
                          f"expected one of {[v.value for v in Variant]}") from None
    extra = set(raw) - {"kind", "label", "tau", "tau_relative", "tau_overrides"}
    _check(not extra, where, f"unknown fields {sorted(extra)}")
    kw = {"kind": kind, "label": raw.get("label")}
    if kind is Variant.UDNSPE:
        if "tau" in raw:
            kw.update(_parse_tau(raw["tau"], f"{where}.tau"))
        elif "tau_relative" in raw:
            kw.update(_parse_tau({"relative": raw["tau_relative"]}, f"{where}.tau_relative"))
        elif tau is not None:
            kw.update(_parse_tau(tau, "tau"))
        else:
            raise ConfigError("tau: required when a udnspe variant is requested")
        overrides = {}
        for j, row in enumerate(raw.get("tau_overrides", [])):
            _check(isinstance(row, list) and len(row) == 5, f"{where}.tau_overrides[{j}]",
                   "expected [k, l, t, p, tau]")
            k, l, t, p, x = row
            overrides[(int(k) - 1, int(l) - 1, int(t) - 1, int(p) - 1)] = float(x)
        kw["tau_overrides"] = overrides
    try:
        return AlgorithmVariant(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: Mapping, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    _check(isinstance(raw, Mapping), "config", "top level must be a JSON object")
    known = set(DEFAULTS) | {"network", "tau"}
    unknown = set(raw) - known
    _check(not unknown, "config", f"unknown fields {sorted(unknown)}")
    _check("network" in raw, "network", "missing")
    base_dir = Path(".") if base_dir is None else Path(base_dir)
    cfg = {**DEFAULTS, **raw}

    net_raw = cfg["network"]
    if isinstance(net_raw, str):
        if net_raw.startswith("preset:"):
            path = preset_path(net_raw.split(":", 1)[1])
            net_raw = _read_json(path, "network")
            net_raw = net_raw.get("network", net_raw)
        else:
            net_raw = _read_json(base_dir / net_raw, "network")
    _check(isinstance(net_raw, Mapping), "network", "expected an object, a path or 'preset:<name>'")
    try:
        network = network_from_dict(net_raw)
    except ConfigError as exc:
        raise ConfigError(f"network: {exc}") from None
    report = network.validate()
    if not report.ok:
        raise ConfigError(f"network.edges: {report.describe()}")

    for name in ("iterations", "runs", "trace_stride", "seed"):
        v = cfg[name]
        _check(isinstance(v, int) and not isinstance(v, bool), name, f"must be an integer, got {v!r}")
    _check(isinstance(cfg["variants"], list), "variants", "must be a list")
    variants = tuple(_parse_variant(v, i, cfg.get("tau")) for i, v in enumerate(cfg["variants"]))
    if cfg.get("tau") is not None:
        _parse_tau(cfg["tau"], "tau")

    snr = cfg["snr_db"]
    _check(isinstance(snr, list) and len(snr) == 2
           and all(isinstance(x, (int, float)) for x in snr), "snr_db", "expected [low, high] in dB")
    sched = cfg["schedule"]
    if sched == "constant":
        schedule = StepSchedule()
    elif isinstance(sched, Mapping) and sched.get("kind") == "decaying":
        i0 = sched.get("i0")
        _check(isinstance(i0, (int, float)) and i0 > 0, "schedule.i0", "must be a positive number")
        schedule = StepSchedule(float(i0))
    else:
        raise ConfigError(f"schedule: expected 'constant' or {{\"kind\": \"decaying\", \"i0\": ...}}, "
                          f"got {sched!r}")
    out = Path(cfg["output_dir"])
    config = ExperimentConfig(
        network=network, iterations=cfg["iterations"], runs=cfg["runs"], seed=cfg["seed"],
        variants=variants, snr_db=(float(snr[0]), float(snr[1])), schedule=schedule,
        freeze_truth=bool(cfg["freeze_truth"]), trace_stride=cfg["trace_stride"],
        window_fraction=float(cfg["window_fraction"]),
        output_dir=out if out.is_absolute() else base_dir / out,
        digest=bool(cfg["digest"]), tau=cfg.get("tau"))
    check_snr_feasible(config)
    return config


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment config.

    ``path`` may also be ``"preset:<name>"`` for a config shipped with the
    package. Every error names the offending field.
    """
    if isinstance(path, str) and path.startswith("preset:"):
        path = preset_path(path.split(":", 1)[1])
    path = Path(path)
    return config_from_dict(_read_json(path, "config"), path.parent)


# ------------------------------------------------------------------ running

def run_setup(config: ExperimentConfig, r: int) -> RunSetup:
    """Ground truth and regressor variances of run ``r``.

    Nodes with a fixed variance keep it; ``auto-snr`` nodes are calibrated
    to the SNR range. With ``freeze_truth`` every run reuses the draws of
    run 0 (observation streams still differ).
    """
    draw = 0 if config.freeze_truth else r
    net = config.network
    truth = draw_ground_truth(net.tasks, config.seed, draw)
    rv = []
    for node in net.nodes:
        if node.regressor_var is not None:
            rv.append(node.regressor_var)
            continue
        try:
            rv.append(calibrate_snr(node, truth, config.snr_db,
                                    StreamSeed(config.seed, draw, node.id)))
        except CalibrationError as exc:
            raise CalibrationError(f"snr_db: run {r + 1}: {exc}", exc.achievable) from None
    return RunSetup(r, truth, np.array(rv))


def check_snr_feasible(config: ExperimentConfig) -> None:
    """Fail early when no regressor variance in (0, 1) can reach the SNR range.

    Entries of the ground truth are below 1, so ``||w_k||^2 < dim`` bounds
    the reachable SNR of every node from above.
    """
    lo = config.snr_db[0]
    for node in config.network.nodes:
        if node.regressor_var is not None:
            continue
        top = 10 * math.log10(config.network.node_dim(node.id) / node.noise_var)
        if lo >= top:
            raise ConfigError(
                f"snr_db: lower bound {lo} dB is unreachable at node {node.id + 1}; "
                f"achievable SNR stays below {top:.2f} dB")


@dataclass
class VariantResult:
    """Aggregated outcome of one strategy (diverged runs excluded from averages)."""

    label: str
    kind: Variant
    msd: MsdTrace                       # mean over kept runs, every group
    per_run_msd: dict[str, np.ndarray]  # group -> (R, n_rec)
    window_msd: dict[str, np.ndarray]   # group -> (R,) mean over the trailing window
    window_error: np.ndarray            # (R, N, M)
    diverged: np.ndarray                # (R,)
    tau: np.ndarray | None = None
    window_links: np.ndarray | None = None   # (R, 4)
    link_trace: np.ndarray | None = None     # (n_rec, 4) summed over kept runs
    final_mask: np.ndarray | None = None     # (R, N, N)
    stream_digest: list | None = None

    @property
    def kept(self) -> np.ndarray:
        return ~self.diverged

    def steady_msd(self) -> dict[str, float]:
        """Trailing-window MSD averaged over kept runs (linear)."""
        if not self.kept.any():
            return {g: math.nan for g in self.window_msd}
        return {g: float(np.mean(v[self.kept])) for g, v in self.window_msd.items()}

    def clustering(self) -> dict[str, float] | None:
        """Trailing-window link rates per run, averaged over kept runs."""
        if self.window_links is None:
            return None
        rates = link_rates(self.window_links[self.kept])
        return {name: float(np.nanmean(getattr(rates, name))) if rates.precision.size else math.nan
                for name in ("precision", "recall", "false_alarm", "misdetection", "error_rate")}

    def steady_state_reached(self, group: str = "network") -> bool:
        """Fitted slope of the dB trace over the trailing window is below the threshold."""
        its = self.msd.iterations
        sel = its > its[-1] - max(1, math.ceil(0.1 * its[-1]))
        if sel.sum() < 2 or not self.kept.any():
            return False
        slope = np.polyfit(its[sel], to_db(self.msd.linear[group][sel]), 1)[0]
        return bool(abs(slope) * 100 < STEADY_SLOPE_DB)


@dataclass
class BiasTable:
    """Predicted vs empirical steady-state mean error of blind fusion."""

    label: str
    predicted: np.ndarray      # (N, M) mean over kept runs
    empirical: np.ndarray      # (N, M)
    spectral_radius: float     # largest over runs
    converged: bool

    def relative_error(self, floor: float = 1e-3) -> np.ndarray:
        """``|emp - pred| / |pred|`` where ``|pred| > floor``, NaN elsewhere."""
        big = np.abs(self.predicted) > floor
        out = np.full(self.predicted.shape, np.nan)
        out[big] = np.abs(self.empirical[big] - self.predicted[big]) / np.abs(self.predicted[big])
        return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunSetup]
    variants: dict[str, VariantResult]
    bias: dict[str, BiasTable]
    timing: dict[str, float]
    iterations: np.ndarray

    @property
    def divergence_counts(self) -> dict[str, int]:
        return {k: int(v.diverged.sum()) for k, v in self.variants.items()}


def _merge(parts: list[VariantTrace], groups, keep_mask: bool) -> dict:
    per_run = {g: [] for g in groups}
    win = {g: [] for g in groups}
    for tr in parts:
        for g, members in groups.items():
            per_run[g].append(tr.sq_dev[:, :, members].mean(axis=2))
            win[g].append(tr.window_sq_dev[:, members].mean(axis=1))
    cat = lambda name: np.concatenate([getattr(tr, name) for tr in parts])
    out = {
        "per_run": {g: np.concatenate(v) for g, v in per_run.items()},
        "window": {g: np.concatenate(v) for g, v in win.items()},
        "window_error": cat("window_error"),
        "diverged": cat("diverged"),
        "tau": cat("tau") if parts[0].tau is not None else None,
    }
    if parts[0].link_counts is not None:
        out["window_links"] = cat("window_link_counts")
        out["link_counts"] = cat("link_counts")
        out["final_mask"] = cat("final_mask") if keep_mask else None
    if "stream_digest" in parts[0].extra:
        out["digest"] = [d for tr in parts for d in tr.extra["stream_digest"]]
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Simulate every requested strategy on shared per-run data and aggregate."""
    t0 = time.perf_counter()
    net = config.network
    groups = pair_groups(net, "all")
    runs = [run_setup(config, r) for r in range(config.runs)]
    t_setup = time.perf_counter() - t0

    n_rec = config.iterations // config.trace_stride
    per_run_bytes = n_rec * len(net.index) * 8 * max(1, len(config.variants))
    chunk = max(1, min(config.runs, _CHUNK_BYTES // max(1, per_run_bytes)))
    parts = {v.name: [] for v in config.variants}
    iterations = None
    for start in range(0, config.runs, chunk):
        res = simulate(net, runs[start:start + chunk], config.variants, config.iterations,
                       config.seed, schedule=config.schedule, trace_stride=config.trace_stride,
                       window=config.window, digest=config.digest)
        for name, tr in res.items():
            iterations = tr.iterations
            # keep only what the aggregation needs
            parts[name].append(replace(tr, history=None, final_phi=np.zeros(0)))
    t_sim = time.perf_counter() - t0 - t_setup

    variants = {}
    for v in config.variants:
        m = _merge(parts.pop(v.name), groups, keep_mask=True)
        kept = ~m["diverged"]
        lin = {g: (arr[kept].mean(axis=0) if kept.any() else np.full(arr.shape[1], np.nan))
               for g, arr in m["per_run"].items()}
        link_trace = (m["link_counts"][kept].sum(axis=0) if "link_counts" in m else None)
        variants[v.name] = VariantResult(
            label=v.name, kind=v.kind, msd=MsdTrace(iterations, lin),
            per_run_msd=m["per_run"], window_msd=m["window"], window_error=m["window_error"],
            diverged=m["diverged"], tau=m["tau"], window_links=m.get("window_links"),
            link_trace=link_trace, final_mask=m.get("final_mask"), stream_digest=m.get("digest"))

    bias = {}
    for v in config.variants:
        if v.kind is Variant.BLIND:
            bias[v.name] = blind_bias_table(config, runs, variants[v.name])
    timing = {"setup_seconds": t_setup, "simulate_seconds": t_sim,
              "total_seconds": time.perf_counter() - t0}
    return ExperimentResult(config, runs, variants, bias, timing, iterations)


def predicted_bias(config: ExperimentConfig, run: RunSetup, kind: Variant = Variant.BLIND):
    net = config.network
    C = weight_matrix(kind, net)
    return theoretical_bias(C, net.nodes, run.truth, net.index, run.regressor_var)


def blind_bias_table(config: ExperimentConfig, runs: list[RunSetup], res: VariantResult) -> BiasTable:
    kept = np.flatnonzero(res.kept)
    preds = [predicted_bias(config, runs[r]) for r in kept]
    converged = bool(preds) and all(p.converged for p in preds)
    radius = max((p.spectral_radius for p in preds), default=math.nan)
    shape = res.window_error.shape[1:]
    predicted = (np.mean([p.bias for p in preds], axis=0) if converged
                 else np.full(shape, np.nan))
    empirical = res.window_error[kept].mean(axis=0) if kept.size else np.full(shape, np.nan)
    return BiasTable(res.label, predicted, empirical, radius, converged)


# ------------------------------------------------------------------ outputs

def ensure_writable(directory) -> Path:
    """Create ``directory`` if needed and prove that files can be written there."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(dir=d, prefix=".probe")
        os.close(fd)
        os.unlink(probe)
    except OSError as exc:
        raise OutputError(f"output_dir: cannot write to {str(d)!r}: {exc.strerror or exc}") from None
    return d


def _num(x):
    """JSON-safe float: NaN and infinities become null."""
    x = float(x)
    return x if math.isfinite(x) else None


def _f(x) -> str:
    return repr(float(x))


def summary_dict(result: ExperimentResult) -> dict:
    cfg = result.config
    net = cfg.network
    out = {"config": cfg.to_dict(), "variants": {}, "bias": {}, "divergence": result.divergence_counts}
    for name, v in result.variants.items():
        steady = v.steady_msd()
        entry = {
            "kind": v.kind.value,
            "runs_kept": int(v.kept.sum()),
            "runs_diverged": int(v.diverged.sum()),
            "steady_state_msd_db": {g: _num(to_db(x)) if not math.isnan(x) else None
                                    for g, x in steady.items()},
            "steady_state_reached": v.steady_state_reached(),
        }
        clus = v.clustering()
        if clus is not None:
            entry["clustering"] = {k: _num(x) for k, x in clus.items()}
            entry["tau"] = [_num(x) for x in v.tau]
        if v.stream_digest is not None:
            entry["stream_digest"] = v.stream_digest
        out["variants"][name] = entry
    for name, table in result.bias.items():
        rel = table.relative_error()
        out["bias"][name] = {
            "spectral_radius": _num(table.spectral_radius),
            "converged": table.converged,
            "max_relative_error": _num(np.nanmax(rel)) if np.isfinite(rel).any() else None,
            "pairs": [
                {"node": k + 1, "task": t + 1,
                 "predicted": [_num(x) for x in table.predicted[n]],
                 "empirical": [_num(x) for x in table.empirical[n]]}
                for n, (k, t) in enumerate(net.index.pairs)],
        }
    out["runs"] = [
        {"run": r.index + 1,
         "regressor_var": [_num(x) for x in r.regressor_var],
         "truth": {str(t + 1): [_num(x) for x in r.truth[t]] for t in sorted(r.truth)}}
        for r in result.runs]
    out["timing"] = {k: _num(x) for k, x in result.timing.items()}
    return out


def emit_outputs(result: ExperimentResult, directory=None) -> dict[str, Path]:
    """Write ``traces.csv``, ``links.csv`` and ``summary.json``; returns their paths.

    The ``timing`` section of the summary is the only non-deterministic part.
    """
    d = ensure_writable(result.config.output_dir if directory is None else directory)
    net = result.config.network
    paths = {"traces": d / "traces.csv", "links": d / "links.csv", "summary": d / "summary.json"}

    with open(paths["traces"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "algorithm", "group", "msd_linear", "msd_db"])
        for name, v in result.variants.items():
            for g, lin in v.msd.linear.items():
                db = to_db(lin)
                for it, x, y in zip(result.iterations, lin, db):
                    w.writerow([int(it), name, g, _f(x), _f(y) if np.isfinite(x) else _f(x)])

    cand = candidate_mask(net)
    rows, cols = np.nonzero(cand & ~np.eye(len(net.index), dtype=bool))
    clustered = [v for v in result.variants.values() if v.final_mask is not None]
    # the first clustering strategy goes to links.csv, any further one to links_<label>.csv
    for j, v in enumerate(clustered or [None]):
        path = paths["links"] if j == 0 else d / f"links_{v.label}.csv"
        paths[path.stem] = path
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "node_k", "task_t", "node_l", "task_p", "kept"])
            if v is None:
                continue
            for r in range(v.final_mask.shape[0]):
                mask = v.final_mask[r]
                for a, b in zip(rows, cols):
                    (k, t), (l, p) = net.index.pairs[a], net.index.pairs[b]
                    w.writerow([r + 1, k + 1, t + 1, l + 1, p + 1, int(mask[a, b])])

    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump(summary_dict(result), fh, indent=2, allow_nan=False)
        fh.write("\n")
    return paths


def deterministic_summary(path) -> dict:
    """A summary file without its timing section."""
    data = _read_json(Path(path), "summary")
    data.pop("timing", None)
    return data


def bias_report(config: ExperimentConfig, kind: Variant = Variant.BLIND) -> dict:
    """Predicted steady-state bias of a static strategy for every run's draws (no simulation)."""
    if kind is Variant.UDNSPE:
        raise ConfigError("bias analysis needs static weights; udnspe has none")
    net = config.network
    runs = []
    for r in range(config.runs):
        pred = predicted_bias(config, run_setup(config, r), kind)
        runs.append({"run": r + 1, **{k: (_clean(v)) for k, v in pred.to_dict().items()}})
    return {"algorithm": kind.value, "pairs": [[k + 1, t + 1] for k, t in net.index.pairs],
            "runs": runs}


def _clean(v):
    if isinstance(v, float):
        return _num(v)
    if isinstance(v, list):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v
