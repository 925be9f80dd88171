"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (collected again in the terminal summary)
and fails when its check or its wall-clock budget is missed. Horizons are
chosen so that the trailing window sits in steady state for the paper preset,
whose smallest adaptation gains are around 1e-5.
"""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from acceptance_log import criterion
from nets import scalar_pair
from nspe.analysis import link_rates, step_size_bound, theoretical_bias, to_db
from nspe.cli import main
from nspe.estimators import AlgorithmVariant, Variant
from nspe.harness import (ExperimentConfig, load_config, predicted_bias, run_experiment,
                          run_setup)
from nspe.network import Network, NodeSpec, TaskSpec, Topology, network_to_dict
from nspe.simulate import RunSetup, simulate

NONCOOP = AlgorithmVariant(Variant.NONCOOP)
ORACLE = AlgorithmVariant(Variant.ORACLE)
BLIND = AlgorithmVariant(Variant.BLIND)
UD = AlgorithmVariant(Variant.UDNSPE, tau_relative=0.25)

pytestmark = pytest.mark.acceptance


def preset(**kw):
    return load_config("preset:paper").with_overrides(**kw)


def scalar_config(variants, runs, iterations, step_size=0.05, **kw):
    return ExperimentConfig(scalar_pair(step_size=step_size), iterations=iterations, runs=runs,
                            seed=11, variants=tuple(variants), **kw)


def with_step(cfg, mu):
    net = cfg.network.replace_nodes([replace(n, step_size=mu) for n in cfg.network.nodes])
    return cfg.with_overrides(network=net)


def test_criterion_1_noncooperative_unbiased():
    with criterion(1, "non-cooperative estimates are unbiased", 10) as v:
        net = scalar_pair()
        truth = {0: np.array([0.3]), 1: np.array([0.8])}
        pred = theoretical_bias(np.eye(2), net.nodes, truth, net.index)
        v.check(pred.converged and np.all(pred.bias == 0.0),
                f"predicted bias {pred.bias.ravel().tolist()}")

        res = run_experiment(scalar_config([NONCOOP], runs=200, iterations=3000, trace_stride=100))
        err = res.variants["noncoop"].window_error
        mean = err.mean(axis=0).ravel()
        se = err.std(axis=0, ddof=1).ravel() / math.sqrt(err.shape[0])
        z = np.abs(mean) / se
        v.check(np.all(z <= 3), f"mean error {mean.tolist()} is {z.max():.2f} SE from 0")


def test_criterion_2_blind_bias_matches_prediction():
    with criterion(2, "blind fusion bias matches the closed-form prediction", 300) as v:
        # one truth draw for all runs; averaging predictions over random truths
        # cancels the signed bias while the Monte Carlo noise stays
        res = run_experiment(scalar_config([BLIND], runs=200, iterations=3000, trace_stride=100,
                                           freeze_truth=True))
        table = res.bias["blind"]
        rel = table.relative_error(1e-3)
        v.check(np.nanmax(rel) <= 0.05,
                f"scalar fixture: max rel err {np.nanmax(rel):.4f} on {np.sum(~np.isnan(rel))} comps")

        cfg = preset(variants=(BLIND,), iterations=150_000, runs=200, freeze_truth=True,
                     trace_stride=1000)
        res = run_experiment(cfg)
        table = res.bias["blind"]
        rel = table.relative_error(1e-3)
        n = int(np.sum(~np.isnan(rel)))
        v.check(n > 0 and np.nanmax(rel) <= 0.05,
                f"paper preset: max rel err {np.nanmax(rel):.4f} on {n} comps, "
                f"radius {table.spectral_radius:.6f}")


def test_criterion_3_singleton_oracle_is_noncooperative():
    tasks = tuple(TaskSpec(t, 2) for t in range(3))
    nodes = tuple(NodeSpec(k, (k,), 0.03, 1e-3, 0.5 + 0.1 * k) for k in range(3))
    net = Network(tasks, nodes, Topology.from_edges(3, [(0, 1), (1, 2)]))
    run = RunSetup(0, {t: np.array([0.2 * t + 0.1, 0.7]) for t in range(3)},
                   np.array([n.regressor_var for n in nodes]))
    simulate(net, [run], [NONCOOP, ORACLE], 2, 5)  # load compiled kernels outside the budget
    with criterion(3, "oracle diffusion with singleton sets equals non-cooperation", 1) as v:
        res = simulate(net, [run], [NONCOOP, ORACLE], 100, 5, record_history=True)
        same = np.array_equal(res["oracle"].history, res["noncoop"].history)
        v.check(same, "trajectories bit-identical" if same else "trajectories differ")


def test_criterion_4_clustering_recovery():
    with criterion(4, "learned clusters recover the oracle sets", 300) as v:
        res = run_experiment(preset(variants=(UD,), iterations=375_000, runs=100,
                                    trace_stride=12_500))
        rates = res.variants["udnspe"].clustering()
        v.check(rates["precision"] >= 0.99, f"precision {rates['precision']:.4f}")
        v.check(rates["recall"] >= 0.99, f"recall {rates['recall']:.4f}")


def test_criterion_5_msd_ordering():
    with criterion(5, "learned clustering reaches oracle MSD, both below non-cooperation", 600) as v:
        res = run_experiment(preset(variants=(NONCOOP, ORACLE, UD), iterations=400_000,
                                    runs=100, trace_stride=4000))
        db = {k: float(to_db(r.steady_msd()["network"])) for k, r in res.variants.items()}
        gap = abs(db["udnspe"] - db["oracle"])
        v.check(gap <= 1.0, f"|UD - oracle| {gap:.3f} dB")
        v.check(db["noncoop"] - db["oracle"] >= 3.0 and db["noncoop"] - db["udnspe"] >= 3.0,
                f"noncoop {db['noncoop']:.2f}, oracle {db['oracle']:.2f}, UD {db['udnspe']:.2f} dB")
        steady = all(r.steady_state_reached() for r in res.variants.values())
        v.check(steady, "steady state reached" if steady else "trailing slope too large")


def test_criterion_6_step_size_gate(tmp_path):
    with criterion(6, "step sizes below 2/sigma_u^2 converge in the mean, above diverge", 30) as v:
        net = scalar_pair()
        bound = step_size_bound(net.nodes[0])
        v.check(1.9 < bound < 2.5, f"bound {bound:g}")
        for kind in (Variant.NONCOOP, Variant.BLIND):
            radius = {mu: predicted_bias(scalar_config([NONCOOP], 1, 1, step_size=mu),
                                         run_setup(scalar_config([NONCOOP], 1, 1), 0),
                                         kind).spectral_radius
                      for mu in (1.9, 2.5)}
            v.check(radius[1.9] < 1 <= radius[2.5],
                    f"{kind.value} mean recursion radius {radius[1.9]:.2f} / {radius[2.5]:.2f}")

        # the stationary law at mu=1.9 is heavy tailed, so "bounded" means finite here
        res = run_experiment(scalar_config([NONCOOP], runs=20, iterations=60_000,
                                           step_size=1.9, trace_stride=1000)).variants["noncoop"]
        mags = np.abs(res.window_error).ravel()
        v.check(not res.diverged.any() and np.isfinite(mags).all(),
                f"mu=1.9: {int(res.diverged.sum())} diverged, median |window mean error| "
                f"{np.median(mags):.2g}")

        cfg_path = tmp_path / "unstable.json"
        cfg_path.write_text(json.dumps({
            "network": network_to_dict(scalar_pair(step_size=2.5)), "variants": ["noncoop"],
            "iterations": 60_000, "runs": 5, "seed": 11, "trace_stride": 1000}))
        code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out"), "--quiet"])
        flagged = json.loads((tmp_path / "out" / "summary.json").read_text())["divergence"]
        v.check(code == 3 and flagged == {"noncoop": 5},
                f"mu=2.5: exit code {code}, diverged runs {flagged}")


def test_criterion_7_threshold_degeneracies():
    with criterion(7, "extreme thresholds reduce to non-cooperation and blind fusion", 180) as v:
        tiny = AlgorithmVariant(Variant.UDNSPE, tau=1e-12, label="ud_tiny")
        huge = AlgorithmVariant(Variant.UDNSPE, tau=1e6, label="ud_huge")
        res = run_experiment(preset(variants=(NONCOOP, BLIND, tiny, huge), iterations=400_000,
                                    runs=20, trace_stride=4000))
        db = {k: float(to_db(r.steady_msd()["network"])) for k, r in res.variants.items()}
        d1 = abs(db["ud_tiny"] - db["noncoop"])
        d2 = abs(db["ud_huge"] - db["blind"])
        v.check(d1 <= 0.1, f"tau=1e-12 vs noncoop {d1:.4f} dB")
        v.check(d2 <= 0.1, f"tau=1e6 vs blind {d2:.4f} dB")


def test_criterion_8_error_rate_decays_with_step_size():
    with criterion(8, "smaller step sizes do not raise the clustering error rate", 600) as v:
        rates = {}
        for mu, T in ((2e-3, 800_000), (8e-3, 200_000)):
            cfg = with_step(preset(variants=(UD,), iterations=T, runs=50, trace_stride=T // 20), mu)
            res = run_experiment(cfg).variants["udnspe"]
            per_run = link_rates(res.window_links[res.kept]).error_rate
            rates[mu] = (float(np.mean(per_run)), float(np.std(per_run, ddof=1) / np.sqrt(per_run.size)))
        (small, se_s), (large, se_l) = rates[2e-3], rates[8e-3]
        margin = 2.0 * math.hypot(se_s, se_l)
        v.check(small <= large + margin,
                f"error rate {small:.2e} (mu=2e-3) vs {large:.2e} (mu=8e-3), margin {margin:.1e}")


def test_criterion_9_determinism(tmp_path):
    with criterion(9, "identical invocations give identical outputs", 60) as v:
        out = tmp_path / "run"
        args = ["run", "--config", "preset:paper", "--out", str(out), "--quiet"]
        assert main(args) == 0
        first = (out / "traces.csv").read_bytes(), json.loads((out / "summary.json").read_text())
        assert main(args) == 0
        second = (out / "traces.csv").read_bytes(), json.loads((out / "summary.json").read_text())
        for s in (first[1], second[1]):
            s.pop("timing")
        v.check(first[0] == second[0], f"traces.csv identical ({len(first[0])} bytes)")
        v.check(first[1] == second[1], "summary.json identical apart from timing")
