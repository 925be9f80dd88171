import csv
import json
import os

import numpy as np
import pytest

from nets import scalar_pair, small_multitask
from nspe.analysis import msd_from_sq_dev, pair_groups
from nspe.errors import CalibrationError, ConfigError
from nspe.estimators import AlgorithmVariant, Variant
from nspe.harness import (ExperimentConfig, OutputError, bias_report, config_from_dict,
                          deterministic_summary, emit_outputs, ensure_writable, load_config,
                          run_experiment, run_setup)
from nspe.network import network_to_dict
from nspe.simulate import simulate


def small_cfg(**kw):
    raw = {"network": network_to_dict(small_multitask(regressor_var=None)), "iterations": 200,
           "runs": 3, "seed": 5, "tau": {"relative": 0.25}, "snr_db": [10, 20]}
    raw.update(kw)
    return raw


class TestLoad:
    def test_paper_preset(self):
        cfg = load_config("preset:paper")
        assert cfg.network.size == 10 and cfg.runs == 100
        assert all(n.step_size == 4e-3 and n.noise_var == 1e-3 for n in cfg.network.nodes)
        assert [v.kind for v in cfg.variants] == list(Variant)
        assert cfg.variants[-1].tau_relative == 0.25
        assert cfg.iterations == 3000 and cfg.snr_db == (10.0, 20.0)

    def test_shipped_config_matches_preset(self):
        root = os.path.dirname(os.path.dirname(__file__))
        shipped = load_config(os.path.join(root, "configs", "paper.json"))
        assert shipped.to_dict()["network"] == load_config("preset:paper").to_dict()["network"]

    def test_defaults(self):
        cfg = config_from_dict({"network": network_to_dict(small_multitask()), "tau": 0.1})
        assert cfg.iterations == 3000 and cfg.runs == 100 and cfg.trace_stride == 1
        assert cfg.window == 300

    @pytest.mark.parametrize("field,value,match", [
        ("runs", 0, "runs"),
        ("iterations", 0, "iterations"),
        ("variants", [], "variants"),
        ("variants", ["magic"], r"variants\[0\].kind"),
        ("snr_db", [20, 10], "snr_db"),
        ("schedule", "sometimes", "schedule"),
        ("trace_stride", 0, "trace_stride"),
        ("tau", -1, "tau"),
        ("bogus", 1, "unknown fields"),
    ])
    def test_schema_violations(self, field, value, match):
        with pytest.raises(ConfigError, match=match):
            config_from_dict(small_cfg(**{field: value}))

    def test_missing_tau_with_ud(self):
        raw = small_cfg()
        del raw["tau"]
        with pytest.raises(ConfigError, match="tau"):
            config_from_dict(raw)
        raw["variants"] = ["noncoop", "blind"]
        assert len(config_from_dict(raw).variants) == 2

    def test_per_variant_tau(self):
        raw = small_cfg(variants=[{"kind": "udnspe", "tau": 0.5, "label": "a"},
                                  {"kind": "udnspe", "label": "b"}])
        cfg = config_from_dict(raw)
        assert cfg.variants[0].tau == 0.5 and cfg.variants[1].tau_relative == 0.25

    def test_disconnected_topology(self):
        net = network_to_dict(scalar_pair(connected=False))
        with pytest.raises(ConfigError, match="disconnected"):
            config_from_dict({"network": net, "variants": ["noncoop"]})

    def test_infeasible_snr(self):
        with pytest.raises(ConfigError, match="snr_db"):
            config_from_dict(small_cfg(snr_db=[100, 110]))

    def test_parse_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="parse"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_network_path_relative_to_config(self, tmp_path):
        (tmp_path / "net.json").write_text(json.dumps(network_to_dict(small_multitask())))
        (tmp_path / "cfg.json").write_text(json.dumps({"network": "net.json", "tau": 0.1,
                                                        "output_dir": "res"}))
        cfg = load_config(tmp_path / "cfg.json")
        assert cfg.network.size == 4 and cfg.output_dir == tmp_path / "res"

    def test_round_trip(self):
        cfg = config_from_dict(small_cfg(schedule={"kind": "decaying", "i0": 100}))
        again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()


class TestRun:
    def test_single_round_matches_hand_composition(self, tmp_path):
        net = network_to_dict(scalar_pair(step_size=0.1, regressor_var=1.0))
        cfg = config_from_dict({"network": net, "iterations": 1, "runs": 1, "seed": 3,
                                "variants": ["noncoop"], "output_dir": str(tmp_path)})
        res = run_experiment(cfg)
        run = res.runs[0]
        from nspe.data import StreamSeed, generate_observation
        devs = []
        for node in cfg.network.nodes:
            s = generate_observation(node, run.truth, StreamSeed(3, 0, node.id), 0)
            psi = 0.1 * s.U[0, 0] * s.d[0]
            devs.append((run.truth[node.id][0] - psi) ** 2)
        assert len(res.variants["noncoop"].msd.iterations) == 1
        assert res.variants["noncoop"].msd.linear["network"][0] == pytest.approx(np.mean(devs))

    def test_aggregate_is_mean_of_runs(self):
        cfg = config_from_dict(small_cfg(variants=["blind", "udnspe"], trace_stride=10))
        res = run_experiment(cfg)
        runs = [run_setup(cfg, r) for r in range(cfg.runs)]
        raw = simulate(cfg.network, runs, cfg.variants, cfg.iterations, cfg.seed, trace_stride=10)
        groups = pair_groups(cfg.network, "all")
        for name in ("blind", "udnspe"):
            direct = msd_from_sq_dev(raw[name].sq_dev, groups)
            for g in groups:
                np.testing.assert_allclose(res.variants[name].msd.linear[g], direct.linear[g])
                per_run = res.variants[name].per_run_msd[g]
                np.testing.assert_allclose(res.variants[name].msd.linear[g], per_run.mean(0))

    def test_freeze_truth(self):
        cfg = config_from_dict(small_cfg(freeze_truth=True, variants=["noncoop"], iterations=5))
        a, b = run_setup(cfg, 0), run_setup(cfg, 2)
        assert all(np.array_equal(a.truth[t], b.truth[t]) for t in a.truth)
        assert np.array_equal(a.regressor_var, b.regressor_var)
        res = run_experiment(cfg)
        assert not np.array_equal(res.variants["noncoop"].per_run_msd["network"][0],
                                  res.variants["noncoop"].per_run_msd["network"][1])

    def test_calibrated_snr_in_range(self):
        from nspe.data import snr_of
        cfg = config_from_dict(small_cfg())
        for r in range(3):
            run = run_setup(cfg, r)
            for n in cfg.network.nodes:
                assert 10 <= snr_of(n, run.truth, run.regressor_var[n.id]) <= 20

    def test_divergent_runs_excluded_and_counted(self):
        net = network_to_dict(scalar_pair(step_size=2.5, regressor_var=1.0))
        cfg = config_from_dict({"network": net, "iterations": 60000, "runs": 2, "seed": 1,
                                "variants": ["noncoop"], "trace_stride": 1000})
        res = run_experiment(cfg)
        assert res.divergence_counts == {"noncoop": 2}
        assert np.isnan(res.variants["noncoop"].steady_msd()["network"])

    def test_bias_table_for_blind(self):
        cfg = config_from_dict(small_cfg(variants=["blind"], iterations=50))
        res = run_experiment(cfg)
        table = res.bias["blind"]
        assert table.converged and table.predicted.shape == (len(cfg.network.index), 2)

    def test_bias_report_no_simulation(self):
        cfg = config_from_dict(small_cfg(runs=2))
        rep = bias_report(cfg)
        assert len(rep["runs"]) == 2 and rep["runs"][0]["converged"]
        noncoop = bias_report(cfg, Variant.NONCOOP)
        assert all(x == 0.0 for p in noncoop["runs"][0]["bias"] for x in p["vector"])
        with pytest.raises(ConfigError):
            bias_report(cfg, Variant.UDNSPE)


class TestOutputs:
    def run(self, tmp_path, **kw):
        cfg = config_from_dict(small_cfg(output_dir=str(tmp_path), runs=2, **kw))
        res = run_experiment(cfg)
        return cfg, res, emit_outputs(res)

    def test_files_and_columns(self, tmp_path):
        cfg, res, paths = self.run(tmp_path)
        with open(paths["traces"]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "algorithm", "group", "msd_linear", "msd_db"]
        assert {r[1] for r in rows[1:]} == {"noncoop", "oracle", "blind", "udnspe"}
        per_algo = sum(1 for r in rows[1:] if r[1] == "blind" and r[2] == "network")
        assert per_algo == cfg.iterations
        with open(paths["links"]) as fh:
            links = list(csv.reader(fh))
        assert links[0] == ["run", "node_k", "task_t", "node_l", "task_p", "kept"]
        assert {r[0] for r in links[1:]} == {"1", "2"}
        summary = json.loads(paths["summary"].read_text())
        assert set(summary) >= {"config", "variants", "bias", "divergence", "timing", "runs"}
        assert "clustering" in summary["variants"]["udnspe"]
        assert summary["bias"]["blind"]["converged"]

    def test_full_precision(self, tmp_path):
        _, res, paths = self.run(tmp_path)
        with open(paths["traces"]) as fh:
            row = list(csv.reader(fh))[1]
        assert float(row[3]) == res.variants["noncoop"].msd.linear["network"][0]

    def test_determinism(self, tmp_path):
        _, _, a = self.run(tmp_path / "a")
        _, _, b = self.run(tmp_path / "b")
        assert a["traces"].read_bytes() == b["traces"].read_bytes()
        assert a["links"].read_bytes() == b["links"].read_bytes()
        sa, sb = deterministic_summary(a["summary"]), deterministic_summary(b["summary"])
        sa["config"].pop("output_dir")
        sb["config"].pop("output_dir")
        assert sa == sb

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError):
            ensure_writable(blocker / "sub")

    def test_second_clustering_variant_gets_own_file(self, tmp_path):
        _, _, paths = self.run(tmp_path, variants=[{"kind": "udnspe", "label": "u1"},
                                                   {"kind": "udnspe", "label": "u2", "tau": 0.01}])
        assert (tmp_path / "links_u2.csv").exists()


def test_config_object_invariants():
    net = small_multitask()
    with pytest.raises(ConfigError):
        ExperimentConfig(net, runs=0, variants=(AlgorithmVariant(Variant.NONCOOP),))
    with pytest.raises(ConfigError):
        ExperimentConfig(net, variants=())


def test_calibration_error_names_field(monkeypatch):
    import nspe.data
    monkeypatch.setattr(nspe.data, "MAX_CALIBRATION_DRAWS", 0)
    cfg = config_from_dict(small_cfg(runs=1))
    with pytest.raises(CalibrationError, match="snr_db: run 1"):
        run_setup(cfg, 0)
