import json

import numpy as np
import pytest

from nspe.errors import ConfigError, InterestError, PolicyError, UnknownTaskError
from nspe.network import (PAPER_RADIUS, ClusterSet, CombinationWeights, Network, NodeSpec,
                          StackedIndex, TaskSpec, Topology, geometric_topology, interest_group,
                          network_from_dict, network_to_dict, oracle_cluster_set, paper_network,
                          uniform_weights, validate_topology)


def _nodes(n, tasks=(0,)):
    return [NodeSpec(k, tasks, 0.01, 1e-3, 1.0) for k in range(n)]


class TestSpecs:
    def test_task_dim_must_be_positive(self):
        with pytest.raises(ConfigError):
            TaskSpec(0, 0)

    @pytest.mark.parametrize("kw", [dict(tasks=()), dict(tasks=(0, 0)), dict(step_size=0.0),
                                    dict(noise_var=-1.0), dict(obs_rows=0), dict(regressor_var=-0.1)])
    def test_node_spec_rejects(self, kw):
        base = dict(id=0, tasks=(0,), step_size=0.01, noise_var=1e-3)
        with pytest.raises(ConfigError):
            NodeSpec(**{**base, **kw})

    def test_network_rejects_unknown_task(self):
        with pytest.raises(ConfigError):
            Network((TaskSpec(0, 1),), (NodeSpec(0, (1,), 0.1, 1e-3, 1.0),), Topology.complete(1))

    def test_network_rejects_duplicate_task_ids(self):
        with pytest.raises(ConfigError):
            Network((TaskSpec(0, 1), TaskSpec(0, 2)), tuple(_nodes(1)), Topology.complete(1))


class TestTopology:
    def test_self_membership_added(self):
        topo = Topology.from_edges(3, [(0, 1)])
        assert topo.neighbors(2) == (2,)
        assert topo.neighbors(0) == (0, 1)
        assert topo.neighbors(1) == (0, 1)

    def test_edge_out_of_range(self):
        with pytest.raises(ConfigError):
            Topology.from_edges(2, [(0, 2)])

    def test_complete_graph_passes(self):
        report = validate_topology(Topology.complete(3), _nodes(3))
        assert report.ok and report.connected

    def test_two_isolated_nodes_fail_with_partition(self):
        report = validate_topology(Topology.from_edges(2, []), _nodes(2))
        assert not report.connected
        assert sorted(map(sorted, report.components)) == [[0], [1]]
        assert "disconnected" in report.describe()

    def test_asymmetric_relation_reported(self):
        adj = np.eye(3, dtype=bool)
        adj[0, 1] = adj[1, 2] = adj[2, 1] = True
        report = validate_topology(Topology(3, adj), _nodes(3))
        assert not report.symmetric
        assert (0, 1) in [tuple(p) for p in report.asymmetric_pairs]

    def test_missing_self_reported(self):
        adj = np.ones((2, 2), dtype=bool)
        adj[1, 1] = False
        report = validate_topology(Topology(2, adj), _nodes(2))
        assert not report.self_loops and 1 in report.missing_self

    def test_size_mismatch(self):
        with pytest.raises(ConfigError):
            validate_topology(Topology.complete(3), _nodes(2))

    def test_geometric_graph_is_deterministic_and_connected(self):
        a = geometric_topology(10, PAPER_RADIUS, 7)
        b = geometric_topology(10, PAPER_RADIUS, 7)
        assert np.array_equal(a.adjacency, b.adjacency)
        assert validate_topology(a, _nodes(10)).connected


class TestInterest:
    def test_global_task_group(self, paper_net):
        assert interest_group(10, paper_net.nodes) == frozenset(range(10))

    def test_local_task_group(self, paper_net):
        assert interest_group(3, paper_net.nodes) == frozenset({3})

    def test_common_task_groups(self, paper_net):
        assert interest_group(11, paper_net.nodes) == frozenset(range(0, 6))
        assert interest_group(12, paper_net.nodes) == frozenset(range(4, 10))

    def test_unknown_task(self, paper_net):
        with pytest.raises(UnknownTaskError):
            interest_group(99, paper_net.nodes)

    def test_task_kinds(self, paper_net):
        assert paper_net.task_kind(10) == "global"
        assert paper_net.task_kind(11) == "common"
        assert paper_net.task_kind(0) == "local"


class TestOracleSets:
    def test_isolated_node(self):
        nodes = _nodes(2)
        cs = oracle_cluster_set((0, 0), Topology.from_edges(2, []), nodes)
        assert cs.members == {(0, 0)}

    def test_global_task_complete_graph(self):
        cs = oracle_cluster_set((1, 0), Topology.complete(4), _nodes(4))
        assert cs.members == {(l, 0) for l in range(4)}

    def test_three_neighbors_one_shares(self):
        # node 0 linked to 1, 2, 3; only node 2 also estimates task 5
        nodes = [NodeSpec(0, (0, 5), 0.1, 1e-3, 1.0), NodeSpec(1, (1,), 0.1, 1e-3, 1.0),
                 NodeSpec(2, (2, 5), 0.1, 1e-3, 1.0), NodeSpec(3, (3,), 0.1, 1e-3, 1.0)]
        topo = Topology.from_edges(4, [(0, 1), (0, 2), (0, 3)])
        cs = oracle_cluster_set((0, 5), topo, nodes)
        assert cs.members == {(0, 5), (2, 5)}

    def test_not_interested(self):
        with pytest.raises(InterestError):
            oracle_cluster_set((0, 3), Topology.complete(2), _nodes(2))

    def test_cluster_set_requires_owner(self):
        with pytest.raises(PolicyError):
            ClusterSet((0, 0), frozenset({(1, 0)}))


class TestWeights:
    def test_singleton(self):
        assert uniform_weights([(0, 0)]).weights == {(0, 0): 1.0}

    def test_four_members(self):
        w = uniform_weights([(0, 0), (1, 0), (2, 0), (3, 0)])
        assert set(w.weights.values()) == {0.25}

    def test_three_members_sum_to_one(self):
        w = uniform_weights([(0, 0), (1, 0), (2, 0)])
        assert all(c == 1 / 3 for c in w.weights.values())
        assert abs(sum(w.weights.values()) - 1) <= 1e-12

    def test_empty(self):
        with pytest.raises(PolicyError):
            uniform_weights([])

    def test_sum_constraint(self):
        with pytest.raises(PolicyError):
            CombinationWeights((0, 0), {(0, 0): 0.5, (1, 0): 0.4})

    def test_negative_weight(self):
        with pytest.raises(PolicyError):
            CombinationWeights((0, 0), {(0, 0): 1.5, (1, 0): -0.5})


class TestStackedIndex:
    def test_order_nodes_then_interest_order(self):
        nodes = [NodeSpec(1, (2, 0), 0.1, 1e-3), NodeSpec(0, (1, 0), 0.1, 1e-3)]
        idx = StackedIndex.from_nodes(nodes)
        assert idx.pairs == ((0, 1), (0, 0), (1, 2), (1, 0))
        assert [idx[p] for p in idx.pairs] == [0, 1, 2, 3]

    def test_paper_network_size(self, paper_net):
        assert len(paper_net.index) == sum(n.n_tasks for n in paper_net.nodes) == 32


class TestPaperNetwork:
    def test_layout(self, paper_net):
        assert paper_net.size == 10 and paper_net.common_dim == 3
        assert len(paper_net.tasks) == 13
        assert all(n.step_size == 4e-3 and n.noise_var == 1e-3 for n in paper_net.nodes)
        assert paper_net.validate().ok

    def test_reproducible(self):
        assert np.array_equal(paper_network().topology.adjacency, paper_network().topology.adjacency)


class TestConfigRoundTrip:
    def test_round_trip_is_one_based(self, paper_net):
        d = network_to_dict(paper_net)
        assert min(t["id"] for t in d["tasks"]) == 1
        assert min(min(e) for e in d["edges"]) == 1
        again = network_from_dict(json.loads(json.dumps(d)))
        assert np.array_equal(again.topology.adjacency, paper_net.topology.adjacency)
        assert again.nodes == paper_net.nodes

    def test_missing_field(self):
        with pytest.raises(ConfigError, match="tasks"):
            network_from_dict({"nodes": [], "edges": []})

    def test_unknown_fields_rejected(self, paper_net):
        d = network_to_dict(paper_net)
        with pytest.raises(ConfigError, match="topology"):
            network_from_dict({**d, "topology": {"edges": d["edges"]}})
        d["nodes"][0]["stepsize"] = 0.1
        with pytest.raises(ConfigError, match="stepsize"):
            network_from_dict(d)
