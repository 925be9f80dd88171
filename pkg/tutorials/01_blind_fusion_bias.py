"""Why fusing estimates of different tasks goes wrong, and by how much.

Two linked nodes each track their own scalar. Averaging their intermediate
estimates blindly drags both towards each other; the mean-error recursion
predicts exactly where they settle. We compute that prediction, check it
against the closed form for two nodes, then watch a Monte Carlo run land on it.

    python tutorials/01_blind_fusion_bias.py
"""

import numpy as np

from nspe.analysis import step_size_bound, theoretical_bias
from nspe.estimators import AlgorithmVariant, Variant
from nspe.harness import ExperimentConfig, run_experiment
from nspe.network import Network, NodeSpec, TaskSpec, Topology
from nspe.simulate import weight_matrix

# Node 0 estimates task 0, node 1 estimates task 1. Both see unit-variance
# regressors; node 1 adapts twice as fast.
tasks = (TaskSpec(0, 1), TaskSpec(1, 1))
nodes = (NodeSpec(0, (0,), 0.02, 1e-3, 1.0), NodeSpec(1, (1,), 0.04, 1e-3, 1.0))
net = Network(tasks, nodes, Topology.from_edges(2, [(0, 1)]))
print(net.validate().describe())
print("largest stable step size per node:", [step_size_bound(n) for n in nodes])

truth = {0: np.array([0.2]), 1: np.array([0.9])}

# Blind fusion puts weight 1/2 on every neighbor estimate, whatever its task.
C = weight_matrix(Variant.BLIND, net)
print("blind weight matrix:\n", C)
pred = theoretical_bias(C, nodes, truth, net.index)
print(f"mean recursion spectral radius {pred.spectral_radius:.4f}")

# For two scalar nodes the fixed point is known in closed form: the faster
# node stays closer to its own task.
g1, g2 = 0.02, 0.04
gap = truth[0][0] - truth[1][0]
closed = np.array([g2 / (g1 + g2) * gap, -g1 / (g1 + g2) * gap])
print("predicted bias  ", pred.bias.ravel())
print("closed form     ", closed)

# Non-cooperation is unbiased: C = I gives exactly zero.
print("bias with C = I ", theoretical_bias(np.eye(2), nodes, truth, net.index).bias.ravel())

# Now simulate. With fixed regressor variances the harness reuses them; the
# ground truth is drawn per run, so compare against the per-run average.
cfg = ExperimentConfig(net, iterations=4000, runs=200, seed=7, trace_stride=100,
                       variants=(AlgorithmVariant(Variant.BLIND),
                                 AlgorithmVariant(Variant.NONCOOP)))
res = run_experiment(cfg)
table = res.bias["blind"]
print("\nover 200 runs, trailing 10% window")
print("  predicted", table.predicted.ravel())
print("  empirical", table.empirical.ravel())
print("  relative error", table.relative_error().ravel())
print("  non-cooperative mean error", res.variants["noncoop"].window_error.mean(0).ravel())
