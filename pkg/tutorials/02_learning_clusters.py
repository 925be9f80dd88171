"""Learning who shares a task, on the ten-node preset.

Every node holds a global task, its own local task and possibly one of two
common tasks. The unsupervised strategy keeps a second, purely local LMS
chain per task and links two node-task pairs when those chains are closer
than a threshold. Here we follow the link precision and recall as that
chain converges, and compare steady-state MSD against the oracle and
non-cooperative strategies.

The adaptation gains on this preset are tiny (step 4e-3 times a regressor
variance of a few hundredths), so meaningful horizons are long. The defaults
below take a couple of minutes; pass a smaller --iters to skim.

    python tutorials/02_learning_clusters.py --runs 10 --iters 300000
"""

import argparse

import numpy as np

from nspe.analysis import link_rates, to_db
from nspe.estimators import AlgorithmVariant, Variant
from nspe.harness import load_config, run_experiment

parser = argparse.ArgumentParser()
parser.add_argument("--runs", type=int, default=10)
parser.add_argument("--iters", type=int, default=300_000)
args = parser.parse_args()

cfg = load_config("preset:paper")
net = cfg.network
for node in net.nodes:
    kinds = ", ".join(f"{t + 1}:{net.task_kind(t)}" for t in node.tasks)
    print(f"node {node.id + 1:2d} neighbors {[l + 1 for l in net.neighbors(node.id)]} tasks {kinds}")

variants = (AlgorithmVariant(Variant.NONCOOP), AlgorithmVariant(Variant.ORACLE),
            AlgorithmVariant(Variant.UDNSPE, tau_relative=0.25))
cfg = cfg.with_overrides(runs=args.runs, iterations=args.iters, variants=variants,
                         trace_stride=max(1, args.iters // 10))
res = run_experiment(cfg)
print(f"\n{args.runs} runs x {args.iters} rounds in {res.timing['simulate_seconds']:.1f}s")

ud = res.variants["udnspe"]
print("\nlink rates of the learned clusters (summed over runs, self links excluded)")
rates = link_rates(ud.link_trace)
for it, p, r in zip(res.iterations, rates.precision, rates.recall):
    print(f"  round {it:>8d}  precision {p:.4f}  recall {r:.4f}")

print("\nsteady-state network MSD")
for name, v in res.variants.items():
    print(f"  {name:>8s} {float(to_db(v.steady_msd()['network'])):7.2f} dB"
          f"   steady: {v.steady_state_reached()}")

# Which links did run 1 end up with? Compare with the oracle sets.
final = ud.final_mask[0]
idx = net.index
print("\nrun 1, node 5: learned partners per task")
for t in net.nodes[4].tasks:
    row = idx[(4, t)]
    partners = [idx.pairs[j] for j in np.flatnonzero(final[row]) if j != row]
    print(f"  task {t + 1}: {[(l + 1, p + 1) for l, p in partners]}")
