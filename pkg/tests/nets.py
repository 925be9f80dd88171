"""Small network fixtures shared by the test modules."""

from nspe.network import Network, NodeSpec, TaskSpec, Topology


def scalar_pair(step_size=0.05, noise_var=1e-3, regressor_var=1.0, connected=True):
    """Two nodes, one scalar task each, optionally linked."""
    tasks = (TaskSpec(0, 1), TaskSpec(1, 1))
    nodes = tuple(NodeSpec(k, (k,), step_size, noise_var, regressor_var) for k in range(2))
    edges = [(0, 1)] if connected else []
    return Network(tasks, nodes, Topology.from_edges(2, edges))


def small_multitask(regressor_var=0.5, step_size=0.05):
    """Four nodes on a path, a global task 0 and two partially shared tasks."""
    tasks = (TaskSpec(0, 2), TaskSpec(1, 2), TaskSpec(2, 2))
    interests = [(0, 1), (0, 1, 2), (0, 2), (0,)]
    nodes = tuple(NodeSpec(k, t, step_size, 1e-3, regressor_var) for k, t in enumerate(interests))
    return Network(tasks, nodes, Topology.from_edges(4, [(0, 1), (1, 2), (2, 3)]))
