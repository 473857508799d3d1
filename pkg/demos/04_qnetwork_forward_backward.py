"""Run the bipartite Q-network by hand: forward, backward, gradient check.

The network embeds variable and constraint nodes, exchanges one round of
mean-aggregated messages in each direction, and reads out one Q-value per
variable through an inverted leaky relu. Both passes are plain numpy, so a
central finite difference can audit every gradient.
"""

import numpy as np

from rlbnb.branchers import RandomBranching
from rlbnb.engine import solve
from rlbnb.generators import GeneratorSpec, generate
from rlbnb.qnet import backward, forward, init

# grab a real observation from a solve
for seed in range(30):
    inst = generate(GeneratorSpec("set_covering", rows=10, cols=20, density=0.3,
                                  cost_high=5, seed=seed))
    stats, tree = solve(inst, RandomBranching(), seed=seed, record_states=True)
    if tree.states:
        break
state = next(iter(tree.states.values()))
print(f"observation: {state.num_vars} vars x 39 features, "
      f"{state.num_cons} cons x 5, {state.edge_features.size} edges")

params = init(seed=0)
q, cache = forward(params, state)
print(f"q-range over candidates: "
      f"[{q[state.candidate_mask].min():.5f}, {q[state.candidate_mask].max():.5f}]")

# gradient of a random scalar of the outputs, audited by finite differences
rng = np.random.default_rng(1)
dq = rng.normal(size=state.num_vars)
grads = backward(params, cache, [dq])

name = "out1_w"
flat = params.tensors[name].ravel()
idx = 123
h = 1e-6
orig = flat[idx]
flat[idx] = orig + h
up, _ = forward(params, state)
flat[idx] = orig - h
dn, _ = forward(params, state)
flat[idx] = orig
numeric = (float(up @ dq) - float(dn @ dq)) / (2 * h)
analytic = grads[name].ravel()[idx]
print(f"d loss / d {name}[{idx}]: analytic {analytic:.8f}, finite diff {numeric:.8f}")
