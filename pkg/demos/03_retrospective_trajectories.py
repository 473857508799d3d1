"""Deconstruct a solved search tree into retrospective trajectories.

After a solve, the branched nodes are partitioned into root-to-leaf paths,
one per chosen fathomed leaf. Each path is a short training episode with a
-1-per-step reward and a terminal 0 when the final branching fathomed both
children. Compare the trajectory lengths with the full visit-ordered episode.
"""

import numpy as np

from rlbnb import GeneratorSpec, generate
from rlbnb.branchers import RandomBranching
from rlbnb.engine import solve
from rlbnb.retro import construct_trajectories, full_episode

rng = np.random.default_rng(0)
for seed in range(40):
    inst = generate(GeneratorSpec("set_covering", rows=30, cols=60, density=0.2,
                                  cost_high=4, seed=seed))
    stats, tree = solve(inst, RandomBranching(), seed=seed)
    if stats.num_nodes >= 6:
        break

episode = full_episode(tree)
print(f"instance {inst.name}: {stats.num_nodes} branching decisions")
print(f"full episode: nodes {episode.node_ids}, return {episode.undiscounted_return}")
print()

for heuristic in ("mlpg", "random", "visitation_order", "deepest"):
    trajs = construct_trajectories(tree, heuristic, np.random.default_rng(1))
    print(f"{heuristic}:")
    for t in trajs:
        print(f"  path {t.node_ids} -> leaf {t.destination_leaf}, rewards {t.rewards}")
    covered = sorted(n for t in trajs for n in t.node_ids)
    branched = sorted(n.id for n in tree.nodes if n.status == "branched")
    assert covered == branched, "every branched node appears exactly once"
    lengths = [len(t) for t in trajs]
    print(f"  lengths {lengths} (episode was {stats.num_nodes})")
    print()
