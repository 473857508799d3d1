"""Label branching decisions with strong branching and imitate them.

While solving instances, each focus node is labelled with the strong-branching
action with some probability (acting with pseudocost otherwise). The network
then minimises cross-entropy over the candidate softmax against those labels.
"""

from rlbnb.generators import GeneratorSpec
from rlbnb.training import il_accuracy, label_sb, train_il

spec = GeneratorSpec("set_covering", rows=30, cols=60, density=0.2,
                     cost_high=4, seed=0)
train, valid = label_sb(spec, num_train=400, num_valid=100,
                        explore_prob=0.5, seed=0)
print(f"labelled {len(train)} train / {len(valid)} validation samples")

params, history = train_il(train, valid, epochs=30, seed=0,
                           batch_size=32, lr=1e-2)
for row in history[::10] + [history[-1]]:
    print(f"epoch {row['epoch']:3d}: loss {row['loss']:.4f} "
          f"train acc {row['train_accuracy']:.2f} valid acc {row['valid_accuracy']:.2f}")
print(f"final top-1 validation accuracy: {il_accuracy(params, valid):.2f}")
