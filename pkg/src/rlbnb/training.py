"""n-step DQN training over retrospective (or full-episode) trajectories,
plus the imitation pipeline with explore-then-strong-branch labelling.

The actor solves whole instances with the epsilon-stochastic network policy;
finished trees are deconstructed into trajectories, rolled into n-step
samples (windows never cross trajectory ends), and pushed into prioritized
replay. One learner step runs per ``actor_steps_per_update`` branching
decisions once the buffer holds ``buffer_init`` samples.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import pickle
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .branchers import (
    BranchingPolicy,
    NeuralBranching,
    PseudocostBranching,
    StrongBranching,
)
from .engine import solve
from .generators import GeneratorSpec, generate
from .qnet import (
    AdamState,
    QNetworkParams,
    adam_step,
    backward,
    forward_many,
    init,
    save,
    soft_update,
)
from .replay import PrioritizedReplay
from .retro import construct_trajectories, emit_transitions, full_episode

TRAJECTORY_MODES = ("retro", "full_episode")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainerConfig:
    """Hyperparameters; defaults follow the training-parameter table."""

    batch_size: int = 64
    actor_steps_per_update: int = 5
    learning_rate: float = 5e-5
    discount_factor: float = 0.99
    buffer_size_init: int = 20_000
    buffer_size_capacity: int = 100_000
    per_alpha: float = 0.6
    per_beta_init: float = 0.4
    per_beta_final: float = 1.0
    per_beta_steps: int = 5_000
    min_priority: float = 1e-3
    tau_soft: float = 1e-4
    gradient_clip: float = 10.0
    n_step: int = 3
    epsilon: float = 2.5e-2
    softmax_temperature: float = 1.0
    trajectory_mode: str = "retro"
    retro_heuristic: str = "mlpg"
    node_selector: str = "best_first"
    terminal_rule: str = "both_children"
    max_nodes_per_episode: int = 2_000
    emb_size: int = 64

    def validate(self) -> None:
        if self.trajectory_mode not in TRAJECTORY_MODES:
            raise ValueError(f"trajectory_mode must be one of {TRAJECTORY_MODES}")
        positives = (
            "batch_size", "actor_steps_per_update", "learning_rate",
            "discount_factor", "buffer_size_init", "buffer_size_capacity",
            "per_alpha", "per_beta_init", "per_beta_final", "per_beta_steps",
            "min_priority", "tau_soft", "gradient_clip", "n_step", "emb_size",
        )
        for name in positives:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.per_beta_final < self.per_beta_init:
            raise ValueError("per_beta_final must be >= per_beta_init")

    def beta(self, learner_step: int) -> float:
        frac = min(1.0, learner_step / self.per_beta_steps)
        return self.per_beta_init + frac * (self.per_beta_final - self.per_beta_init)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def from_file(cls, path) -> "TrainerConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def config_hash(self) -> str:
        canon = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def original_config(**overrides) -> TrainerConfig:
    """Full-episode baseline under best-first selection."""
    return replace(TrainerConfig(trajectory_mode="full_episode",
                                 node_selector="best_first"), **overrides)


def fmsts_config(**overrides) -> TrainerConfig:
    """Sub-tree-size baseline: full episodes under depth-first selection."""
    return replace(TrainerConfig(trajectory_mode="full_episode",
                                 node_selector="dfs"), **overrides)


def retro_config(heuristic: str = "mlpg", **overrides) -> TrainerConfig:
    return replace(TrainerConfig(trajectory_mode="retro", retro_heuristic=heuristic,
                                 node_selector="best_first"), **overrides)


@dataclass
class NStepSample:
    """One replay entry: n-step return plus bootstrap state, if any."""

    state: object
    action: int
    ret: float
    next_state: object        # None when the window hit the trajectory end
    gamma_eff: float
    done: bool


def to_nstep(transitions, n: int, gamma: float) -> list[NStepSample]:
    """Roll transitions into n-step windows that never cross trajectory ends."""
    out = []
    length = len(transitions)
    for t in range(length):
        ret = 0.0
        done = False
        next_state = None
        gamma_eff = 1.0
        for k in range(n):
            if t + k >= length:
                break
            tr = transitions[t + k]
            ret += (gamma ** k) * tr.reward
            if tr.done:
                done = True
                break
            next_state = tr.next_state
            gamma_eff = gamma ** (k + 1)
        if done:
            next_state = None
        out.append(NStepSample(
            state=transitions[t].state,
            action=transitions[t].action,
            ret=ret,
            next_state=next_state,
            gamma_eff=gamma_eff,
            done=done,
        ))
    return out


@dataclass
class EpisodeRecord:
    episode_length: int
    trajectory_lengths: list[int]
    returns: list[float]
    solve_status: str


def collect_episode(params: QNetworkParams, inst, config: TrainerConfig,
                    rng_seed: int, dropped=None) -> tuple[list[NStepSample], EpisodeRecord]:
    """Solve one instance with the exploring policy and emit n-step samples."""
    policy = NeuralBranching(params, mode="epsilon_stochastic",
                             epsilon=config.epsilon,
                             temperature=config.softmax_temperature)
    stats, tree = solve(
        inst, policy,
        selector=config.node_selector,
        max_nodes=config.max_nodes_per_episode,
        seed=rng_seed,
        record_states=True,
    )
    rng = np.random.default_rng(rng_seed + 1)
    if config.trajectory_mode == "retro":
        trajectories = construct_trajectories(
            tree, config.retro_heuristic, rng,
            terminal_rule=config.terminal_rule, dropped=dropped)
    else:
        ep = full_episode(tree, completed=stats.status == "optimal")
        trajectories = [ep] if len(ep) else []
    samples = []
    lengths, returns = [], []
    for traj in trajectories:
        transitions = emit_transitions(traj, tree)
        samples.extend(to_nstep(transitions, config.n_step, config.discount_factor))
        lengths.append(len(traj))
        returns.append(traj.undiscounted_return)
    record = EpisodeRecord(
        episode_length=stats.num_nodes,
        trajectory_lengths=lengths,
        returns=returns,
        solve_status=stats.status,
    )
    return samples, record


def _best_next_q(target: QNetworkParams, samples) -> np.ndarray:
    """max over next-state candidates of the target network, 0 at terminals."""
    boot = np.zeros(len(samples))
    pending = [(i, s.next_state) for i, s in enumerate(samples) if not s.done]
    if pending:
        qs, _ = forward_many(target, [st for _, st in pending])
        for (i, st), q in zip(pending, qs):
            cand = np.flatnonzero(st.candidate_mask)
            boot[i] = float(q[cand].max()) if len(cand) else 0.0
    return boot


def learner_step(params: QNetworkParams, target: QNetworkParams,
                 buffer: PrioritizedReplay, adam: AdamState,
                 config: TrainerConfig, rng, step_index: int) -> float:
    """One prioritized n-step DQN update with soft target tracking."""
    if len(buffer) < config.buffer_size_init:
        raise TrainingError(
            f"buffer holds {len(buffer)} < buffer_size_init={config.buffer_size_init}")
    beta = config.beta(step_index)
    idx, samples, weights = buffer.sample(config.batch_size, beta, rng)
    qs, cache = forward_many(params, [s.state for s in samples])
    q_sa = np.array([q[s.action] for q, s in zip(qs, samples)])
    boot = _best_next_q(target, samples)
    targets = np.array([s.ret for s in samples]) + \
        np.array([s.gamma_eff for s in samples]) * boot
    delta = targets - q_sa
    loss = float(np.mean(weights * delta * delta))
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    coeff = -2.0 * weights * delta / len(samples)
    dqs = []
    for q, s, co in zip(qs, samples, coeff):
        dq = np.zeros_like(q)
        dq[s.action] = co
        dqs.append(dq)
    grads = backward(params, cache, dqs)
    adam_step(params, grads, adam, clip=config.gradient_clip)
    buffer.update_priorities(idx, np.abs(delta))
    soft_update(target, params, config.tau_soft)
    return loss


def evaluate_policy(params: QNetworkParams, instances, selector: str,
                    max_nodes: int | None = None) -> tuple[float, float]:
    """Greedy evaluation: (mean focused nodes, mean LP iterations)."""
    nodes, iters = [], []
    for inst in instances:
        policy = NeuralBranching(params, mode="greedy")
        stats, _ = solve(inst, policy, selector=selector, max_nodes=max_nodes, seed=0)
        nodes.append(stats.num_nodes)
        iters.append(stats.num_lp_iterations)
    return float(np.mean(nodes)), float(np.mean(iters))


class RlTrainer:
    """Actor/learner loop around one generator family."""

    def __init__(self, config: TrainerConfig, gen_spec: GeneratorSpec, seed: int = 0):
        config.validate()
        self.config = config
        self.gen_spec = gen_spec
        self.seed = seed
        self.params = init(seed, emb_size=config.emb_size)
        self.target = self.params.copy()
        self.adam = AdamState.for_params(self.params, lr=config.learning_rate)
        self.buffer = PrioritizedReplay(config.buffer_size_capacity,
                                        alpha=config.per_alpha,
                                        min_priority=config.min_priority)
        self.sample_rng = np.random.default_rng(
            np.random.SeedSequence(seed).spawn(1)[0])
        self.episode_index = 0
        self.learner_steps = 0
        self.decision_credit = 0
        self.dropped_nodes = []
        self.episode_records: list[EpisodeRecord] = []
        self.log_rows: list[dict] = []
        self.best_nodes = math.inf
        self.best_iters = math.inf

    def _next_instance(self):
        spec = self.gen_spec.replace(seed=self.gen_spec.seed + 10_000 + self.episode_index)
        self.episode_index += 1
        return generate(spec)

    def validation_instances(self, count: int):
        """Held out from training: seeds below the training block."""
        return [generate(self.gen_spec.replace(seed=self.gen_spec.seed + i))
                for i in range(count)]

    def act(self) -> int:
        """Collect one episode; returns the number of branching decisions."""
        inst = self._next_instance()
        samples, record = collect_episode(
            self.params, inst, self.config,
            rng_seed=self.seed + 7_919 * self.episode_index,
            dropped=self.dropped_nodes)
        for s in samples:
            self.buffer.add(s)
        self.episode_records.append(record)
        return record.episode_length

    def warm_up(self) -> None:
        while len(self.buffer) < self.config.buffer_size_init:
            self.act()

    def train(self, epochs: int, eval_every: int = 0, num_val: int = 0,
              out_dir=None, divergence_limit: float = 1e6) -> list[dict]:
        """Alternate acting and learner steps; returns the per-epoch log."""
        from pathlib import Path

        out_path = Path(out_dir) if out_dir is not None else None
        if out_path is not None:
            out_path.mkdir(parents=True, exist_ok=True)
        val_instances = self.validation_instances(num_val) if num_val else []
        self.warm_up()
        diverged_streak = 0
        for epoch in range(epochs):
            while self.decision_credit < self.config.actor_steps_per_update:
                self.decision_credit += max(self.act(), 1)
            self.decision_credit -= self.config.actor_steps_per_update
            loss = learner_step(self.params, self.target, self.buffer, self.adam,
                                self.config, self.sample_rng, self.learner_steps)
            self.learner_steps += 1
            diverged_streak = diverged_streak + 1 if loss > divergence_limit else 0
            if diverged_streak >= 10:
                raise TrainingError(f"loss diverged above {divergence_limit}")
            recent = self.episode_records[-20:]
            traj_lens = [l for r in recent for l in r.trajectory_lengths]
            row = {
                "epoch": epoch,
                "loss": loss,
                "episodes": len(self.episode_records),
                "buffer_size": len(self.buffer),
                "mean_episode_length": float(np.mean([r.episode_length for r in recent])),
                "mean_trajectory_length": float(np.mean(traj_lens)) if traj_lens else 0.0,
                "val_mean_nodes": "",
                "val_mean_lp_iterations": "",
            }
            if val_instances and eval_every and (epoch + 1) % eval_every == 0:
                nodes, iters = self._evaluate_and_checkpoint(val_instances, out_path)
                row["val_mean_nodes"] = nodes
                row["val_mean_lp_iterations"] = iters
            self.log_rows.append(row)
        if val_instances and (not eval_every or epochs % max(eval_every, 1) != 0):
            self._evaluate_and_checkpoint(val_instances, out_path)
        if out_path is not None:
            save(self.params, out_path / "final.qnet.json")
            self.write_log(out_path / "training_log.csv")
        return self.log_rows

    def _evaluate_and_checkpoint(self, val_instances, out_path):
        nodes, iters = evaluate_policy(
            self.params, val_instances, self.config.node_selector,
            max_nodes=self.config.max_nodes_per_episode)
        if (nodes, iters) < (self.best_nodes, self.best_iters):
            self.best_nodes, self.best_iters = nodes, iters
            if out_path is not None:
                save(self.params, out_path / "best.qnet.json")
        return nodes, iters

    def write_log(self, path) -> None:
        if not self.log_rows:
            return
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.log_rows[0]))
            writer.writeheader()
            writer.writerows(self.log_rows)


# --- imitation learning -----------------------------------------------------


@dataclass
class LabelledSample:
    state: object
    action: int
    candidates: list[int]


class _ExploreThenStrongBranch(BranchingPolicy):
    """Acts with pseudocost, occasionally recording strong-branching labels."""

    name = "explore_then_strong_branch"
    needs_state = True

    def __init__(self, explore_prob: float, rng, sink: list):
        self.explore_prob = explore_prob
        self.rng = rng
        self.sink = sink
        self.sb = StrongBranching()
        self.pb = PseudocostBranching()

    @property
    def probing_iterations(self):
        return self.sb.probing_iterations

    def choose(self, tree, node, candidates, rng):
        if self.rng.random() < self.explore_prob:
            action = self.sb.choose(tree, node, candidates, rng)
            self.sink.append(LabelledSample(
                state=tree.states[node.id],
                action=int(action),
                candidates=list(candidates),
            ))
            return action
        return self.pb.choose(tree, node, candidates, rng)

    def observe_branching(self, tree, node, var, frac, down_lp, up_lp):
        self.pb.observe_branching(tree, node, var, frac, down_lp, up_lp)


def label_sb(gen_spec: GeneratorSpec, num_train: int, num_valid: int,
             explore_prob: float = 0.05, seed: int = 0,
             max_nodes: int = 2_000) -> tuple[list[LabelledSample], list[LabelledSample]]:
    """Collect (state, strong-branching action) pairs while solving instances."""
    want = num_train + num_valid
    if want < 1:
        raise ValueError("need at least one sample")
    sink: list[LabelledSample] = []
    rng = np.random.default_rng(seed)
    episode = 0
    while len(sink) < want:
        inst = generate(gen_spec.replace(seed=gen_spec.seed + 50_000 + episode))
        policy = _ExploreThenStrongBranch(explore_prob, rng, sink)
        solve(inst, policy, selector="best_first", max_nodes=max_nodes,
              seed=seed + episode)
        episode += 1
        if episode > 100 * want:
            raise TrainingError("labelling made no progress; check explore_prob")
    if not sink:
        raise TrainingError("no labelled samples collected")
    return sink[:num_train], sink[num_train:want]


def save_dataset(samples, path) -> None:
    with open(path, "wb") as fh:
        pickle.dump(samples, fh, protocol=4)


def load_dataset(path):
    with open(path, "rb") as fh:
        return pickle.load(fh)


def il_accuracy(params: QNetworkParams, samples) -> float:
    """Top-1 accuracy, singleton-candidate samples excluded."""
    scored = [s for s in samples if len(s.candidates) > 1]
    if not scored:
        return 1.0
    qs, _ = forward_many(params, [s.state for s in scored])
    hits = 0
    for q, s in zip(qs, scored):
        pick = s.candidates[int(np.argmax(q[s.candidates]))]
        hits += int(pick == s.action)
    return hits / len(scored)


def train_il(train_set, valid_set, epochs: int, seed: int = 0,
             batch_size: int = 32, lr: float = 1e-3,
             emb_size: int = 64) -> tuple[QNetworkParams, list[dict]]:
    """Cross-entropy over candidate softmax against strong-branching labels."""
    if not train_set:
        raise TrainingError("empty training dataset")
    params = init(seed, emb_size=emb_size)
    adam = AdamState.for_params(params, lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = [train_set[i] for i in order[start:start + batch_size]]
            qs, cache = forward_many(params, [s.state for s in batch])
            dqs = []
            batch_loss = 0.0
            for q, s in zip(qs, batch):
                cand = s.candidates
                logits = q[cand]
                z = logits - logits.max()
                p = np.exp(z)
                p /= p.sum()
                label_pos = cand.index(s.action)
                batch_loss -= math.log(max(p[label_pos], 1e-12))
                dq = np.zeros_like(q)
                dlogits = p.copy()
                dlogits[label_pos] -= 1.0
                dq[cand] = dlogits / len(batch)
                dqs.append(dq)
            grads = backward(params, cache, dqs)
            adam_step(params, grads, adam, clip=10.0)
            losses.append(batch_loss / len(batch))
        history.append({
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "train_accuracy": il_accuracy(params, train_set),
            "valid_accuracy": il_accuracy(params, valid_set) if valid_set else "",
        })
    return params, history
