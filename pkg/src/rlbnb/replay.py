"""Prioritized experience replay backed by a sum tree.

Raw priorities are |td-error| + min_priority; sampling is proportional to
priority**alpha via the sum tree, with importance weights (N * P(i))**-beta
normalised by their batch maximum. New items enter at the running maximum raw
priority so every transition is sampled at least once.
"""

from __future__ import annotations

import numpy as np


class SumTree:
    """Complete binary tree over leaf weights supporting prefix-sum lookup."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.tree = np.zeros(2 * capacity - 1)

    @property
    def total(self) -> float:
        return float(self.tree[0])

    def update(self, leaf: int, value: float) -> None:
        idx = leaf + self.capacity - 1
        change = value - self.tree[idx]
        self.tree[idx] = value
        while idx != 0:
            idx = (idx - 1) // 2
            self.tree[idx] += change

    def get(self, leaf: int) -> float:
        return float(self.tree[leaf + self.capacity - 1])

    def find(self, mass: float) -> int:
        """Leaf index whose cumulative range contains the given mass."""
        idx = 0
        while True:
            left = 2 * idx + 1
            if left >= len(self.tree):
                return idx - (self.capacity - 1)
            if mass <= self.tree[left] and self.tree[left] > 0.0:
                idx = left
            else:
                mass -= self.tree[left]
                idx = left + 1


class PrioritizedReplay:
    def __init__(self, capacity: int, alpha: float = 0.6, min_priority: float = 1e-3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.alpha = alpha
        self.min_priority = min_priority
        self.tree = SumTree(capacity)
        self.items = [None] * capacity
        self.priorities = np.zeros(capacity)
        self.pos = 0
        self.size = 0
        self.max_priority = 1.0

    def __len__(self) -> int:
        return self.size

    def add(self, item) -> int:
        """Insert at the running max priority; returns the slot index."""
        slot = self.pos
        self.items[slot] = item
        self.priorities[slot] = self.max_priority
        self.tree.update(slot, self.max_priority ** self.alpha)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return slot

    def sample(self, batch_size: int, beta: float, rng) -> tuple[np.ndarray, list, np.ndarray]:
        """Proportional draws; returns (indices, items, importance weights)."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        total = self.tree.total
        masses = rng.random(batch_size) * total
        idx = np.array([self.tree.find(m) for m in masses], dtype=int)
        probs = np.array([self.tree.get(i) for i in idx]) / total
        weights = (self.size * probs) ** (-beta)
        weights = weights / weights.max()
        return idx, [self.items[i] for i in idx], weights

    def update_priorities(self, indices, td_abs) -> None:
        for i, err in zip(indices, np.asarray(td_abs, dtype=float)):
            p = abs(float(err)) + self.min_priority
            self.priorities[i] = p
            self.max_priority = max(self.max_priority, p)
            self.tree.update(int(i), p ** self.alpha)
