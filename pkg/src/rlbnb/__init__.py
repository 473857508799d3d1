"""Branch-and-bound MILP solving with classical and learned branching policies."""

from .milp import MilpInstance, Row, decode, encode, load, save, validate
from .generators import GeneratorSpec, generate, mis_from_edges, reference_assignment
from .simplex import LocalBounds, LpResult, WarmStart, solve_lp, warm_hint
from .engine import SearchTree, SolveStats, TreeNode, candidates, fathom_check, solve
from .branchers import (
    BranchingPolicy,
    MostFractionalBranching,
    NeuralBranching,
    PseudocostBranching,
    RandomBranching,
    StrongBranching,
    make_policy,
)
from .features import BipartiteState, TreeContext, extract
from .retro import (
    RetroTrajectory,
    Transition,
    construct_trajectories,
    emit_transitions,
    full_episode,
    select_leaf,
)
from .training import RlTrainer, TrainerConfig, label_sb, train_il

__version__ = "0.1.0"

__all__ = [
    "MilpInstance",
    "Row",
    "decode",
    "encode",
    "load",
    "save",
    "validate",
    "GeneratorSpec",
    "generate",
    "mis_from_edges",
    "reference_assignment",
    "LocalBounds",
    "LpResult",
    "WarmStart",
    "solve_lp",
    "warm_hint",
    "SearchTree",
    "SolveStats",
    "TreeNode",
    "candidates",
    "fathom_check",
    "solve",
    "BranchingPolicy",
    "MostFractionalBranching",
    "NeuralBranching",
    "PseudocostBranching",
    "RandomBranching",
    "StrongBranching",
    "make_policy",
    "BipartiteState",
    "TreeContext",
    "extract",
    "RetroTrajectory",
    "Transition",
    "construct_trajectories",
    "emit_transitions",
    "full_episode",
    "select_leaf",
    "RlTrainer",
    "TrainerConfig",
    "label_sb",
    "train_il",
    "__version__",
]
