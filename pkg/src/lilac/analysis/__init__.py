"""CFG, dominator, loop and normalization analyses."""

from .cfg import DomTree, dominator_tree, dominators, reachable, reverse_postorder
from .loops import LoopInfo, LoopNest, find_loops, loop_bounds
from .normalize import normalize, normalize_function

__all__ = [
    "DomTree",
    "LoopInfo",
    "LoopNest",
    "dominator_tree",
    "dominators",
    "find_loops",
    "loop_bounds",
    "normalize",
    "normalize_function",
    "reachable",
    "reverse_postorder",
]
