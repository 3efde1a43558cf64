"""Idiom detection, rewriting and data marshaling for linear-algebra kernels.

The package reads LiLAC-What computations and LiLAC-How harness
descriptions, finds matching loop nests in a small SSA IR, replaces them
with harness calls, and provides a change-tracking marshaling runtime.
"""

__version__ = "0.1.0"
IR_FORMAT_VERSION = "1"
SPEC_FORMAT_VERSION = "1"
