"""Desk-scale lab for DNN accelerator memory-trace side channels.

Simulates off-chip traces of a tiled convolution accelerator with and
without the bin-packing countermeasure, mounts the statistical /
Kerckhoff / side-information attack generations against them, and
quantifies residual leakage and attacker search-space size.
"""

__version__ = "0.1.0"
