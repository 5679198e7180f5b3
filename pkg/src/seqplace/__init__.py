"""Batched particle optimization for sequential pick-and-place.

Two stages: a placement CSP solved by rejection-sampled gradient descent over
a particle batch, then joint trajectory/placement refinement under an
augmented Lagrangian. See README for the benchmark CLI.
"""

__version__ = "0.1.0"
