"""Regularization homotopies for complementarity-constrained programs.

The package solves programs with pairwise complementarity constraints
(``F1_j(x) * F2_j(x) = 0`` with both factors nonnegative) by driving a
shrinking relaxation parameter through one of four regularization families,
and certifies what kind of stationary point the limit is (C-, M- or
S-stationary) together with its topological index.
"""

__version__ = "0.1.0"
