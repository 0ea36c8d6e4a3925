"""Workbench for multiplicative-exponential proof-structures.

The package models proof-structures as labeled graphs with an explicit
box-forest, computes their Taylor expansions (plain, filled, fattened),
runs the deconstruction rewriting system on both the MELL side and the
resource side, and decides bounded glueability of finite sets of resource
structures by searching for a common deconstruction path.
"""

__version__ = "0.1.0"
