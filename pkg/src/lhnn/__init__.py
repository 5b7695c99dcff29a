"""Lattice-hypergraph toolkit for routing-demand and congestion prediction."""

__version__ = "0.1.0"
