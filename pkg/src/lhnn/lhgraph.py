"""Lattice-hypergraph construction from a validated circuit.

G-cells are indexed row-major: index = row * nx + col, with row 0 at the
bottom of the grid. The hypergraph incidence H is n_gcells x n_gnets and
the lattice adjacency A is the 4-neighborhood over G-cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .netlist import Circuit, GridSpec, Net, net_bounding_box
from .sparse import SparseMatrix

DEFAULT_GNET_FILTER_FRACTION = 0.0025


class GraphBuildError(ValueError):
    pass


@dataclass(frozen=True)
class GNet:
    net_id: str
    cells: Tuple[int, ...]  # sorted row-major G-cell indices, contiguous rectangle
    span_h: int
    span_v: int
    npin: int

    @property
    def area(self) -> int:
        return self.span_h * self.span_v


@dataclass(frozen=True)
class LHGraph:
    grid: GridSpec
    gnets: Tuple[GNet, ...]
    H: SparseMatrix  # n_gcells x n_gnets, binary
    A: SparseMatrix  # n_gcells x n_gcells, binary symmetric
    D: np.ndarray  # hypergraph degree of each G-cell (row sums of H)
    B: np.ndarray  # hypergraph degree of each G-net (col sums of H)
    P: np.ndarray  # lattice degree of each G-cell (row sums of A)
    Vc: np.ndarray  # n_gcells x 4 G-cell features
    Vn: np.ndarray  # n_gnets x 4 G-net features
    n_filtered: int  # large G-nets removed before construction

    @property
    def n_gcells(self) -> int:
        return self.H.rows

    @property
    def n_gnets(self) -> int:
        return self.H.cols


def _span_indices(lo: float, hi: float, step: float, n: int) -> Tuple[int, int]:
    """Snap a closed 1-D interval onto covered grid indices.

    Half-open convention: an interval endpoint exactly on a shared boundary
    does not spill into the higher cell; points on the grid's outer border
    snap inward.
    """
    extent = n * step
    if hi < 0 or lo > extent:
        raise GraphBuildError("bounding box entirely outside grid")
    lo_c = max(lo, 0.0)
    hi_c = min(hi, extent)
    i0 = int(math.floor(lo_c / step))
    k1 = hi_c / step
    i1 = int(math.floor(k1))
    if i1 == k1 and hi_c > lo_c:
        i1 -= 1
    i0 = min(i0, n - 1)
    i1 = min(i1, n - 1)
    if i1 < i0:
        i1 = i0
    return i0, i1


def gnet_from_net(circuit: Circuit, net: Net) -> GNet:
    """G-net covering the net's pin bounding box, snapped onto the grid."""
    g = circuit.grid
    bbox = net_bounding_box(circuit, net)
    c0, c1 = _span_indices(bbox.xmin, bbox.xmax, g.cell_w, g.nx)
    r0, r1 = _span_indices(bbox.ymin, bbox.ymax, g.cell_h, g.ny)
    cells = tuple(r * g.nx + c for r in range(r0, r1 + 1) for c in range(c0, c1 + 1))
    return GNet(net.id, cells, span_h=c1 - c0 + 1, span_v=r1 - r0 + 1, npin=len(net.pins))


def build_lattice_adjacency(grid: GridSpec) -> SparseMatrix:
    """Binary 4-neighborhood adjacency over G-cells (symmetric, zero diagonal)."""
    nx, ny = grid.nx, grid.ny
    entries = []
    for r in range(ny):
        for c in range(nx):
            i = r * nx + c
            if c + 1 < nx:
                entries.append((i, i + 1, 1.0))
                entries.append((i + 1, i, 1.0))
            if r + 1 < ny:
                entries.append((i, i + nx, 1.0))
                entries.append((i + nx, i, 1.0))
    return SparseMatrix.from_entries(nx * ny, nx * ny, entries)


def build_incidence(gnets: Sequence[GNet], n_gcells: int) -> SparseMatrix:
    """H[i, j] = 1 iff G-cell i is covered by G-net j."""
    entries = []
    for j, gnet in enumerate(gnets):
        for i in gnet.cells:
            if not 0 <= i < n_gcells:
                raise GraphBuildError(f"G-net {gnet.net_id!r} covers out-of-range G-cell {i}")
            entries.append((i, j, 1.0))
    return SparseMatrix.from_entries(n_gcells, len(gnets), entries)


def degree_vectors(H: SparseMatrix, A: SparseMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(D, B, P): H row sums, H column sums, A row sums."""
    if H.rows != A.rows or A.rows != A.cols:
        raise GraphBuildError("inconsistent H/A dimensions")
    return H.row_sums(), H.col_sums(), A.row_sums()


def filter_large_gnets(
    gnets: Sequence[GNet],
    n_gcells: int,
    fraction: float = DEFAULT_GNET_FILTER_FRACTION,
) -> Tuple[List[GNet], int]:
    """Drop G-nets whose area exceeds fraction * n_gcells (strict), keep order."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    threshold = fraction * n_gcells
    kept = [g for g in gnets if not g.area > threshold]
    return kept, len(gnets) - len(kept)


def normalized_operators(g: LHGraph) -> Tuple[SparseMatrix, SparseMatrix, SparseMatrix]:
    """Message operators (G_nc, G_cn, A_norm).

    G_nc is the raw incidence (sum aggregation), G_cn averages over the
    G-cells a G-net covers, A_norm averages over lattice neighbors.
    """
    if np.any(g.P == 0):
        raise GraphBuildError("zero lattice degree; degenerate 1x1 grid unsupported")
    g_nc = g.H
    g_cn = g.H.transpose().scale_rows(1.0 / np.maximum(g.B, 1.0))
    a_norm = g.A.scale_rows(1.0 / g.P)
    return g_nc, g_cn, a_norm


def build_lhgraph(
    circuit: Circuit,
    filter_fraction: float = DEFAULT_GNET_FILTER_FRACTION,
) -> LHGraph:
    """Full deterministic pipeline from circuit to LH-graph."""
    from .features import assemble_gcell_features, assemble_gnet_features

    grid = circuit.grid
    n_gcells = grid.n_gcells
    gnets_all = [gnet_from_net(circuit, net) for net in circuit.nets]
    gnets, n_filtered = filter_large_gnets(gnets_all, n_gcells, filter_fraction)
    H = build_incidence(gnets, n_gcells)
    A = build_lattice_adjacency(grid)
    D, B, P = degree_vectors(H, A)
    Vc = assemble_gcell_features(circuit, gnets)
    Vn = assemble_gnet_features(gnets)
    return LHGraph(grid, tuple(gnets), H, A, D, B, P, Vc, Vn, n_filtered)
