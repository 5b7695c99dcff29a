"""Crafted feature channels over G-cells and G-nets.

All planes are dense (ny, nx) arrays indexed [row, col]. Accumulation
order is fixed (G-net index, then covered-cell index) so that recovery by
one-step message passing can be compared at tight tolerance.
"""
from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from .lhgraph import GNet, LHGraph
from .netlist import TERMINAL, Circuit, GridSpec

GCELL_CHANNELS = ("net_density_h", "net_density_v", "pin_density", "terminal_mask")
GNET_CHANNELS = ("span_v", "span_h", "npin", "area")


def _accumulate(gnets: Sequence[GNet], grid: GridSpec, payload_fn) -> np.ndarray:
    plane = np.zeros((grid.ny, grid.nx))
    for gnet in gnets:
        contrib = payload_fn(gnet)
        for idx in gnet.cells:
            plane[idx // grid.nx, idx % grid.nx] += contrib
    return plane


def net_density_maps(gnets: Sequence[GNet], grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical net density: +1/span_v and +1/span_h per cover."""
    dens_h = _accumulate(gnets, grid, lambda g: 1.0 / g.span_v)
    dens_v = _accumulate(gnets, grid, lambda g: 1.0 / g.span_h)
    return dens_h, dens_v


def rudy_map(gnets: Sequence[GNet], grid: GridSpec) -> np.ndarray:
    """RUDY estimate: +npin * (span_h + span_v) / area per covering G-net."""
    return _accumulate(gnets, grid, lambda g: g.npin * (g.span_h + g.span_v) / g.area)


def pin_density_map(gnets: Sequence[GNet], grid: GridSpec) -> np.ndarray:
    """Expected pin density: +npin / area per covering G-net."""
    return _accumulate(gnets, grid, lambda g: g.npin / g.area)


def terminal_mask(circuit: Circuit) -> np.ndarray:
    """1 where a G-cell overlaps a terminal cell footprint with positive area."""
    g = circuit.grid
    plane = np.zeros((g.ny, g.nx))
    for cell in circuit.cells:
        if cell.kind != TERMINAL or cell.w <= 0 or cell.h <= 0:
            continue
        c0 = max(0, int(math.floor(cell.x / g.cell_w)))
        c1 = min(g.nx - 1, int(math.ceil((cell.x + cell.w) / g.cell_w)) - 1)
        r0 = max(0, int(math.floor(cell.y / g.cell_h)))
        r1 = min(g.ny - 1, int(math.ceil((cell.y + cell.h) / g.cell_h)) - 1)
        if c1 < c0 or r1 < r0:
            continue
        plane[r0 : r1 + 1, c0 : c1 + 1] = 1.0
    return plane


def assemble_gcell_features(circuit: Circuit, gnets: Sequence[GNet]) -> np.ndarray:
    """n_gcells x 4 matrix in GCELL_CHANNELS order, rows row-major over the grid."""
    grid = circuit.grid
    dens_h, dens_v = net_density_maps(gnets, grid)
    pins = pin_density_map(gnets, grid)
    term = terminal_mask(circuit)
    return np.stack(
        [dens_h.reshape(-1), dens_v.reshape(-1), pins.reshape(-1), term.reshape(-1)], axis=1
    )


def assemble_gnet_features(gnets: Sequence[GNet]) -> np.ndarray:
    """n_gnets x 4 matrix of raw counts in GNET_CHANNELS order."""
    if not gnets:
        return np.zeros((0, 4))
    return np.array(
        [[g.span_v, g.span_h, g.npin, g.span_h * g.span_v] for g in gnets], dtype=float
    )


def recover_by_message_passing(graph: LHGraph, payload: np.ndarray) -> np.ndarray:
    """One-step sum-aggregated pass on the G-net to G-cell relation: H @ payload."""
    payload = np.asarray(payload, dtype=float)
    if payload.shape != (graph.n_gnets,):
        raise ValueError(f"payload must have length {graph.n_gnets}, got {payload.shape}")
    return graph.H.to_csr() @ payload


def write_feature_csv(path: str, matrix: np.ndarray, channels: Sequence[str]) -> None:
    """One row per G-cell: index then channel values at 9 significant digits."""
    with open(path, "w") as fh:
        fh.write("index," + ",".join(channels) + "\n")
        for i, row in enumerate(np.atleast_2d(matrix)):
            fh.write(str(i) + "," + ",".join(f"{v:.9g}" for v in row) + "\n")


def write_pgm(path: str, plane: np.ndarray) -> Tuple[float, float]:
    """Min-max scaled 8-bit ASCII PGM; returns the (min, max) scale used."""
    lo, hi = float(plane.min()), float(plane.max())
    scale = hi - lo
    pixels = np.zeros_like(plane, dtype=int)
    if scale > 0:
        pixels = np.round((plane - lo) / scale * 255).astype(int)
    ny, nx = plane.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{nx} {ny}\n255\n")
        for row in pixels[::-1]:  # top row of image = top of grid
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
    return lo, hi
