"""Shared builders for small hand-made circuits."""
import numpy as np
import pytest

from lhnn.netlist import MOVABLE, Cell, Circuit, GridSpec, Net, Pin


def make_circuit(nx, ny, pin_xy_by_net, cap_h=1.0, cap_v=1.0, cell_w=1.0, cell_h=1.0,
                 extra_cells=()):
    """Circuit with one unit cell per pin location; nets given as coordinate lists."""
    cells = list(extra_cells)
    pins = []
    nets = []
    for j, coords in enumerate(pin_xy_by_net):
        idxs = []
        for x, y in coords:
            cid = f"c{len(cells)}"
            cells.append(Cell(cid, MOVABLE, float(x), float(y), 0.0, 0.0))
            pins.append(Pin(cid, 0.0, 0.0))
            idxs.append(len(pins) - 1)
        nets.append(Net(f"n{j}", tuple(idxs)))
    grid = GridSpec(nx, ny, cell_w, cell_h, cap_h, cap_v)
    return Circuit(grid, tuple(cells), tuple(pins), tuple(nets))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
