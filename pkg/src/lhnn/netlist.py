"""Circuit data model, canonical text format parser, and geometric primitives.

The canonical format is line oriented, one record per line, `#` comments:

    GRID nx ny cell_w cell_h cap_h cap_v
    CELL id kind x y w h          # kind: x|movable, t|terminal
    PIN  cell_id dx dy            # pins are numbered globally by appearance
    NET  id pin_index pin_index ...
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Tuple

MOVABLE = "movable"
TERMINAL = "terminal"

_KIND_ALIASES = {"x": MOVABLE, "movable": MOVABLE, "t": TERMINAL, "terminal": TERMINAL}
_KIND_SHORT = {MOVABLE: "x", TERMINAL: "t"}


class ParseError(ValueError):
    """Malformed circuit document; carries the 1-based source line."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class DuplicateIdError(ParseError):
    pass


class DanglingPinError(ParseError):
    pass


class NegativeDimensionError(ParseError):
    pass


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    cell_w: float
    cell_h: float
    cap_h: float
    cap_v: float

    @property
    def n_gcells(self) -> int:
        return self.nx * self.ny

    @property
    def width(self) -> float:
        return self.nx * self.cell_w

    @property
    def height(self) -> float:
        return self.ny * self.cell_h


@dataclass(frozen=True)
class Cell:
    id: str
    kind: str
    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class Pin:
    cell_id: str
    dx: float
    dy: float


@dataclass(frozen=True)
class Net:
    id: str
    pins: Tuple[int, ...]  # indices into Circuit.pins


@dataclass(frozen=True)
class Circuit:
    grid: GridSpec
    cells: Tuple[Cell, ...]
    pins: Tuple[Pin, ...]
    nets: Tuple[Net, ...]

    def cell_by_id(self, cell_id: str) -> Cell:
        return _cell_index(self)[cell_id]


def _cell_index(circuit: Circuit) -> Dict[str, Cell]:
    return {c.id: c for c in circuit.cells}


class BBox(NamedTuple):
    xmin: float
    ymin: float
    xmax: float
    ymax: float


def _num(token: str, what: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected number for {what}, got {token!r}", line) from None


def _int(token: str, what: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected integer for {what}, got {token!r}", line) from None


def parse_circuit(text: str) -> Circuit:
    """Parse the canonical format into a Circuit, preserving record order."""
    grid = None
    cells: List[Cell] = []
    pins: List[Pin] = []
    raw_nets: List[Tuple[str, Tuple[int, ...], int]] = []
    cell_ids = set()
    net_ids = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        tag, args = tokens[0].upper(), tokens[1:]
        if tag == "GRID":
            if grid is not None:
                raise ParseError("duplicate GRID record", lineno)
            if len(args) != 6:
                raise ParseError(f"GRID takes 6 fields, got {len(args)}", lineno)
            nx = _int(args[0], "nx", lineno)
            ny = _int(args[1], "ny", lineno)
            cw = _num(args[2], "cell_w", lineno)
            ch = _num(args[3], "cell_h", lineno)
            cap_h = _num(args[4], "cap_h", lineno)
            cap_v = _num(args[5], "cap_v", lineno)
            if nx < 1 or ny < 1:
                raise ParseError("grid dimensions must be >= 1", lineno)
            if cw <= 0 or ch <= 0:
                raise NegativeDimensionError("G-cell size must be positive", lineno)
            if cap_h < 0 or cap_v < 0:
                raise NegativeDimensionError("capacities must be >= 0", lineno)
            grid = GridSpec(nx, ny, cw, ch, cap_h, cap_v)
        elif tag == "CELL":
            if len(args) != 6:
                raise ParseError(f"CELL takes 6 fields, got {len(args)}", lineno)
            cid, kind_tok = args[0], args[1]
            if cid in cell_ids:
                raise DuplicateIdError(f"duplicate cell id {cid!r}", lineno)
            kind = _KIND_ALIASES.get(kind_tok.lower())
            if kind is None:
                raise ParseError(f"unknown cell kind {kind_tok!r}", lineno)
            x = _num(args[2], "x", lineno)
            y = _num(args[3], "y", lineno)
            w = _num(args[4], "w", lineno)
            h = _num(args[5], "h", lineno)
            if w < 0 or h < 0:
                raise NegativeDimensionError(f"cell {cid!r} has negative size", lineno)
            cell_ids.add(cid)
            cells.append(Cell(cid, kind, x, y, w, h))
        elif tag == "PIN":
            if len(args) != 3:
                raise ParseError(f"PIN takes 3 fields, got {len(args)}", lineno)
            pins.append(Pin(args[0], _num(args[1], "dx", lineno), _num(args[2], "dy", lineno)))
        elif tag == "NET":
            if len(args) < 2:
                raise ParseError("NET needs an id and at least one pin index", lineno)
            nid = args[0]
            if nid in net_ids:
                raise DuplicateIdError(f"duplicate net id {nid!r}", lineno)
            net_ids.add(nid)
            idxs = tuple(_int(tok, "pin index", lineno) for tok in args[1:])
            raw_nets.append((nid, idxs, lineno))
        else:
            raise ParseError(f"unknown record type {tokens[0]!r}", lineno)

    if grid is None:
        raise ParseError("missing GRID record")
    for i, pin in enumerate(pins):
        if pin.cell_id not in cell_ids:
            raise DanglingPinError(f"pin {i} references unknown cell {pin.cell_id!r}")
    nets = []
    for nid, idxs, lineno in raw_nets:
        for idx in idxs:
            if not 0 <= idx < len(pins):
                raise DanglingPinError(f"net {nid!r} references unknown pin index {idx}", lineno)
        nets.append(Net(nid, idxs))
    return Circuit(grid, tuple(cells), tuple(pins), tuple(nets))


def serialize_circuit(circuit: Circuit) -> str:
    """Inverse of parse_circuit; round-trips the data model exactly."""
    g = circuit.grid
    lines = [f"GRID {g.nx} {g.ny} {g.cell_w!r} {g.cell_h!r} {g.cap_h!r} {g.cap_v!r}"]
    for c in circuit.cells:
        lines.append(f"CELL {c.id} {_KIND_SHORT[c.kind]} {c.x!r} {c.y!r} {c.w!r} {c.h!r}")
    for p in circuit.pins:
        lines.append(f"PIN {p.cell_id} {p.dx!r} {p.dy!r}")
    for n in circuit.nets:
        lines.append("NET " + n.id + " " + " ".join(str(i) for i in n.pins))
    return "\n".join(lines) + "\n"


def pin_position(circuit: Circuit, pin: Pin) -> Tuple[float, float]:
    """Absolute pin coordinate: cell origin plus offset."""
    cell = circuit.cell_by_id(pin.cell_id)
    return (cell.x + pin.dx, cell.y + pin.dy)


def net_bounding_box(circuit: Circuit, net: Net) -> BBox:
    """Minimal axis-aligned rectangle containing all pin positions of the net."""
    if not net.pins:
        raise ValueError(f"net {net.id!r} has no pins")
    index = _cell_index(circuit)
    xs = []
    ys = []
    for pi in net.pins:
        pin = circuit.pins[pi]
        cell = index[pin.cell_id]
        xs.append(cell.x + pin.dx)
        ys.append(cell.y + pin.dy)
    return BBox(min(xs), min(ys), max(xs), max(ys))


def validate(circuit: Circuit) -> List[str]:
    """Collect every invariant violation; empty list means valid."""
    report: List[str] = []
    g = circuit.grid
    if g.nx < 1 or g.ny < 1:
        report.append(f"grid dimensions must be >= 1, got {g.nx}x{g.ny}")
    if g.cell_w <= 0 or g.cell_h <= 0:
        report.append("G-cell size must be positive")
    if g.cap_h < 0 or g.cap_v < 0:
        report.append("capacities must be >= 0")

    seen_cells = set()
    index: Dict[str, Cell] = {}
    for c in circuit.cells:
        if c.id in seen_cells:
            report.append(f"duplicate cell id {c.id!r}")
        seen_cells.add(c.id)
        index[c.id] = c
        if c.w < 0 or c.h < 0:
            report.append(f"cell {c.id!r} has negative size")
        if c.kind not in (MOVABLE, TERMINAL):
            report.append(f"cell {c.id!r} has unknown kind {c.kind!r}")
        if c.x < 0 or c.y < 0 or c.x + c.w > g.width or c.y + c.h > g.height:
            report.append(f"cell {c.id!r} footprint outside grid extent")

    for i, p in enumerate(circuit.pins):
        cell = index.get(p.cell_id)
        if cell is None:
            report.append(f"pin {i} references unknown cell {p.cell_id!r}")
            continue
        if not (0 <= p.dx <= cell.w and 0 <= p.dy <= cell.h):
            report.append(f"pin {i} offset outside cell {p.cell_id!r}")
            continue
        px, py = cell.x + p.dx, cell.y + p.dy
        if not (0 <= px <= g.width and 0 <= py <= g.height):
            report.append(f"pin {i} position outside grid extent")

    seen_nets = set()
    for n in circuit.nets:
        if n.id in seen_nets:
            report.append(f"duplicate net id {n.id!r}")
        seen_nets.add(n.id)
        if len(n.pins) < 1:
            report.append(f"net {n.id!r} has no pins")
        for idx in n.pins:
            if not 0 <= idx < len(circuit.pins):
                report.append(f"net {n.id!r} references unknown pin index {idx}")
    return report
