import dataclasses

import pytest

from lhnn.netlist import (
    MOVABLE,
    TERMINAL,
    Cell,
    Circuit,
    DanglingPinError,
    DuplicateIdError,
    GridSpec,
    Net,
    NegativeDimensionError,
    ParseError,
    Pin,
    net_bounding_box,
    parse_circuit,
    pin_position,
    serialize_circuit,
    validate,
)

DOC = """\
# tiny example
GRID 4 4 1.0 1.0 2.0 2.0
CELL a x 0.25 0.25 0.5 0.5
CELL b t 2.0 2.0 1.0 1.0
PIN a 0.1 0.2
PIN b 0.5 0.5
PIN a 0.0 0.0
NET n1 0 1
NET n2 2
"""


def test_parse_basic():
    c = parse_circuit(DOC)
    assert c.grid == GridSpec(4, 4, 1.0, 1.0, 2.0, 2.0)
    assert [cell.kind for cell in c.cells] == [MOVABLE, TERMINAL]
    assert len(c.pins) == 3
    assert c.nets[0].pins == (0, 1)
    assert c.nets[1].pins == (2,)


def test_round_trip_identity():
    c = parse_circuit(DOC)
    text = serialize_circuit(c)
    assert parse_circuit(text) == c
    # serialize is stable under a second round trip (byte identity)
    assert serialize_circuit(parse_circuit(text)) == text


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_circuit("CELL a x 0 0 1 1\n")  # missing GRID
    with pytest.raises(ParseError):
        parse_circuit("GRID 4 4 1 1 2 2\nGRID 4 4 1 1 2 2\n")
    with pytest.raises(DuplicateIdError):
        parse_circuit("GRID 4 4 1 1 2 2\nCELL a x 0 0 1 1\nCELL a x 0 0 1 1\n")
    with pytest.raises(DuplicateIdError):
        parse_circuit(
            "GRID 4 4 1 1 2 2\nCELL a x 0 0 1 1\nPIN a 0 0\nNET n 0\nNET n 0\n"
        )
    with pytest.raises(DanglingPinError):
        parse_circuit("GRID 4 4 1 1 2 2\nCELL a x 0 0 1 1\nPIN ghost 0 0\n")
    with pytest.raises(DanglingPinError):
        parse_circuit("GRID 4 4 1 1 2 2\nCELL a x 0 0 1 1\nPIN a 0 0\nNET n 5\n")
    with pytest.raises(NegativeDimensionError):
        parse_circuit("GRID 4 4 1 1 2 2\nCELL a x 0 0 -1 1\n")
    with pytest.raises(ParseError):
        parse_circuit("GRID 4 4 1 1 2 2\nBOGUS 1 2 3\n")
    with pytest.raises(ParseError):
        parse_circuit("GRID four 4 1 1 2 2\n")


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as exc:
        parse_circuit("GRID 4 4 1 1 2 2\nCELL a x 0 0 1\n")
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


def test_validate_clean_and_violations():
    c = parse_circuit(DOC)
    assert validate(c) == []

    bad_cell = dataclasses.replace(c.cells[0], w=-1.0)
    broken = dataclasses.replace(c, cells=(bad_cell,) + c.cells[1:])
    report = validate(broken)
    assert any("negative size" in r for r in report)

    bad_pin = Pin("a", 5.0, 0.0)  # offset beyond the 0.5-wide cell
    broken = dataclasses.replace(c, pins=(bad_pin,) + c.pins[1:])
    report = validate(broken)
    assert sum("offset outside cell" in r for r in report) == 1


def test_net_bounding_box_permutation_invariant():
    c = parse_circuit(DOC)
    net = c.nets[0]
    flipped = Net(net.id, net.pins[::-1])
    assert net_bounding_box(c, net) == net_bounding_box(c, flipped)


def test_pin_position_translation_equivariant():
    c = parse_circuit(DOC)
    tx, ty = 1.5, 0.5
    moved_cells = tuple(
        dataclasses.replace(cell, x=cell.x + tx, y=cell.y + ty) for cell in c.cells
    )
    moved = dataclasses.replace(c, cells=moved_cells)
    for pin in c.pins:
        x0, y0 = pin_position(c, pin)
        x1, y1 = pin_position(moved, pin)
        assert (x1 - x0, y1 - y0) == pytest.approx((tx, ty))


def test_bounding_box_requires_pins():
    c = parse_circuit(DOC)
    with pytest.raises(ValueError):
        net_bounding_box(c, Net("empty", ()))


def test_serializes_repr_floats_exactly():
    c = parse_circuit("GRID 3 3 0.1 0.30000000000000004 1.5 2.25\n")
    assert parse_circuit(serialize_circuit(c)).grid == c.grid
