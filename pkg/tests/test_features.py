import numpy as np

from conftest import make_circuit
from lhnn.features import (
    GCELL_CHANNELS,
    GNET_CHANNELS,
    assemble_gcell_features,
    assemble_gnet_features,
    net_density_maps,
    pin_density_map,
    recover_by_message_passing,
    rudy_map,
    terminal_mask,
    write_feature_csv,
    write_pgm,
)
from lhnn.lhgraph import GNet, build_lhgraph, gnet_from_net
from lhnn.netlist import TERMINAL, Cell, GridSpec

GRID = GridSpec(4, 4, 1.0, 1.0, 1.0, 1.0)


def test_channel_order_contract():
    assert GCELL_CHANNELS == ("net_density_h", "net_density_v", "pin_density", "terminal_mask")
    assert GNET_CHANNELS == ("span_v", "span_h", "npin", "area")


def test_net_density_values():
    g1 = GNet("a", (0, 1, 4, 5), span_h=2, span_v=2, npin=3)
    dens_h, dens_v = net_density_maps([g1], GRID)
    assert np.all(dens_h.reshape(-1)[[0, 1, 4, 5]] == 0.5)
    assert dens_h.sum() == g1.span_h  # total mass property
    assert np.all(dens_v.reshape(-1)[[0, 1, 4, 5]] == 0.5)
    # overlapping span_v=2 and span_v=4 nets: 0.5 + 0.25 on the overlap
    g2 = GNet("b", (0, 4, 8, 12), span_h=1, span_v=4, npin=2)
    dens_h, _ = net_density_maps([g1, g2], GRID)
    assert dens_h[0, 0] == 0.75


def test_rudy_and_pin_density_values():
    g = GNet("a", (0, 1, 2, 4, 5, 6), span_h=3, span_v=2, npin=4)
    r = rudy_map([g], GRID)
    assert np.isclose(r[0, 0], 10.0 / 3.0)
    single = GNet("b", (7,), span_h=1, span_v=1, npin=2)
    assert rudy_map([single], GRID)[1, 3] == 4.0
    p = pin_density_map([GNet("c", (0, 1, 2, 4, 5, 6), 3, 2, 6)], GRID)
    assert np.all(p.reshape(-1)[[0, 1, 2, 4, 5, 6]] == 1.0)


def test_density_additivity():
    gnets = [
        GNet("a", (0, 1), span_h=2, span_v=1, npin=2),
        GNet("b", (5, 6, 9, 10), span_h=2, span_v=2, npin=3),
    ]
    for fn in (lambda g: net_density_maps(g, GRID)[0], lambda g: rudy_map(g, GRID)):
        combined = fn(gnets)
        assert np.array_equal(combined, fn(gnets[:1]) + fn(gnets[1:]))


def test_terminal_mask():
    term = Cell("t0", TERMINAL, 2.0, 3.0, 1.0, 1.0)
    c = make_circuit(4, 4, [], extra_cells=[term])
    plane = terminal_mask(c)
    assert plane.sum() == 1.0 and plane[3, 2] == 1.0
    # spanning 2x2 G-cells -> four ones
    term2 = Cell("t1", TERMINAL, 0.5, 0.5, 1.0, 1.0)
    c2 = make_circuit(4, 4, [], extra_cells=[term2])
    plane2 = terminal_mask(c2)
    assert plane2.sum() == 4.0 and np.all(plane2[:2, :2] == 1.0)
    # zero-area terminals and nets do not affect the mask
    assert np.array_equal(plane, terminal_mask(make_circuit(4, 4, [[(0, 0), (3, 3)]],
                                                            extra_cells=[term])))


def test_recovery_equivalence_exact():
    rng = np.random.default_rng(3)
    nets = []
    for _ in range(12):
        k = int(rng.integers(2, 5))
        nets.append([(rng.uniform(0, 8), rng.uniform(0, 8)) for _ in range(k)])
    graph = build_lhgraph(make_circuit(8, 8, nets), filter_fraction=1.0)
    vn = graph.Vn  # columns: span_v, span_h, npin, area
    checks = [
        (1.0 / vn[:, 0], net_density_maps(graph.gnets, graph.grid)[0]),
        (1.0 / vn[:, 1], net_density_maps(graph.gnets, graph.grid)[1]),
        (vn[:, 2] * (vn[:, 1] + vn[:, 0]) / vn[:, 3], rudy_map(graph.gnets, graph.grid)),
        (vn[:, 2] / vn[:, 3], pin_density_map(graph.gnets, graph.grid)),
    ]
    for payload, plane in checks:
        rec = recover_by_message_passing(graph, payload)
        assert np.max(np.abs(rec - plane.reshape(-1))) < 1e-9
    assert np.all(recover_by_message_passing(graph, np.zeros(graph.n_gnets)) == 0.0)


def test_assembled_matrices():
    c = make_circuit(4, 4, [[(0.5, 0.5), (2.5, 1.5), (1.5, 0.5)]])
    gnets = [gnet_from_net(c, n) for n in c.nets]
    vc = assemble_gcell_features(c, gnets)
    assert vc.shape == (16, 4)
    assert np.array_equal(vc[:, 0].reshape(4, 4), net_density_maps(gnets, c.grid)[0])
    vn = assemble_gnet_features(gnets)
    assert vn.tolist() == [[2.0, 3.0, 3.0, 6.0]]
    assert assemble_gnet_features([]).shape == (0, 4)
    assert np.all(vn[:, 3] == vn[:, 0] * vn[:, 1])


def test_csv_and_pgm_export(tmp_path):
    c = make_circuit(2, 2, [[(0.5, 0.5), (1.5, 1.5)]])
    graph = build_lhgraph(c, filter_fraction=1.0)
    csv = tmp_path / "f.csv"
    write_feature_csv(str(csv), graph.Vc, GCELL_CHANNELS)
    lines = csv.read_text().splitlines()
    assert lines[0] == "index," + ",".join(GCELL_CHANNELS)
    assert len(lines) == 1 + graph.n_gcells

    pgm = tmp_path / "m.pgm"
    lo, hi = write_pgm(str(pgm), graph.Vc[:, 0].reshape(2, 2))
    body = pgm.read_text().splitlines()
    assert body[0] == "P2" and body[1] == "2 2" and body[2] == "255"
    assert lo <= hi
