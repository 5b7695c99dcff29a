"""Labels, metrics, dataset splitting, and the synthetic circuit generator
with its deterministic pseudo-router demand oracle."""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lhgraph import GNet, _span_indices, gnet_from_net
from .netlist import MOVABLE, TERMINAL, Cell, Circuit, GridSpec, Net, Pin, pin_position


@dataclass(frozen=True)
class LabeledMaps:
    demand_h: np.ndarray  # (ny, nx) routing tracks used, horizontal
    demand_v: np.ndarray
    cong_h: np.ndarray  # binary: demand strictly exceeds capacity
    cong_v: np.ndarray


def congestion_labels(
    demand_h: np.ndarray, demand_v: np.ndarray, grid: GridSpec
) -> Tuple[np.ndarray, np.ndarray]:
    """Strict exceedance: demand equal to capacity is not congested."""
    return (
        (demand_h > grid.cap_h).astype(float),
        (demand_v > grid.cap_v).astype(float),
    )


def f1_and_acc(
    pred: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> Tuple[float, float, Dict[str, int]]:
    """Micro F1 and accuracy after binarizing probabilities at threshold."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {labels.shape}")
    hard = pred > threshold
    pos = labels > 0.5
    tp = int(np.sum(hard & pos))
    fp = int(np.sum(hard & ~pos))
    fn = int(np.sum(~hard & pos))
    tn = int(np.sum(~hard & ~pos))
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom > 0 else 0.0
    total = tp + fp + fn + tn
    acc = (tp + tn) / total if total else 0.0
    return f1, acc, {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


@dataclass(frozen=True)
class SplitSpec:
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    train_rate: float
    test_rate: float


def search_split(rates: Dict[str, float], n_train: int, n_test: int) -> SplitSpec:
    """Exhaustive split minimizing the train/test mean congestion-rate gap.

    Ties break toward the lexicographically smallest train id set.
    """
    ids = sorted(rates)
    if len(ids) != n_train + n_test:
        raise ValueError(f"corpus has {len(ids)} circuits, split wants {n_train}+{n_test}")
    if n_train < 1 or n_test < 1:
        raise ValueError("both sides of the split must be nonempty")
    best: Optional[SplitSpec] = None
    best_diff = float("inf")
    for train in itertools.combinations(ids, n_train):
        test = tuple(i for i in ids if i not in train)
        tr = float(np.mean([rates[i] for i in train]))
        te = float(np.mean([rates[i] for i in test]))
        diff = abs(tr - te)
        if diff < best_diff:
            best_diff = diff
            best = SplitSpec(train, test, tr, te)
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Synthetic circuits


class InfeasibleSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    nx: int = 16
    ny: int = 16
    cell_w: float = 1.0
    cell_h: float = 1.0
    cap_h: float = 2.0
    cap_v: float = 2.0
    n_cells: int = 60
    n_nets: int = 40
    pin_lo: int = 2
    pin_hi: int = 5
    terminal_fraction: float = 0.1
    net_locality: Optional[float] = 5.0  # pin-cluster radius in length units; None = global
    net_aspect: float = 1.0  # vertical squash of the pin cluster (1 = isotropic)
    n_channels: int = 0  # routing-channel rows/cols for ribbons and decoys
    n_ribbon: int = 0  # single-line nets packed into the channels
    n_decoy: int = 0  # two-line nets anchored on a channel (3 pins) + 1 stray pin
    ribbon_len: float = 7.0  # extent of a ribbon along its channel, in G-cells
    seed: int = 0


def gen_synthetic(spec: SynthSpec) -> Circuit:
    """Seeded generator: uniform cell placement, clustered random nets.

    With n_channels > 0 the generator first picks that many "channel" rows
    and columns and lays two kinds of structured nets on them before the
    n_nets diffuse cluster nets:

    * ribbons: all pins snapped inside one channel line, so the net's
      bounding box is one G-cell thin and its demand lands on that line;
    * decoys: three pins snapped on a channel line plus one stray pin on
      an adjacent line. The low-median pin stays on the channel, so the
      demand still lands there, but the bounding box — and hence the
      density payload — is spread over both lines.

    Decoys make the local density features ambiguous: half of each decoy
    payload lands on a line that never receives its demand. Recovering the
    per-cell demand exactly requires counting the covering G-nets by their
    composition (thin ribbons vs two-line decoys vs diffuse fill), which is
    relational information that density-style local features cannot express.
    """
    rng = np.random.default_rng(spec.seed)
    width = spec.nx * spec.cell_w
    height = spec.ny * spec.cell_h
    n_term = int(round(spec.terminal_fraction * spec.n_cells))
    if n_term > spec.nx * spec.ny:
        raise InfeasibleSpecError("more terminal cells than grid area")
    if (spec.n_ribbon or spec.n_decoy) and not spec.n_channels:
        raise InfeasibleSpecError("ribbons and decoys need n_channels > 0")
    if spec.n_channels > min(spec.nx, spec.ny):
        raise InfeasibleSpecError("more channels than grid lines")
    if spec.n_decoy and min(spec.nx, spec.ny) < 2:
        raise InfeasibleSpecError("decoy nets need at least a 2x2 grid")

    cells: List[Cell] = []
    for i in range(spec.n_cells):
        w = rng.uniform(0.3, 1.0) * spec.cell_w
        h = rng.uniform(0.3, 1.0) * spec.cell_h
        x = rng.uniform(0.0, width - w)
        y = rng.uniform(0.0, height - h)
        cells.append(Cell(f"c{i}", MOVABLE, x, y, w, h))
    if n_term:
        term_idx = rng.choice(spec.n_cells, size=n_term, replace=False)
        for i in term_idx:
            cells[i] = dataclasses.replace(cells[i], kind=TERMINAL)

    centers = np.array([(c.x + c.w / 2, c.y + c.h / 2) for c in cells])
    pins: List[Pin] = []
    nets: List[Net] = []
    counter = itertools.count()

    def add_pin(cell: Cell, band: Optional[Tuple[float, float]], axis: str) -> int:
        """Random pin in the cell, snapped into band along the given axis."""
        dx = rng.uniform(0.0, cell.w)
        dy = rng.uniform(0.0, cell.h)
        if band is not None:
            if axis == "y":
                dy = (max(cell.y, band[0]) + min(cell.y + cell.h, band[1])) / 2 - cell.y
            else:
                dx = (max(cell.x, band[0]) + min(cell.x + cell.w, band[1])) / 2 - cell.x
        pins.append(Pin(cell.id, dx, dy))
        return len(pins) - 1

    if spec.n_channels:
        chan_rows = rng.choice(spec.ny, size=spec.n_channels, replace=False)
        chan_cols = rng.choice(spec.nx, size=spec.n_channels, replace=False)
        x0s = np.array([c.x for c in cells])
        x1s = np.array([c.x + c.w for c in cells])
        y0s = np.array([c.y for c in cells])
        y1s = np.array([c.y + c.h for c in cells])

        def band_cells(axis: str, band: Tuple[float, float], win: Optional[Tuple[float, float]]):
            if axis == "y":
                sel = np.flatnonzero((y0s < band[1]) & (y1s > band[0]))
                if win is not None:
                    narrowed = sel[(x1s[sel] > win[0]) & (x0s[sel] < win[1])]
                    sel = narrowed if len(narrowed) else sel
            else:
                sel = np.flatnonzero((x0s < band[1]) & (x1s > band[0]))
                if win is not None:
                    narrowed = sel[(y1s[sel] > win[0]) & (y0s[sel] < win[1])]
                    sel = narrowed if len(narrowed) else sel
            return sel

        for _ in range(spec.n_ribbon):
            npin = int(rng.integers(spec.pin_lo, spec.pin_hi + 1))
            if rng.random() < 0.5:  # horizontal ribbon on a channel row
                axis, unit, extent = "y", spec.cell_h, width
                line = chan_rows[int(rng.integers(spec.n_channels))]
            else:
                axis, unit, extent = "x", spec.cell_w, height
                line = chan_cols[int(rng.integers(spec.n_channels))]
            band = (line * unit, (line + 1) * unit)
            w0 = rng.uniform(0.0, max(extent - spec.ribbon_len * unit, 0.0))
            cand = band_cells(axis, band, (w0, w0 + spec.ribbon_len * unit))
            if len(cand) < 1:
                continue
            idxs = tuple(
                add_pin(cells[int(ci)], band, axis)
                for ci in rng.choice(cand, size=npin, replace=True)
            )
            nets.append(Net(f"n{next(counter)}", idxs))

        for _ in range(spec.n_decoy):
            if rng.random() < 0.5:
                axis, unit, n_lines = "y", spec.cell_h, spec.ny
                line = int(chan_rows[int(rng.integers(spec.n_channels))])
            else:
                axis, unit, n_lines = "x", spec.cell_w, spec.nx
                line = int(chan_cols[int(rng.integers(spec.n_channels))])
            side = 1 if (rng.random() < 0.5 and line + 1 < n_lines) or line == 0 else -1
            band = (line * unit, (line + 1) * unit)
            stray_band = (band[0] + side * unit, band[1] + side * unit)
            cand = band_cells(axis, band, None)
            cand_stray = band_cells(axis, stray_band, None)
            if len(cand) < 1 or len(cand_stray) < 1:
                continue
            idxs = tuple(
                add_pin(cells[int(ci)], band, axis)
                for ci in rng.choice(cand, size=3, replace=True)
            ) + (add_pin(cells[int(rng.choice(cand_stray))], stray_band, axis),)
            nets.append(Net(f"n{next(counter)}", idxs))

    for _ in range(spec.n_nets):
        npin = int(rng.integers(spec.pin_lo, spec.pin_hi + 1))
        if spec.net_locality is not None:
            anchor = int(rng.integers(spec.n_cells))
            dx, dy = (centers[:, 0] - centers[anchor, 0]), (centers[:, 1] - centers[anchor, 1])
            radius = rng.uniform(0.3, 1.0) * spec.net_locality
            dist = np.hypot(dx / radius, dy / (radius * spec.net_aspect))
            candidates = np.flatnonzero(dist <= 1.0)
            if len(candidates) < 2:
                candidates = np.arange(spec.n_cells)
        else:
            candidates = np.arange(spec.n_cells)
        chosen = rng.choice(candidates, size=npin, replace=True)
        idxs = tuple(add_pin(cells[int(ci)], None, "y") for ci in chosen)
        nets.append(Net(f"n{next(counter)}", idxs))

    grid = GridSpec(spec.nx, spec.ny, spec.cell_w, spec.cell_h, spec.cap_h, spec.cap_v)
    return Circuit(grid, tuple(cells), tuple(pins), tuple(nets))


# ---------------------------------------------------------------------------
# Demand oracle


def _median_low(values: Sequence[float]) -> float:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def oracle_demand(circuit: Circuit, gnets: Sequence[GNet]) -> LabeledMaps:
    """Deterministic pseudo-router.

    Each G-net routes one unit of horizontal demand along the row of its
    median pin y across its full horizontal span, and one unit of vertical
    demand along the column of its median pin x across its full vertical
    span. Congestion is the strict-exceedance threshold of the grid caps.
    """
    g = circuit.grid
    demand_h = np.zeros((g.ny, g.nx))
    demand_v = np.zeros((g.ny, g.nx))
    nets_by_id = {net.id: net for net in circuit.nets}
    for gnet in gnets:
        net = nets_by_id[gnet.net_id]
        positions = [pin_position(circuit, circuit.pins[i]) for i in net.pins]
        xs = [p[0] for p in positions]
        ys = [p[1] for p in positions]
        cols = sorted({i % g.nx for i in gnet.cells})
        rows = sorted({i // g.nx for i in gnet.cells})
        med_row = _span_indices(_median_low(ys), _median_low(ys), g.cell_h, g.ny)[0]
        med_col = _span_indices(_median_low(xs), _median_low(xs), g.cell_w, g.nx)[0]
        med_row = min(max(med_row, rows[0]), rows[-1])
        med_col = min(max(med_col, cols[0]), cols[-1])
        demand_h[med_row, cols[0] : cols[-1] + 1] += 1.0
        demand_v[rows[0] : rows[-1] + 1, med_col] += 1.0
    cong_h, cong_v = congestion_labels(demand_h, demand_v, g)
    return LabeledMaps(demand_h, demand_v, cong_h, cong_v)


def tune_capacity(demand: np.ndarray, target_rate: float) -> float:
    """Capacity whose strict-exceedance congestion rate is closest to target."""
    best_cap = float(demand.max())
    best_err = float("inf")
    for cap in np.unique(demand):
        rate = float(np.mean(demand > cap))
        err = abs(rate - target_rate)
        if err < best_err:
            best_err = err
            best_cap = float(cap)
    return best_cap


def synth_instance(
    spec: SynthSpec, target_rate: Optional[float] = None
) -> Tuple[Circuit, LabeledMaps]:
    """Generate a circuit plus oracle labels, optionally tuning capacities
    so each channel's congestion rate lands near target_rate."""
    circuit = gen_synthetic(spec)
    gnets = [gnet_from_net(circuit, net) for net in circuit.nets]
    maps = oracle_demand(circuit, gnets)
    if target_rate is not None:
        cap_h = tune_capacity(maps.demand_h, target_rate)
        cap_v = tune_capacity(maps.demand_v, target_rate)
        grid = dataclasses.replace(circuit.grid, cap_h=cap_h, cap_v=cap_v)
        circuit = dataclasses.replace(circuit, grid=grid)
        cong_h, cong_v = congestion_labels(maps.demand_h, maps.demand_v, grid)
        maps = LabeledMaps(maps.demand_h, maps.demand_v, cong_h, cong_v)
    return circuit, maps


def congestion_rate(maps: LabeledMaps, channel_mode: str = "uni") -> float:
    if channel_mode == "uni":
        return float(np.mean(maps.cong_h))
    return float(np.mean(np.stack([maps.cong_h, maps.cong_v])))


# ---------------------------------------------------------------------------
# Label files


def write_labels(path: str, maps: LabeledMaps, grid: GridSpec) -> None:
    ny, nx = maps.demand_h.shape
    with open(path, "w") as fh:
        fh.write(f"# grid {nx} {ny} cap_h {grid.cap_h!r} cap_v {grid.cap_v!r}\n")
        fh.write("index,demand_h,demand_v,cong_h,cong_v\n")
        dh, dv = maps.demand_h.reshape(-1), maps.demand_v.reshape(-1)
        ch, cv = maps.cong_h.reshape(-1), maps.cong_v.reshape(-1)
        for i in range(dh.size):
            fh.write(f"{i},{dh[i]:.9g},{dv[i]:.9g},{int(ch[i])},{int(cv[i])}\n")


def load_labels(path: str) -> Tuple[LabeledMaps, int, int]:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 3 or header[0] != "#" or header[1] != "grid":
            raise ValueError(f"{path}: missing grid header")
        nx, ny = int(header[2]), int(header[3])
        fh.readline()  # column header
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} rows, got {len(rows)}")
    data = np.array([[float(v) for v in row[1:]] for row in rows])
    return (
        LabeledMaps(
            data[:, 0].reshape(ny, nx),
            data[:, 1].reshape(ny, nx),
            data[:, 2].reshape(ny, nx),
            data[:, 3].reshape(ny, nx),
        ),
        nx,
        ny,
    )
