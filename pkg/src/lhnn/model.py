"""LHNN: feature generation, hypergraph and lattice message passing,
joint demand-regression / congestion-classification heads, and training.

Block wiring follows the three-stage layout: a FeatureGen block builds
initial embeddings, stacked HyperMP blocks alternate cell-to-net and
net-to-cell aggregation, and LatticeMP blocks propagate over the
4-neighborhood. The regression branch's final hidden state feeds the
classification branch.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import tensorcore as tc
from .lhgraph import LHGraph, normalized_operators
from .sparse import SparseMatrix
from .tensorcore import Adam, Tape, Tensor

LOG_FLOOR = 1e-12


class ConfigError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class LHNNConfig:
    hidden_dim: int = 32
    n_hypermp: int = 2
    n_latticemp_encode: int = 1
    n_latticemp_joint: int = 2
    gamma: float = 0.7
    learning_rate: float = 2e-3
    learning_rate_final: float = 5e-4
    epochs: int = 200
    seed: int = 0
    use_featuregen_edges: bool = True
    use_hypermp_edges: bool = True
    use_latticemp_edges: bool = True
    use_regression_head: bool = True
    use_gcell_features: bool = True
    channel_mode: str = "uni"  # uni | duo
    sampling: bool = False
    fan_featuregen: int = 6
    fan_hypermp: int = 3
    fan_latticemp: int = 2
    gnet_filter_fraction: float = 0.0025
    mlp_depth: int = 4  # baseline only

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")
        for name in ("n_hypermp", "n_latticemp_encode", "n_latticemp_joint", "epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.channel_mode not in ("uni", "duo"):
            raise ConfigError(f"channel_mode must be uni or duo, got {self.channel_mode!r}")
        if self.learning_rate <= 0 or self.learning_rate_final <= 0:
            raise ConfigError("learning rates must be positive")

    @property
    def n_channels(self) -> int:
        return 1 if self.channel_mode == "uni" else 2


CONFIG_FORMAT_VERSION = 1


def save_config(path: str, config: LHNNConfig) -> None:
    with open(path, "w") as fh:
        fh.write(f"format = {CONFIG_FORMAT_VERSION}\n")
        for f in dataclasses.fields(config):
            fh.write(f"{f.name} = {getattr(config, f.name)}\n")


def load_config(path: str) -> LHNNConfig:
    values: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key] = val
    values.pop("format", None)
    return config_from_strings(values)


def config_from_strings(values: Dict[str, str]) -> LHNNConfig:
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(LHNNConfig)}
    for key, val in values.items():
        f = fields.get(key)
        if f is None:
            raise ConfigError(f"unknown config key {key!r}")
        if f.type == "bool" or isinstance(f.default, bool):
            if val.lower() in ("true", "1", "yes"):
                kwargs[key] = True
            elif val.lower() in ("false", "0", "no"):
                kwargs[key] = False
            else:
                raise ConfigError(f"{key}: expected boolean, got {val!r}")
        elif isinstance(f.default, int):
            kwargs[key] = int(val)
        elif isinstance(f.default, float):
            kwargs[key] = float(val)
        else:
            kwargs[key] = val
    return LHNNConfig(**kwargs)


# ---------------------------------------------------------------------------
# Graph operators (full and neighbor-sampled)


@dataclass
class GraphOps:
    """CSR message operators, one per relation/block pairing."""

    g_nc_fg: sp.csr_matrix  # net -> cell, sum, FeatureGen
    g_cn: sp.csr_matrix  # cell -> net, mean, HyperMP
    g_nc_mp: sp.csr_matrix  # net -> cell, sum, HyperMP
    a_norm: sp.csr_matrix  # cell -> cell, mean, LatticeMP
    n_gcells: int
    n_gnets: int


def full_graph_ops(graph: LHGraph) -> GraphOps:
    g_nc, g_cn, a_norm = normalized_operators(graph)
    h_csr = g_nc.to_csr()
    return GraphOps(h_csr, g_cn.to_csr(), h_csr, a_norm.to_csr(), graph.n_gcells, graph.n_gnets)


def _sample_rows(
    mat: SparseMatrix, fan: int, rng: np.random.Generator, renormalize: bool
) -> SparseMatrix:
    by_row: Dict[int, List[int]] = {}
    for r, c, _ in mat.entries:
        by_row.setdefault(r, []).append(c)
    entries = []
    for r in sorted(by_row):
        cols = by_row[r]
        if len(cols) > fan:
            cols = sorted(rng.choice(cols, size=fan, replace=False).tolist())
        value = 1.0 / len(cols) if renormalize else 1.0
        entries.extend((r, c, value) for c in cols)
    return SparseMatrix.from_entries(mat.rows, mat.cols, entries)


def sample_neighbors(
    graph: LHGraph,
    fanouts: Optional[Dict[str, int]] = None,
    seed: int = 0,
) -> GraphOps:
    """Uniform without-replacement incoming-edge sampling per destination.

    Mean aggregations are renormalized over the sampled set; the sum
    aggregation on the net-to-cell relation keeps unit weights.
    """
    fans = {"featuregen": 6, "hypermp": 3, "latticemp": 2}
    if fanouts:
        fans.update(fanouts)
    rng = np.random.default_rng(seed)
    h = graph.H
    g_nc_fg = _sample_rows(h, fans["featuregen"], rng, renormalize=False)
    g_cn = _sample_rows(h.transpose(), fans["hypermp"], rng, renormalize=True)
    g_nc_mp = _sample_rows(h, fans["hypermp"], rng, renormalize=False)
    a_norm = _sample_rows(graph.A, fans["latticemp"], rng, renormalize=True)
    return GraphOps(
        g_nc_fg.to_csr(),
        g_cn.to_csr(),
        g_nc_mp.to_csr(),
        a_norm.to_csr(),
        graph.n_gcells,
        graph.n_gnets,
    )


# ---------------------------------------------------------------------------
# Parameters


D_CELL = 4
D_NET = 4


def _add_linear(params, rng, prefix, d_in, d_out):
    params[f"{prefix}.w"] = Tensor(tc.uniform_init(rng, d_in, (d_in, d_out)), requires_grad=True)
    params[f"{prefix}.b"] = Tensor(tc.uniform_init(rng, d_in, (1, d_out)), requires_grad=True)


def _add_resmlp(params, rng, prefix, d_in, d_out):
    _add_linear(params, rng, f"{prefix}.lin1", d_in, d_out)
    _add_linear(params, rng, f"{prefix}.lin2", d_out, d_out)


def init_params(config: LHNNConfig, rng: np.random.Generator) -> Dict[str, Tensor]:
    h = config.hidden_dim
    k = config.n_channels
    params: Dict[str, Tensor] = {}
    _add_resmlp(params, rng, "fg.fc", D_CELL, h)
    _add_resmlp(params, rng, "fg.fn", D_NET, h)
    _add_linear(params, rng, "fg.phi_c", 2 * h, h)
    _add_linear(params, rng, "fg.phi_n", h, h)
    for layer in range(config.n_hypermp):
        p = f"hyper.{layer}"
        _add_resmlp(params, rng, f"{p}.res_c_agg", h, h)
        _add_resmlp(params, rng, f"{p}.res_n_skip", h, h)
        _add_resmlp(params, rng, f"{p}.res_c_skip", h, h)
        _add_linear(params, rng, f"{p}.phi_n", 2 * h, h)
        _add_linear(params, rng, f"{p}.phi_c", 2 * h, h)
    for i in range(config.n_latticemp_encode):
        _add_resmlp(params, rng, f"enc.{i}.f", h, h)
        _add_linear(params, rng, f"enc.{i}.phi", h, h)
    for i in range(config.n_latticemp_joint):
        _add_resmlp(params, rng, f"reg.{i}.f", h, h)
        _add_linear(params, rng, f"reg.{i}.phi", h, h)
    _add_linear(params, rng, "reg.head", h, k)
    _add_linear(params, rng, "cls.fuse", 2 * h, h)
    for i in range(config.n_latticemp_joint):
        _add_resmlp(params, rng, f"cls.{i}.f", h, h)
        _add_linear(params, rng, f"cls.{i}.phi", h, h)
    _add_linear(params, rng, "cls.head", h, k)
    return params


def _linear(params, prefix, x, act="relu"):
    y = tc.add(tc.matmul(x, params[f"{prefix}.w"]), params[f"{prefix}.b"])
    if act == "relu":
        return tc.relu(y)
    if act == "sigmoid":
        return tc.sigmoid(y)
    return y


def _resmlp(params, prefix, x):
    h = _linear(params, f"{prefix}.lin1", x)
    y = _linear(params, f"{prefix}.lin2", h)
    skip = x if x.value.shape[1] == y.value.shape[1] else h
    return tc.add(y, skip)


def _zeros(n_rows: int, n_cols: int) -> Tensor:
    return Tensor(np.zeros((n_rows, n_cols)))


# ---------------------------------------------------------------------------
# Forward pass


@dataclass
class Prediction:
    c_cls: Tensor  # n_gcells x k congestion probabilities, strictly in (0, 1)
    c_reg: Tensor  # n_gcells x k demand estimates


def forward(
    ops: GraphOps,
    vc0: np.ndarray,
    vn0: np.ndarray,
    params: Dict[str, Tensor],
    config: LHNNConfig,
) -> Prediction:
    h = config.hidden_dim
    if params["fg.phi_c.w"].value.shape != (2 * h, h):
        raise ConfigError("params do not match config hidden_dim")
    vc0 = np.asarray(vc0, dtype=np.float64)
    if not config.use_gcell_features:
        vc0 = vc0.copy()
        vc0[:, :3] = 0.0  # keep only the terminal mask channel
    vc_in = Tensor(vc0)
    vn_in = Tensor(np.asarray(vn0, dtype=np.float64))
    nc, nn = ops.n_gcells, ops.n_gnets

    # FeatureGen
    fn_out = _resmlp(params, "fg.fn", vn_in)
    if config.use_featuregen_edges:
        agg = tc.spmm(ops.g_nc_fg, fn_out)
    else:
        agg = _zeros(nc, h)
    vc1 = _linear(params, "fg.phi_c", tc.concat_cols([_resmlp(params, "fg.fc", vc_in), agg]))
    vn1 = _linear(params, "fg.phi_n", fn_out)

    # HyperMP stack
    vc, vn = vc1, vn1
    for layer in range(config.n_hypermp):
        p = f"hyper.{layer}"
        if config.use_hypermp_edges:
            agg_n = tc.spmm(ops.g_cn, _resmlp(params, f"{p}.res_c_agg", vc))
        else:
            agg_n = _zeros(nn, h)
        vn_next = tc.add(
            _linear(params, f"{p}.phi_n", tc.concat_cols([agg_n, vn1])),
            _resmlp(params, f"{p}.res_n_skip", vn),
        )
        if config.use_hypermp_edges:
            agg_c = tc.spmm(ops.g_nc_mp, vn_next)
        else:
            agg_c = _zeros(nc, h)
        vc_next = tc.add(
            _linear(params, f"{p}.phi_c", tc.concat_cols([agg_c, vc1])),
            _resmlp(params, f"{p}.res_c_skip", vc),
        )
        vc, vn = vc_next, vn_next

    def lattice_block(prefix, x):
        if config.use_latticemp_edges:
            agg = tc.spmm(ops.a_norm, _resmlp(params, f"{prefix}.f", x))
        else:
            agg = _zeros(nc, h)
        return tc.add(_linear(params, f"{prefix}.phi", agg), x)

    for i in range(config.n_latticemp_encode):
        vc = lattice_block(f"enc.{i}", vc)

    # Joint learning phase: regression branch feeds the classification branch
    k = config.n_channels
    if config.use_regression_head:
        h_reg = vc
        for i in range(config.n_latticemp_joint):
            h_reg = lattice_block(f"reg.{i}", h_reg)
        c_reg = _linear(params, "reg.head", h_reg, act=None)
    else:
        h_reg = _zeros(nc, h)
        c_reg = _zeros(nc, k)

    h_cls = _linear(params, "cls.fuse", tc.concat_cols([vc, h_reg]))
    for i in range(config.n_latticemp_joint):
        h_cls = lattice_block(f"cls.{i}", h_cls)
    c_cls = _linear(params, "cls.head", h_cls, act="sigmoid")
    return Prediction(c_cls=c_cls, c_reg=c_reg)


# ---------------------------------------------------------------------------
# Loss


def loss_total(
    pred: Prediction,
    y_reg: np.ndarray,
    y_cls: np.ndarray,
    gamma: float,
    use_regression_head: bool = True,
) -> Tuple[Tensor, Dict[str, float]]:
    """Joint loss: MSE on demand plus gamma-weighted BCE on congestion."""
    y_cls = np.asarray(y_cls, dtype=np.float64)
    y_reg = np.asarray(y_reg, dtype=np.float64)
    if not np.all((y_cls == 0) | (y_cls == 1)):
        raise ValueError("classification labels must be binary")
    if y_cls.shape != pred.c_cls.value.shape or y_reg.shape != pred.c_reg.value.shape:
        raise ValueError("label shape mismatch")
    n_cells = y_cls.shape[0]

    weights = Tensor((1.0 - y_cls) * gamma + y_cls)
    y_t = Tensor(y_cls)
    one_minus_y = Tensor(1.0 - y_cls)
    log_c = tc.log(pred.c_cls, floor=LOG_FLOOR)
    log_1mc = tc.log(tc.sub(Tensor(np.ones_like(y_cls)), pred.c_cls), floor=LOG_FLOOR)
    ll = tc.add(tc.mul(y_t, log_c), tc.mul(one_minus_y, log_1mc))
    l_cls = tc.scale(tc.sum_all(tc.mul(weights, ll)), -1.0 / n_cells)

    if use_regression_head:
        diff = tc.sub(pred.c_reg, Tensor(y_reg))
        l_reg = tc.scale(tc.sum_all(tc.mul(diff, diff)), 1.0 / n_cells)
        total = tc.add(l_reg, l_cls)
        parts = {"loss_reg": float(l_reg.value), "loss_cls": float(l_cls.value)}
    else:
        total = l_cls
        parts = {"loss_reg": 0.0, "loss_cls": float(l_cls.value)}
    parts["loss"] = float(total.value)
    return total, parts


# ---------------------------------------------------------------------------
# Data preparation and training


@dataclass
class NormStats:
    """Per-channel z-score statistics computed on the training set."""

    vc_mean: np.ndarray
    vc_std: np.ndarray
    vn_mean: np.ndarray
    vn_std: np.ndarray

    def apply(self, vc: np.ndarray, vn: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        vc_n = (vc - self.vc_mean) / self.vc_std
        vn_n = (vn - self.vn_mean) / self.vn_std if vn.size else vn.copy()
        return vc_n, vn_n


def compute_norm_stats(graphs: Sequence[LHGraph]) -> NormStats:
    vc = np.concatenate([g.Vc for g in graphs], axis=0)
    vn_parts = [g.Vn for g in graphs if g.Vn.size]
    vn = np.concatenate(vn_parts, axis=0) if vn_parts else np.zeros((1, D_NET))
    def _stats(x):
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std < 1e-12] = 1.0
        return mean, std
    vc_mean, vc_std = _stats(vc)
    vn_mean, vn_std = _stats(vn)
    return NormStats(vc_mean, vc_std, vn_mean, vn_std)


@dataclass
class CircuitData:
    """One circuit prepared for the model: operators, inputs, targets."""

    name: str
    graph: LHGraph
    ops: GraphOps
    vc0: np.ndarray
    vn0: np.ndarray
    y_reg: np.ndarray
    y_cls: np.ndarray


def make_targets(demand_h, demand_v, cong_h, cong_v, channel_mode: str):
    """Flatten label planes into (n_gcells, k) regression/classification targets."""
    if channel_mode == "uni":
        y_reg = demand_h.reshape(-1, 1)
        y_cls = cong_h.reshape(-1, 1)
    else:
        y_reg = np.stack([demand_h.reshape(-1), demand_v.reshape(-1)], axis=1)
        y_cls = np.stack([cong_h.reshape(-1), cong_v.reshape(-1)], axis=1)
    return np.asarray(y_reg, dtype=np.float64), np.asarray(y_cls, dtype=np.float64)


def prepare_circuit(
    name: str,
    graph: LHGraph,
    labels,
    config: LHNNConfig,
    norm: NormStats,
) -> CircuitData:
    vc0, vn0 = norm.apply(graph.Vc, graph.Vn)
    y_reg, y_cls = make_targets(
        labels.demand_h, labels.demand_v, labels.cong_h, labels.cong_v, config.channel_mode
    )
    return CircuitData(name, graph, full_graph_ops(graph), vc0, vn0, y_reg, y_cls)


def learning_rate_at(config: LHNNConfig, epoch: int) -> float:
    """Two-phase schedule: initial rate for the first half, final thereafter."""
    return config.learning_rate if epoch < config.epochs // 2 else config.learning_rate_final


def train(
    data: Sequence[CircuitData],
    config: LHNNConfig,
    params: Optional[Dict[str, Tensor]] = None,
) -> Tuple[Dict[str, Tensor], List[Dict[str, float]]]:
    """Full-graph gradient training; one Adam step per circuit per epoch."""
    from .evaluation import f1_and_acc

    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(config, rng)
    adam = Adam(params, lr=config.learning_rate)
    metrics: List[Dict[str, float]] = []
    sample_seed = np.random.default_rng(config.seed + 1)

    for epoch in range(config.epochs):
        adam.lr = learning_rate_at(config, epoch)
        sums = {"loss": 0.0, "loss_reg": 0.0, "loss_cls": 0.0}
        preds, labels = [], []
        for cd in data:
            ops = cd.ops
            if config.sampling:
                ops = sample_neighbors(
                    cd.graph,
                    {
                        "featuregen": config.fan_featuregen,
                        "hypermp": config.fan_hypermp,
                        "latticemp": config.fan_latticemp,
                    },
                    seed=int(sample_seed.integers(0, 2**31)),
                )
            with Tape() as tape:
                pred = forward(ops, cd.vc0, cd.vn0, params, config)
                loss, parts = loss_total(
                    pred, cd.y_reg, cd.y_cls, config.gamma, config.use_regression_head
                )
                if not np.isfinite(loss.value):
                    raise TrainingDivergedError(
                        f"loss became non-finite at epoch {epoch} on {cd.name!r}"
                    )
                tape.backward(loss)
            adam.step()
            adam.zero_grad()
            for key in sums:
                sums[key] += parts[key]
            preds.append(pred.c_cls.value)
            labels.append(cd.y_cls)
        n = max(len(data), 1)
        f1, acc, _ = f1_and_acc(np.concatenate(preds), np.concatenate(labels)) if data else (0, 0, {})
        metrics.append(
            {
                "epoch": float(epoch),
                "lr": adam.lr,
                "loss": sums["loss"] / n,
                "loss_reg": sums["loss_reg"] / n,
                "loss_cls": sums["loss_cls"] / n,
                "f1": f1,
                "acc": acc,
            }
        )
    return params, metrics


def evaluate_model(
    data: Sequence[CircuitData], params: Dict[str, Tensor], config: LHNNConfig
) -> Dict[str, float]:
    """Micro (headline) and per-circuit macro metrics over an evaluation set."""
    from .evaluation import f1_and_acc

    preds, labels, per_circuit_f1 = [], [], []
    sums = {"loss": 0.0, "loss_reg": 0.0, "loss_cls": 0.0}
    for cd in data:
        pred = forward(cd.ops, cd.vc0, cd.vn0, params, config)
        _, parts = loss_total(pred, cd.y_reg, cd.y_cls, config.gamma, config.use_regression_head)
        for key in sums:
            sums[key] += parts[key]
        preds.append(pred.c_cls.value)
        labels.append(cd.y_cls)
        f1_i, _, _ = f1_and_acc(pred.c_cls.value, cd.y_cls)
        per_circuit_f1.append(f1_i)
    f1, acc, counts = f1_and_acc(np.concatenate(preds), np.concatenate(labels))
    n = max(len(data), 1)
    return {
        "f1": f1,
        "acc": acc,
        "macro_f1": float(np.mean(per_circuit_f1)) if per_circuit_f1 else 0.0,
        "loss": sums["loss"] / n,
        "loss_reg": sums["loss_reg"] / n,
        "loss_cls": sums["loss_cls"] / n,
        **{k: float(v) for k, v in counts.items()},
    }


# ---------------------------------------------------------------------------
# Checkpoint packing


def save_model(path: str, params: Dict[str, Tensor], norm: NormStats) -> None:
    tensors = {name: p.value for name, p in params.items()}
    tensors["norm.vc_mean"] = norm.vc_mean
    tensors["norm.vc_std"] = norm.vc_std
    tensors["norm.vn_mean"] = norm.vn_mean
    tensors["norm.vn_std"] = norm.vn_std
    tc.save_checkpoint(path, tensors)


def load_model(path: str) -> Tuple[Dict[str, Tensor], NormStats]:
    arrays = tc.load_checkpoint(path)
    norm = NormStats(
        arrays.pop("norm.vc_mean"),
        arrays.pop("norm.vc_std"),
        arrays.pop("norm.vn_mean"),
        arrays.pop("norm.vn_std"),
    )
    params = {name: Tensor(a, requires_grad=True) for name, a in arrays.items()}
    return params, norm
