"""Per-G-cell residual MLP baseline: strictly local features, classification only."""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import tensorcore as tc
from .model import (
    D_CELL,
    LHNNConfig,
    CircuitData,
    Prediction,
    TrainingDivergedError,
    _add_linear,
    _linear,
    learning_rate_at,
    loss_total,
)
from .tensorcore import Adam, Tape, Tensor


def init_mlp_params(config: LHNNConfig, rng: np.random.Generator) -> Dict[str, Tensor]:
    h = config.hidden_dim
    params: Dict[str, Tensor] = {}
    _add_linear(params, rng, "mlp.0", D_CELL, h)
    for i in range(1, config.mlp_depth - 1):
        _add_linear(params, rng, f"mlp.{i}", h, h)
    _add_linear(params, rng, f"mlp.{config.mlp_depth - 1}", h, config.n_channels)
    return params


def mlp_forward(
    vc0: np.ndarray, params: Dict[str, Tensor], config: LHNNConfig
) -> Prediction:
    """Each G-cell's prediction depends on its own feature row only."""
    vc0 = np.asarray(vc0, dtype=np.float64)
    if not config.use_gcell_features:
        vc0 = vc0.copy()
        vc0[:, :3] = 0.0
    x = tc.relu(tc.add(tc.matmul(Tensor(vc0), params["mlp.0.w"]), params["mlp.0.b"]))
    for i in range(1, config.mlp_depth - 1):
        y = _linear(params, f"mlp.{i}", x)
        x = tc.add(y, x)  # identity skip between equal-width layers
    c_cls = _linear(params, f"mlp.{config.mlp_depth - 1}", x, act="sigmoid")
    return Prediction(c_cls=c_cls, c_reg=Tensor(np.zeros_like(c_cls.value)))


def train_mlp(
    data: Sequence[CircuitData],
    config: LHNNConfig,
    params: Optional[Dict[str, Tensor]] = None,
) -> Tuple[Dict[str, Tensor], List[Dict[str, float]]]:
    """Same loop and schedule as LHNN, classification loss only."""
    from .evaluation import f1_and_acc

    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_mlp_params(config, rng)
    adam = Adam(params, lr=config.learning_rate)
    metrics: List[Dict[str, float]] = []
    for epoch in range(config.epochs):
        adam.lr = learning_rate_at(config, epoch)
        loss_sum = 0.0
        preds, labels = [], []
        for cd in data:
            with Tape() as tape:
                pred = mlp_forward(cd.vc0, params, config)
                loss, parts = loss_total(
                    pred, cd.y_reg, cd.y_cls, config.gamma, use_regression_head=False
                )
                if not np.isfinite(loss.value):
                    raise TrainingDivergedError(f"loss became non-finite at epoch {epoch}")
                tape.backward(loss)
            adam.step()
            adam.zero_grad()
            loss_sum += parts["loss"]
            preds.append(pred.c_cls.value)
            labels.append(cd.y_cls)
        n = max(len(data), 1)
        f1, acc, _ = f1_and_acc(np.concatenate(preds), np.concatenate(labels)) if data else (0, 0, {})
        metrics.append(
            {"epoch": float(epoch), "lr": adam.lr, "loss": loss_sum / n, "f1": f1, "acc": acc}
        )
    return params, metrics


def evaluate_mlp(
    data: Sequence[CircuitData], params: Dict[str, Tensor], config: LHNNConfig
) -> Dict[str, float]:
    from .evaluation import f1_and_acc

    preds = [mlp_forward(cd.vc0, params, config).c_cls.value for cd in data]
    labels = [cd.y_cls for cd in data]
    f1, acc, counts = f1_and_acc(np.concatenate(preds), np.concatenate(labels))
    per_circuit = [f1_and_acc(p, y)[0] for p, y in zip(preds, labels)]
    return {
        "f1": f1,
        "acc": acc,
        "macro_f1": float(np.mean(per_circuit)) if per_circuit else 0.0,
        **{k: float(v) for k, v in counts.items()},
    }
