"""The explanation-supervisable student GNN.

Each message-passing layer computes, for every edge and explanation channel, an
attention logit from the two incident node embeddings (and the edge features).
Sigmoid-gated, channel-specific messages are summed into the target node. The
layer-averaged logits give the edge importances; a per-channel projection of the
final node embeddings gives the node importances, which also weight the
per-channel sum pooling that feeds the dense tail. Node and edge masks therefore
both shape the prediction, and supervising one of them moves the other.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .graphs import CLASSIFICATION, REGRESSION, AnnotatedGraph, Dataset, ExplanationMasks
from .optim import OptimizerState, adam_step, glorot_init, make_rng
from .stats import UndefinedAUC, accuracy, mse, roc_auc



class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, message: str = "non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class StudentConfig:
    conv_units: Tuple[int, ...] = (5, 5, 5)
    dense_units: Tuple[int, ...] = (5, 3)
    channels: int = 2
    task_kind: str = CLASSIFICATION
    explanation_weight: float = 0.0
    node_weight: float = 1.0
    edge_weight: float = 1.0
    epochs: int = 150
    batch_size: int = 10
    learning_rate: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "conv_units", tuple(int(u) for u in self.conv_units))
        object.__setattr__(self, "dense_units", tuple(int(u) for u in self.dense_units))
        if not self.conv_units or min(self.conv_units) < 1:
            raise ValueError("at least one conv layer with positive width is required")
        if self.dense_units and min(self.dense_units) < 1:
            raise ValueError("dense widths must be positive")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.task_kind not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        for name in ("explanation_weight", "node_weight", "edge_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_units"] = list(self.conv_units)
        d["dense_units"] = list(self.dense_units)
        return d


@dataclass
class StudentModel:
    config: StudentConfig
    params: Dict[str, np.ndarray]
    init_seed: int
    node_feature_dim: int
    edge_feature_dim: int
    target_dim: int

    def copy(self) -> "StudentModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def to_json(self) -> str:
        """Debug snapshot in the same plain-JSON style as dataset records."""
        return json.dumps({
            "config": self.config.to_dict(), "init_seed": self.init_seed,
            "node_feature_dim": self.node_feature_dim, "edge_feature_dim": self.edge_feature_dim,
            "target_dim": self.target_dim,
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StudentModel":
        d = json.loads(text)
        return cls(StudentConfig(**d["config"]), {k: np.array(v) for k, v in d["params"].items()},
                   d["init_seed"], d["node_feature_dim"], d["edge_feature_dim"], d["target_dim"])


@dataclass
class TrainHistory:
    task_loss: List[float] = field(default_factory=list)
    explanation_loss: List[float] = field(default_factory=list)
    total_loss: List[float] = field(default_factory=list)


# -- parameters ---------------------------------------------------------------------


def parameter_shapes(config: StudentConfig, node_dim: int, edge_dim: int,
                     target_dim: int) -> Dict[str, Tuple[int, int]]:
    k = config.channels
    shapes = {}
    width = node_dim
    for l, units in enumerate(config.conv_units):
        shapes[f"conv{l}.self"] = (width, units)
        shapes[f"conv{l}.bias"] = (1, units)
        shapes[f"conv{l}.message"] = (width, k * units)
        shapes[f"conv{l}.att_src"] = (width, k * units)
        shapes[f"conv{l}.att_dst"] = (width, k * units)
        if edge_dim:
            shapes[f"conv{l}.att_edge"] = (edge_dim, k * units)
        shapes[f"conv{l}.att_vec"] = (k, units)
        width = units
    shapes["node_importance.weight"] = (width, k)
    shapes["node_importance.bias"] = (1, k)
    width = k * width
    for d, units in enumerate(config.dense_units):
        shapes[f"dense{d}.weight"] = (width, units)
        shapes[f"dense{d}.bias"] = (1, units)
        width = units
    shapes["out.weight"] = (width, target_dim)
    shapes["out.bias"] = (1, target_dim)
    return shapes


def init_student(config: StudentConfig, seed: int, node_feature_dim: int = 3,
                 edge_feature_dim: int = 1, target_dim: Optional[int] = None) -> StudentModel:
    """Glorot-uniform weights, zero biases; a pure function of ``(config, seed, dims)``."""
    if target_dim is None:
        target_dim = config.channels if config.task_kind == CLASSIFICATION else 1
    if config.task_kind == CLASSIFICATION and config.channels != target_dim:
        raise ValueError(f"classification needs channels == classes ({config.channels} != {target_dim})")
    rng = make_rng(seed, "student-init")
    params = {}
    for name, shape in parameter_shapes(config, node_feature_dim, edge_feature_dim, target_dim).items():
        params[name] = np.zeros(shape) if name.endswith("bias") else glorot_init(shape, rng)
    return StudentModel(config, params, seed, node_feature_dim, edge_feature_dim, target_dim)


# -- batching -----------------------------------------------------------------------


@dataclass
class GraphBatch:
    """Disjoint union of graphs with per-node / per-edge graph ids."""

    node_features: np.ndarray
    edge_features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    node_graph: np.ndarray
    edge_graph: np.ndarray
    node_offsets: np.ndarray
    edge_offsets: np.ndarray
    targets: np.ndarray

    @property
    def graph_count(self) -> int:
        return self.targets.shape[0]

    @classmethod
    def from_graphs(cls, graphs: Sequence[AnnotatedGraph]) -> "GraphBatch":
        v = np.array([g.node_count for g in graphs], dtype=np.int64)
        e = np.array([g.edge_count for g in graphs], dtype=np.int64)
        node_offsets = np.concatenate(([0], np.cumsum(v)))
        edge_offsets = np.concatenate(([0], np.cumsum(e)))
        edges = np.concatenate([g.edges + node_offsets[i] for i, g in enumerate(graphs)])
        return cls(
            node_features=np.concatenate([g.node_features for g in graphs]),
            edge_features=np.concatenate([g.edge_features for g in graphs]),
            src=edges[:, 0].copy(), dst=edges[:, 1].copy(),
            node_graph=np.repeat(np.arange(len(graphs)), v),
            edge_graph=np.repeat(np.arange(len(graphs)), e),
            node_offsets=node_offsets, edge_offsets=edge_offsets,
            targets=np.stack([g.targets for g in graphs]),
        )


def _stack_masks(masks: Sequence[ExplanationMasks]) -> Tuple[np.ndarray, np.ndarray]:
    return (np.concatenate([m.node_importance for m in masks]),
            np.concatenate([m.edge_importance for m in masks]))


# -- forward / loss -----------------------------------------------------------------


def forward_batch(params: Dict[str, ad.Node], config: StudentConfig, batch: GraphBatch):
    """Returns ``(prediction (G x C), node_importance (N x K), edge_importance (E x K))`` nodes."""
    k = config.channels
    n_nodes = batch.node_features.shape[0]
    n_edges = batch.src.shape[0]
    h = ad.constant(batch.node_features)
    u = ad.constant(batch.edge_features)
    logits_per_layer = []
    for l, units in enumerate(config.conv_units):
        pre = ad.add(ad.gather(ad.matmul(h, params[f"conv{l}.att_src"]), batch.src),
                     ad.gather(ad.matmul(h, params[f"conv{l}.att_dst"]), batch.dst))
        if f"conv{l}.att_edge" in params:
            pre = ad.add(pre, ad.matmul(u, params[f"conv{l}.att_edge"]))
        hidden = ad.reshape(ad.leaky_relu(pre), (n_edges, k, units))
        logits = ad.sum_axis(ad.mul(hidden, params[f"conv{l}.att_vec"]), -1)
        logits_per_layer.append(logits)
        gate = ad.reshape(ad.sigmoid(logits), (n_edges, k, 1))
        messages = ad.reshape(ad.gather(ad.matmul(h, params[f"conv{l}.message"]), batch.src),
                              (n_edges, k, units))
        messages = ad.sum_axis(ad.mul(messages, gate), 1)
        aggregated = ad.segment_sum(messages, batch.dst, n_nodes)
        h = ad.leaky_relu(ad.add(ad.add(ad.matmul(h, params[f"conv{l}.self"]), aggregated),
                           params[f"conv{l}.bias"]))
    edge_importance = ad.sigmoid(ad.stack_mean(logits_per_layer))
    node_importance = ad.sigmoid(ad.add(ad.matmul(h, params["node_importance.weight"]),
                                        params["node_importance.bias"]))
    z = ad.weighted_pool(h, node_importance, batch.node_graph, batch.graph_count)
    for d in range(len(config.dense_units)):
        z = ad.leaky_relu(ad.add(ad.matmul(z, params[f"dense{d}.weight"]), params[f"dense{d}.bias"]))
    prediction = ad.add(ad.matmul(z, params["out.weight"]), params["out.bias"])
    return prediction, node_importance, edge_importance


def loss(prediction: ad.Node, node_importance: ad.Node, edge_importance: ad.Node,
         targets: np.ndarray, true_masks: Optional[Tuple[np.ndarray, np.ndarray]],
         config: StudentConfig):
    """``(total, task_part, explanation_part)``; the explanation part is ``None`` when unused."""
    if config.task_kind == CLASSIFICATION:
        task = ad.softmax_cross_entropy(prediction, targets)
    else:
        task = ad.mse(prediction, targets)
    if config.explanation_weight == 0.0:
        return task, task, None
    if true_masks is None:
        raise ValueError("explanation_weight > 0 requires target explanation masks")
    node_true, edge_true = true_masks
    expl = ad.add(ad.scale(ad.bce(node_importance, node_true), config.node_weight),
                  ad.scale(ad.bce(edge_importance, edge_true), config.edge_weight))
    total = ad.add(task, ad.scale(expl, config.explanation_weight))
    return total, task, expl


def _param_nodes(model: StudentModel, trainable: bool) -> Dict[str, ad.Node]:
    make = ad.parameter if trainable else ad.constant
    return {k: make(v) for k, v in model.params.items()}


def _check_dims(model: StudentModel, graph: AnnotatedGraph):
    if graph.node_features.shape[1] != model.node_feature_dim:
        raise ValueError(f"graph has {graph.node_features.shape[1]} node features, "
                         f"model expects {model.node_feature_dim}")
    if graph.edge_features.shape[1] != model.edge_feature_dim:
        raise ValueError(f"graph has {graph.edge_features.shape[1]} edge features, "
                         f"model expects {model.edge_feature_dim}")


def forward(model: StudentModel, graph: AnnotatedGraph) -> Tuple[np.ndarray, ExplanationMasks]:
    """Prediction vector and explanation masks for a single graph."""
    preds, masks = predict(model, [graph])
    return preds[0], masks[0]


def predict(model: StudentModel, graphs: Sequence[AnnotatedGraph],
            chunk: int = 512) -> Tuple[np.ndarray, List[ExplanationMasks]]:
    preds, masks = [], []
    params = _param_nodes(model, trainable=False)
    for start in range(0, len(graphs), chunk):
        part = graphs[start:start + chunk]
        for g in part:
            _check_dims(model, g)
        batch = GraphBatch.from_graphs(part)
        p, nv, ev = forward_batch(params, model.config, batch)
        preds.append(p.value)
        for i in range(len(part)):
            masks.append(ExplanationMasks(
                nv.value[batch.node_offsets[i]:batch.node_offsets[i + 1]],
                ev.value[batch.edge_offsets[i]:batch.edge_offsets[i + 1]]))
    return np.concatenate(preds), masks


# -- training / evaluation ----------------------------------------------------------


def train(model: StudentModel, dataset: Dataset, train_ids: Sequence[int],
          config: Optional[StudentConfig] = None, seed: int = 0,
          masks: Optional[Sequence[Optional[ExplanationMasks]]] = None):
    """Mini-batch Adam over reshuffled epochs.

    ``masks`` overrides the dataset's own explanations as supervision targets
    (indexed like the dataset). Returns a new model and its :class:`TrainHistory`.
    """
    config = config or model.config
    train_ids = np.asarray(train_ids, dtype=np.int64)
    if train_ids.size == 0:
        raise ValueError("train_ids must be non-empty")
    supervise = config.explanation_weight > 0
    if masks is None and supervise:
        masks = [g.masks for g in dataset.graphs]
    for i in train_ids:
        _check_dims(model, dataset.graphs[i])
        if supervise and masks[i] is None:
            raise ValueError(f"graph {i} has no explanation masks to supervise with")
    rng = make_rng(seed, "shuffle")
    params = {k: v.copy() for k, v in model.params.items()}
    state = OptimizerState(learning_rate=config.learning_rate)
    history = TrainHistory()
    for epoch in range(config.epochs):
        order = rng.permutation(train_ids)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, order.size, config.batch_size):
            ids = order[start:start + config.batch_size]
            batch = GraphBatch.from_graphs([dataset.graphs[i] for i in ids])
            true = _stack_masks([masks[i] for i in ids]) if supervise else None
            nodes = _param_nodes(replace(model, params=params), trainable=True)
            pred, nv, ev = forward_batch(nodes, config, batch)
            total, task, expl = loss(pred, nv, ev, batch.targets, true, config)
            value = float(total.value)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            grads = ad.gradients(total)
            try:
                params, state = adam_step(params, {k: grads[n] for k, n in nodes.items() if n in grads},
                                          state)
            except FloatingPointError as exc:
                raise TrainingDiverged(epoch, str(exc)) from None
            sums += (float(task.value), 0.0 if expl is None else float(expl.value), value)
            batches += 1
        history.task_loss.append(sums[0] / batches)
        history.explanation_loss.append(sums[1] / batches)
        history.total_loss.append(sums[2] / batches)
    return replace(model, config=config, params=params), history


@dataclass
class Evaluation:
    performance: float
    node_auc: Optional[float]
    edge_auc: Optional[float]
    skipped_node: int = 0
    skipped_edge: int = 0


def mean_mask_auc(predicted: Sequence[ExplanationMasks], truth: Sequence[Optional[ExplanationMasks]]):
    """Mean per-graph ROC AUC over all channels, separately for nodes and edges.

    Graphs whose ground truth is single-class (or missing) are skipped and counted.
    """
    node_aucs, edge_aucs = [], []
    skipped = [0, 0]
    for pm, tm in zip(predicted, truth):
        if tm is None:
            skipped[0] += 1
            skipped[1] += 1
            continue
        for slot, (scores, labels, out) in enumerate((
                (pm.node_importance, tm.node_importance, node_aucs),
                (pm.edge_importance, tm.edge_importance, edge_aucs))):
            try:
                out.append(roc_auc(scores, labels))
            except UndefinedAUC:
                skipped[slot] += 1
    node = float(np.mean(node_aucs)) if node_aucs else None
    edge = float(np.mean(edge_aucs)) if edge_aucs else None
    return node, edge, skipped[0], skipped[1]


def evaluate(model: StudentModel, dataset: Dataset, test_ids: Sequence[int],
             task_kind: Optional[str] = None) -> Evaluation:
    """Test performance (accuracy or MSE) plus mean node/edge AUC against dataset masks.

    Only graph structure and features reach the model; masks are read solely to score it.
    """
    task_kind = task_kind or model.config.task_kind
    test_ids = np.asarray(test_ids, dtype=np.int64)
    graphs = [dataset.graphs[i] for i in test_ids]
    preds, masks = predict(model, [g.with_masks(None) for g in graphs])
    targets = np.stack([g.targets for g in graphs])
    perf = accuracy(preds, targets) if task_kind == CLASSIFICATION else mse(preds, targets)
    node_auc, edge_auc, sn, se = mean_mask_auc(masks, [g.masks for g in graphs])
    return Evaluation(perf, node_auc, edge_auc, sn, se)
