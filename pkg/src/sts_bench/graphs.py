"""Annotated graphs, datasets, the line-delimited dataset format and sampling utilities.

Dataset files hold one JSON object per line with the keys ``node_features``,
``edges``, ``edge_features``, ``targets``, ``node_importances``,
``edge_importances`` and ``metadata``. Importance keys may be ``null`` when a
graph carries no explanation. Edges are directed ``[i, j]`` pairs; undirected
sources store both orientations.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"
RECORD_KEYS = (
    "node_features", "edges", "edge_features", "targets",
    "node_importances", "edge_importances", "metadata",
)


class DatasetFormatError(ValueError):
    """A dataset file line could not be parsed."""


class ValidationError(ValueError):
    """Graph or dataset contents violate a shape/range invariant."""


def _frozen(a, dtype=np.float64, ndim=2) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    if a.ndim == 1 and ndim == 2 and a.size == 0:
        a = a.reshape(0, 0)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ExplanationMasks:
    """Node (V x K) and edge (E x K) importances in [0, 1]."""

    node_importance: np.ndarray
    edge_importance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "node_importance", _frozen(self.node_importance))
        object.__setattr__(self, "edge_importance", _frozen(self.edge_importance))
        nv, ne = self.node_importance, self.edge_importance
        if nv.ndim != 2 or ne.ndim != 2:
            raise ValidationError("importance masks must be 2-D")
        if nv.shape[1] < 1:
            raise ValidationError("masks need at least one channel")
        if ne.shape[1] != nv.shape[1] and ne.shape[0] > 0:
            raise ValidationError(f"node mask has {nv.shape[1]} channels, edge mask {ne.shape[1]}")
        for name, m in (("node", nv), ("edge", ne)):
            if m.size and (not np.all(np.isfinite(m)) or m.min() < 0.0 or m.max() > 1.0):
                raise ValidationError(f"{name} importances must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return self.node_importance.shape[1]

    def equals(self, other: "ExplanationMasks") -> bool:
        return (np.array_equal(self.node_importance, other.node_importance)
                and np.array_equal(self.edge_importance, other.edge_importance))


@dataclass(frozen=True)
class AnnotatedGraph:
    node_features: np.ndarray
    edges: np.ndarray
    edge_features: np.ndarray
    targets: np.ndarray
    masks: Optional[ExplanationMasks] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        nf = _frozen(self.node_features)
        edges = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        edges.setflags(write=False)
        ef = _frozen(self.edge_features)
        if ef.size == 0:
            ef = _frozen(np.zeros((edges.shape[0], ef.shape[1] if ef.ndim == 2 else 0)))
        targets = _frozen(self.targets, ndim=1).ravel()
        targets.setflags(write=False)
        object.__setattr__(self, "node_features", nf)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_features", ef)
        object.__setattr__(self, "targets", targets)
        v = nf.shape[0]
        if nf.ndim != 2:
            raise ValidationError("node_features must be a V x N0 matrix")
        if edges.size and (edges.min() < 0 or edges.max() >= v):
            raise ValidationError(f"edge index outside [0, {v})")
        if ef.shape[0] != edges.shape[0]:
            raise ValidationError(f"{ef.shape[0]} edge feature rows for {edges.shape[0]} edges")
        if self.masks is not None:
            if self.masks.node_importance.shape[0] != v:
                raise ValidationError(
                    f"node mask has {self.masks.node_importance.shape[0]} rows for {v} nodes")
            if self.masks.edge_importance.shape[0] != edges.shape[0]:
                raise ValidationError(
                    f"edge mask has {self.masks.edge_importance.shape[0]} rows "
                    f"for {edges.shape[0]} edges")

    @property
    def node_count(self) -> int:
        return self.node_features.shape[0]

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def with_masks(self, masks: Optional[ExplanationMasks]) -> "AnnotatedGraph":
        return AnnotatedGraph(self.node_features, self.edges, self.edge_features,
                              self.targets, masks, self.metadata)


@dataclass(frozen=True)
class Dataset:
    graphs: Tuple[AnnotatedGraph, ...]
    channels: int
    target_dim: int
    task_kind: str = CLASSIFICATION

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.task_kind not in (CLASSIFICATION, REGRESSION):
            raise ValidationError(f"unknown task kind {self.task_kind!r}")
        if not self.graphs:
            return
        first = self.graphs[0]
        n0, m = first.node_features.shape[1], first.edge_features.shape[1]
        for idx, g in enumerate(self.graphs):
            if g.node_features.shape[1] != n0 or g.edge_features.shape[1] != m:
                raise ValidationError(f"graph {idx}: feature dimensions differ from graph 0")
            if g.targets.shape[0] != self.target_dim:
                raise ValidationError(f"graph {idx}: {g.targets.shape[0]} targets, expected {self.target_dim}")
            if g.masks is not None and g.masks.channels != self.channels:
                raise ValidationError(f"graph {idx}: {g.masks.channels} mask channels, expected {self.channels}")
            if self.task_kind == CLASSIFICATION and not _is_one_hot(g.targets):
                raise ValidationError(f"graph {idx}: classification targets must be one-hot")

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, idx):
        return self.graphs[idx]

    @property
    def node_feature_dim(self) -> int:
        return self.graphs[0].node_features.shape[1]

    @property
    def edge_feature_dim(self) -> int:
        return self.graphs[0].edge_features.shape[1]

    @property
    def has_masks(self) -> bool:
        return bool(self.graphs) and all(g.masks is not None for g in self.graphs)

    def labels(self) -> np.ndarray:
        if self.task_kind != CLASSIFICATION:
            raise ValueError("labels are only defined for classification datasets")
        return np.array([int(g.targets.argmax()) for g in self.graphs])

    def with_masks(self, masks: Sequence[Optional[ExplanationMasks]]) -> "Dataset":
        return Dataset(tuple(g.with_masks(m) for g, m in zip(self.graphs, masks)),
                       self.channels, self.target_dim, self.task_kind)


def _is_one_hot(t: np.ndarray) -> bool:
    return bool(np.all((t == 0.0) | (t == 1.0)) and t.sum() == 1.0)


# -- file format --------------------------------------------------------------------


def _to_list(a: np.ndarray):
    return a.tolist()


def graph_to_record(g: AnnotatedGraph) -> dict:
    return {
        "node_features": _to_list(g.node_features),
        "edges": _to_list(g.edges),
        "edge_features": _to_list(g.edge_features),
        "targets": _to_list(g.targets),
        "node_importances": None if g.masks is None else _to_list(g.masks.node_importance),
        "edge_importances": None if g.masks is None else _to_list(g.masks.edge_importance),
        "metadata": g.metadata,
    }


def record_to_graph(rec: dict, channels: Optional[int] = None) -> AnnotatedGraph:
    missing = [k for k in ("node_features", "edges", "targets") if k not in rec]
    if missing:
        raise DatasetFormatError(f"missing keys {missing}")
    nf = np.array(rec["node_features"], dtype=np.float64)
    edges = np.array(rec["edges"], dtype=np.int64).reshape(-1, 2)
    ef = rec.get("edge_features")
    ef = np.zeros((edges.shape[0], 0)) if ef is None else np.array(ef, dtype=np.float64)
    if ef.ndim == 1 and ef.size == 0:
        ef = ef.reshape(0, 0)
    masks = None
    if rec.get("node_importances") is not None:
        ni = np.array(rec["node_importances"], dtype=np.float64)
        k = ni.shape[1] if ni.ndim == 2 else (channels or 1)
        ni = ni.reshape(-1, k)
        ei = rec.get("edge_importances")
        ei = np.zeros((0, k)) if ei is None else np.array(ei, dtype=np.float64).reshape(-1, k)
        masks = ExplanationMasks(ni, ei)
    return AnnotatedGraph(nf, edges, ef, np.array(rec["targets"], dtype=np.float64),
                          masks, dict(rec.get("metadata") or {}))


def dataset_header(dataset: Dataset) -> dict:
    header = {"format": "sts-bench-dataset", "version": 1, "channels": dataset.channels,
              "target_dim": dataset.target_dim, "task_kind": dataset.task_kind}
    if dataset.graphs:
        # edgeless graphs serialize edge features as [], which loses the column count
        header["edge_feature_dim"] = dataset.edge_feature_dim
    return header


def _restore_edge_width(graphs: List[AnnotatedGraph], width: Optional[int]) -> List[AnnotatedGraph]:
    if width is None:
        widths = {g.edge_features.shape[1] for g in graphs if g.edge_count}
        if len(widths) != 1:
            return graphs
        width = widths.pop()
    return [g if g.edge_count or g.edge_features.shape[1] == width else
            AnnotatedGraph(g.node_features, g.edges, np.zeros((0, width)), g.targets, g.masks, g.metadata)
            for g in graphs]


def dumps_dataset(dataset: Dataset) -> str:
    """Serialize to text; Python's shortest round-trip float repr keeps values bit-exact."""
    lines = [json.dumps({"header": dataset_header(dataset)}, sort_keys=True)]
    for g in dataset.graphs:
        lines.append(json.dumps(graph_to_record(g), sort_keys=True, allow_nan=False))
    return "\n".join(lines) + "\n"


def save_dataset(dataset: Dataset, destination: str | os.PathLike) -> None:
    with open(destination, "w", encoding="utf-8") as fh:
        fh.write(dumps_dataset(dataset))


def load_dataset(source: str | os.PathLike, task_kind: Optional[str] = None) -> Dataset:
    """Read a dataset file.

    The optional first-line ``{"header": ...}`` record declares channels, target
    size and task kind; headerless files (e.g. exported from other tools) infer
    them from the first graph, defaulting to classification when targets are one-hot.
    """
    header = None
    graphs = []
    with open(source, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise DatasetFormatError(f"line {lineno}: expected a JSON object")
            if "header" in rec:
                header = rec["header"]
                continue
            try:
                graphs.append(record_to_graph(rec, header and header.get("channels")))
            except DatasetFormatError as exc:
                raise DatasetFormatError(f"line {lineno}: {exc}") from None
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
    if not graphs:
        raise DatasetFormatError(f"{source}: no records")
    graphs = _restore_edge_width(graphs, header and header.get("edge_feature_dim"))
    first = graphs[0]
    if header is None:
        header = {
            "channels": first.masks.channels if first.masks is not None else first.targets.shape[0],
            "target_dim": first.targets.shape[0],
            "task_kind": task_kind or (CLASSIFICATION if _is_one_hot(first.targets) else REGRESSION),
        }
    return Dataset(tuple(graphs), int(header["channels"]), int(header["target_dim"]),
                   task_kind or header.get("task_kind", CLASSIFICATION))


# -- sampling -----------------------------------------------------------------------


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_dataset(dataset: Dataset, train_size: int, seed) -> Tuple[np.ndarray, np.ndarray]:
    """Random train/test partition with exactly ``train_size`` training indices."""
    n = len(dataset)
    if not 0 < train_size < n:
        raise ValueError(f"train_size must be in (0, {n}), got {train_size}")
    perm = _rng(seed).permutation(n)
    return np.sort(perm[:train_size]), np.sort(perm[train_size:])


def balanced_sample(dataset: Dataset, n: int, seed, ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """``n`` indices whose class counts differ by at most one.

    Classes are filled round-robin in class order; the first ``n % C`` classes
    get the extra element.
    """
    labels = dataset.labels()
    pool = np.arange(len(dataset)) if ids is None else np.asarray(ids)
    classes = dataset.target_dim
    base, extra = divmod(n, classes)
    rng = _rng(seed)
    chosen = []
    for c in range(classes):
        want = base + (1 if c < extra else 0)
        members = pool[labels[pool] == c]
        if members.size < want:
            raise ValueError(f"class {c} has {members.size} members, {want} required")
        chosen.append(rng.choice(members, size=want, replace=False))
    return np.sort(np.concatenate(chosen)).astype(np.int64)
