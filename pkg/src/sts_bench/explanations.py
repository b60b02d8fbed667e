"""Explanation sources: ground truth, perturbed ground truth, and baseline masks.

A source is written as a short spec string, e.g. ``ground_truth``, ``noise:0.2``,
``adversarial:0.8``, ``random`` / ``random:0.12``, ``trivial:solubility-polarity``
or ``external:masks.jsonl``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .graphs import Dataset, DatasetFormatError, ExplanationMasks, ValidationError
from .optim import make_rng
from .synthgen import adversarial_masks

KINDS = ("ground_truth", "noise", "adversarial", "random", "trivial", "external")

# rule id -> (attribute, values for channel 0, values for channel 1)
TRIVIAL_RULES = {
    "solubility-polarity": ("symbol", ("C",), ("N", "O")),
}


@dataclass(frozen=True)
class ExplanationSource:
    kind: str = "ground_truth"
    ratio: Optional[float] = None
    rule: Optional[str] = None
    path: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown explanation kind {self.kind!r}")
        if self.ratio is not None and not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")
        if self.kind in ("noise", "adversarial") and self.ratio is None:
            raise ValueError(f"{self.kind} explanations need a ratio")
        if self.kind == "trivial" and self.rule not in TRIVIAL_RULES:
            raise ValueError(f"unknown trivial rule {self.rule!r}")
        if self.kind == "external" and not self.path:
            raise ValueError("external explanations need a path")

    @classmethod
    def parse(cls, spec: str, seed: int = 0) -> "ExplanationSource":
        kind, _, arg = spec.strip().partition(":")
        kind = kind.replace("-", "_")
        if kind in ("noise", "adversarial", "random"):
            try:
                ratio = float(arg) if arg else None
            except ValueError:
                raise ValueError(f"bad ratio in explanation spec {spec!r}") from None
            return cls(kind, ratio=ratio, seed=seed)
        if kind == "trivial":
            return cls(kind, rule=arg or "solubility-polarity", seed=seed)
        if kind == "external":
            return cls(kind, path=arg, seed=seed)
        if kind == "ground_truth" and not arg:
            return cls(kind, seed=seed)
        raise ValueError(f"cannot parse explanation spec {spec!r}")

    def spec(self) -> str:
        if self.kind == "ground_truth":
            return "ground_truth"
        if self.kind == "trivial":
            return f"trivial:{self.rule}"
        if self.kind == "external":
            return f"external:{self.path}"
        return self.kind if self.ratio is None else f"{self.kind}:{self.ratio!r}"


def mask_density(masks: Sequence[ExplanationMasks]) -> float:
    """Fraction of nonzero entries over all node and edge masks and channels."""
    nonzero = total = 0
    for m in masks:
        for a in (m.node_importance, m.edge_importance):
            nonzero += int(np.count_nonzero(a))
            total += a.size
    return nonzero / total if total else 0.0


def _require_truth(dataset: Dataset, kind: str):
    if not dataset.has_masks:
        raise ValueError(f"{kind} explanations need ground-truth masks in the dataset")


def materialize(source: ExplanationSource, dataset: Dataset) -> List[ExplanationMasks]:
    """Per-graph masks for ``source``, deterministic in ``source.seed``."""
    kind = source.kind
    if kind == "ground_truth":
        _require_truth(dataset, kind)
        return [g.masks for g in dataset.graphs]
    if kind == "noise":
        _require_truth(dataset, kind)
        rng = make_rng(source.seed, "noise")
        out = []
        for g in dataset.graphs:
            parts = []
            for truth in (g.masks.node_importance, g.masks.edge_importance):
                replace = rng.random(truth.shape) < source.ratio
                fresh = rng.random(truth.shape)
                parts.append(np.where(replace, fresh, truth))
            out.append(ExplanationMasks(*parts))
        return out
    if kind == "adversarial":
        _require_truth(dataset, kind)
        n = len(dataset)
        chosen = set(make_rng(source.seed, "adversarial").choice(
            n, size=int(np.floor(source.ratio * n)), replace=False).tolist())
        return [adversarial_masks(g, dataset.channels) if i in chosen else g.masks
                for i, g in enumerate(dataset.graphs)]
    if kind == "random":
        density = source.ratio
        if density is None:
            _require_truth(dataset, "random (density calibration)")
            density = mask_density([g.masks for g in dataset.graphs])
        rng = make_rng(source.seed, "random")
        k = dataset.channels
        return [ExplanationMasks((rng.random((g.node_count, k)) < density).astype(np.float64),
                                 (rng.random((g.edge_count, k)) < density).astype(np.float64))
                for g in dataset.graphs]
    if kind == "trivial":
        return [trivial_masks(g, source.rule, dataset.channels) for g in dataset.graphs]
    return load_external_masks(source.path, dataset)


def trivial_masks(graph, rule: str, channels: int = 2) -> ExplanationMasks:
    """Binary node masks from a categorical node attribute; edge masks stay zero."""
    attribute, first, second = TRIVIAL_RULES[rule]
    if channels != 2:
        raise ValueError(f"rule {rule!r} produces 2 channels, dataset declares {channels}")
    values = graph.metadata.get("node_attributes", {}).get(attribute)
    if values is None or len(values) != graph.node_count:
        raise ValueError(f"trivial rule {rule!r} needs node attribute {attribute!r} on every node")
    nm = np.zeros((graph.node_count, 2))
    nm[:, 0] = [v in first for v in values]
    nm[:, 1] = [v in second for v in values]
    return ExplanationMasks(nm, np.zeros((graph.edge_count, 2)))


def load_external_masks(path: str, dataset: Dataset) -> List[ExplanationMasks]:
    """Masks stored as dataset-format records holding only the two importance keys."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path} line {lineno}: {exc.msg}") from None
            if "header" in rec:
                continue
            idx = len(out)
            if idx >= len(dataset):
                raise ValidationError(f"{path}: more mask records than graphs ({len(dataset)})")
            g = dataset.graphs[idx]
            k = dataset.channels
            try:
                masks = ExplanationMasks(
                    np.array(rec["node_importances"], dtype=np.float64).reshape(-1, k),
                    np.array(rec.get("edge_importances") or np.zeros((0, k)),
                             dtype=np.float64).reshape(-1, k))
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"{path} line {lineno}: {exc}") from None
            if masks.node_importance.shape[0] != g.node_count or masks.edge_importance.shape[0] != g.edge_count:
                raise ValidationError(f"{path} line {lineno}: mask shape does not match graph {idx}")
            out.append(masks)
    if len(out) != len(dataset):
        raise ValidationError(f"{path}: {len(out)} mask records for {len(dataset)} graphs")
    return out


def save_external_masks(masks: Sequence[ExplanationMasks], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in masks:
            fh.write(json.dumps({"node_importances": m.node_importance.tolist(),
                                 "edge_importances": m.edge_importance.tolist()}) + "\n")
