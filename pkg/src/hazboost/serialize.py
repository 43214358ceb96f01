"""Versioned text files for fitted models.

A model file is a magic line (``hazboost-model v1`` or ``hazboost-cox v1``)
followed by a JSON document. Floats are written with their shortest
round-trip representation, so loading reproduces predictions bit-exactly.
"""
from __future__ import annotations

import json
import math

import numpy as np

from .boost.model import HazardModel
from .boost.tree import LEAF, TIME, Tree
from .cox import CoxModel

__all__ = ["COX_MAGIC", "MODEL_MAGIC", "ModelFormatError", "load_model", "save_model"]

MODEL_MAGIC = "hazboost-model v1"
COX_MAGIC = "hazboost-cox v1"


class ModelFormatError(ValueError):
    """Unreadable, truncated or unsupported model file."""


def _tree_to_json(tree: Tree) -> list:
    nodes = []
    for i in range(tree.n_nodes):
        c = int(tree.coord[i])
        if c == LEAF:
            nodes.append({"leaf_value": float(tree.value[i])})
        else:
            nodes.append({
                "split_coord": "TIME" if c == TIME else c,
                "threshold": float(tree.threshold[i]),
                "left": int(tree.left[i]),
                "right": int(tree.right[i]),
                "default_left": bool(tree.default_left[i]),
            })
    return nodes


def _tree_from_json(nodes: list, n_features: int) -> Tree:
    n = len(nodes)
    coord, threshold, left, right, default_left, value = [], [], [], [], [], []
    for i, node in enumerate(nodes):
        if "leaf_value" in node:
            v = float(node["leaf_value"])
            if not math.isfinite(v):
                raise ModelFormatError(f"node {i}: leaf value is not finite")
            coord.append(LEAF)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            default_left.append(False)
            value.append(v)
            continue
        c = node["split_coord"]
        c = TIME if c == "TIME" else int(c)
        if c != TIME and not 0 <= c < n_features:
            raise ModelFormatError(f"node {i}: split_coord {c} out of range")
        lo, hi = int(node["left"]), int(node["right"])
        if not (i < lo < n and i < hi < n):
            raise ModelFormatError(f"node {i}: child index out of range")
        coord.append(c)
        threshold.append(float(node["threshold"]))
        left.append(lo)
        right.append(hi)
        default_left.append(bool(node["default_left"]))
        value.append(0.0)
    return Tree(coord, threshold, left, right, default_left, value)


def save_model(model, path) -> None:
    if isinstance(model, HazardModel):
        body = {
            "base_score": float(model.base_score),
            "learning_rate": float(model.learning_rate),
            "time_grid": [float(t) for t in model.time_grid],
            "feature_names": list(model.feature_names),
            "params": model.params,
            "trees": [_tree_to_json(t) for t in model.trees],
        }
        magic = MODEL_MAGIC
    elif isinstance(model, CoxModel):
        body = {
            "beta": [float(b) for b in model.beta],
            "feature_names": list(model.feature_names),
            "iterations": int(model.iterations),
            "grad_norm": float(model.grad_norm),
        }
        magic = COX_MAGIC
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    text = magic + "\n" + json.dumps(body, allow_nan=False, separators=(",", ":")) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def load_model(path):
    with open(path, "rb") as f:
        raw = f.read()
    head, sep, rest = raw.partition(b"\n")
    magic = head.decode("utf-8", errors="replace").strip()
    if magic not in (MODEL_MAGIC, COX_MAGIC):
        if magic.startswith("hazboost-"):
            raise ModelFormatError(f"{path}: unsupported model format version {magic!r}")
        raise ModelFormatError(f"{path}: not a hazboost model file (byte offset 0)")
    offset = len(head) + len(sep)
    text = rest.decode("utf-8")
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        byte = offset + len(text[: exc.pos].encode("utf-8"))
        raise ModelFormatError(f"{path}: malformed model body at byte offset {byte}: {exc.msg}") from None
    try:
        if magic == COX_MAGIC:
            return CoxModel(
                np.array(body["beta"], dtype=float),
                body["feature_names"],
                int(body.get("iterations", 0)),
                float(body.get("grad_norm", 0.0)),
            )
        names = body["feature_names"]
        trees = [_tree_from_json(nodes, len(names)) for nodes in body["trees"]]
        model = HazardModel(
            float(body["base_score"]),
            float(body["learning_rate"]),
            np.array(body["time_grid"], dtype=float),
            names,
            trees,
            dict(body.get("params", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: invalid model contents: {exc}") from None
    grid = model.time_grid
    for tree in model.trees:
        if not np.all(np.isin(tree.split_thresholds(TIME), grid)):
            raise ModelFormatError(f"{path}: a TIME threshold is not on the model time grid")
    return model
