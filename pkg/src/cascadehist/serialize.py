"""Model files (JSON), Graphviz DOT export and plain-text rendering.

Model JSON is written with a fixed key order and ``repr``-exact floats, so
identical fits give byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import FullHistogram
from .evaluation import FittedDensity
from .rulelist import Antecedent, RuleList
from .schema import Schema
from .tree import LeafStats, Tree

FORMAT_NAME = "cascadehist-model"
FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """A model file that cannot be read back."""


def _leaf_record(stats: LeafStats, k: int) -> dict:
    return {
        "n": int(stats.counts[k]),
        "volume": int(stats.volumes[k]),
        "density": float(stats.densities[k]),
    }


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _tree_node(tree: Tree, stats: LeafStats, node: int, leaf_pos: dict) -> dict:
    if tree.is_leaf(node):
        return {"leaf": _leaf_record(stats, leaf_pos[node])}
    feat = tree.schema.features[tree.features[node]]
    return {
        "feature": feat.name,
        "branches": [
            {
                "values": [feat.categories[v] for v in tree.subsets[c]],
                "child": _tree_node(tree, stats, c, leaf_pos),
            }
            for c in tree.children[node]
        ],
    }


def model_to_dict(fitted: FittedDensity, kind: str, hyper: dict | None = None,
                  score: float | None = None, extra: dict | None = None) -> dict:
    """Serializable description of a fitted model.

    ``kind`` is one of ``leaf``, ``branch``, ``list`` or ``histogram``.
    """
    model, stats = fitted.model, fitted.stats
    out = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "schema": model.schema.to_dict(),
        "hyper": dict(hyper or {}),
        "score": None if score is None else float(score),
        "n": int(stats.n),
        "n_leaves": int(stats.n_leaves),
    }
    if isinstance(model, Tree):
        pos = {leaf: k for k, leaf in enumerate(model.leaves)}
        out["tree"] = _tree_node(model, stats, 0, pos)
    elif isinstance(model, RuleList):
        out["rules"] = [
            {"if": a.to_dict(model.schema), **_leaf_record(stats, j + 1)}
            for j, a in enumerate(model.rules)
        ]
        out["default"] = _leaf_record(stats, 0)
    elif isinstance(model, FullHistogram):
        out["bins"] = [
            {"config": list(model.schema.labels(cfg)), "n": int(c)}
            for cfg, c in zip(model.configs, model.counts)
        ]
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if extra:
        out.update(extra)
    return out


def dumps_model(obj: dict) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def save_model(obj: dict, path) -> None:
    Path(path).write_text(dumps_model(obj), encoding="utf-8")


def _parse_tree(node: dict, schema: Schema, counts: list):
    if "leaf" in node:
        counts.append(int(node["leaf"]["n"]))
        return None
    j = schema.index_of(node["feature"])
    cats = schema.features[j].categories
    branches = []
    for br in node["branches"]:
        vals = tuple(sorted(cats.index(v) for v in br["values"]))
        branches.append((vals, _parse_tree(br["child"], schema, counts)))
    return (j, tuple(branches))


def _parse_antecedent(cond: dict, schema: Schema) -> Antecedent:
    pairs = []
    for name, label in cond.items():
        j = schema.index_of(name)
        pairs.append((j, schema.features[j].categories.index(label)))
    return Antecedent(tuple(pairs))


def model_from_dict(obj: dict) -> tuple[FittedDensity, dict]:
    """Rebuild the fitted density; returns it with the raw dict."""
    if obj.get("format") != FORMAT_NAME:
        raise ModelFileError("not a model file")
    try:
        schema = Schema.from_dict(obj["schema"])
        n = int(obj["n"])
        kind = obj["kind"]
        if "tree" in obj:
            counts: list = []
            # leaves are parsed in preorder, matching Tree.leaves
            tree = Tree(schema, _parse_tree(obj["tree"], schema, counts))
            stats = LeafStats(tree.leaves, np.array(counts, dtype=np.int64), tree.leaf_volumes, n)
            return FittedDensity(tree, stats), obj
        if "rules" in obj:
            rules = tuple(_parse_antecedent(r["if"], schema) for r in obj["rules"])
            rl = RuleList(schema, rules)
            counts = [int(obj["default"]["n"])] + [int(r["n"]) for r in obj["rules"]]
            stats = LeafStats(tuple(range(rl.m + 1)), np.array(counts, dtype=np.int64), rl.volumes, n)
            return FittedDensity(rl, stats), obj
        if "bins" in obj:
            cfgs = [schema.encode(b["config"]) for b in obj["bins"]]
            hist = FullHistogram(schema, cfgs, [int(b["n"]) for b in obj["bins"]])
            return FittedDensity(hist, hist.stats()), obj
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    raise ModelFileError(f"model file of kind {kind!r} has no structure")


def load_model(path) -> tuple[FittedDensity, dict]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(obj)


# ---------------------------------------------------------------------------
# DOT and text
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.4g}"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _leaf_label(stats: LeafStats, k: int) -> str:
    n = stats.n
    mass = int(stats.counts[k]) / n if n else 0.0
    return (
        f"f = {_fmt(stats.densities[k])}\\nVol = {int(stats.volumes[k])}"
        f"\\nn_l/n = {_fmt(mass)}"
    )


def _values_label(schema: Schema, feature: int, values) -> str:
    cats = schema.features[feature].categories
    if len(values) == 1:
        return _dot_escape(cats[values[0]])
    return _dot_escape("{" + ", ".join(cats[v] for v in values) + "}")


def to_dot(fitted: FittedDensity) -> str:
    """Graphviz rendering: split nodes show the feature, edges the value
    sets, and leaf boxes the density f, volume Vol and mass n_l / n."""
    model, stats = fitted.model, fitted.stats
    schema = model.schema
    lines = ["digraph cascade {", '  node [fontname="Helvetica"];']
    if isinstance(model, Tree):
        pos = {leaf: k for k, leaf in enumerate(model.leaves)}
        for i in range(model.n_nodes):
            if model.is_leaf(i):
                lines.append(f'  n{i} [shape=box, label="{_leaf_label(stats, pos[i])}"];')
            else:
                name = _dot_escape(schema.features[model.features[i]].name)
                lines.append(f'  n{i} [shape=ellipse, label="{name}"];')
        for i in model.internal_nodes:
            for c in model.children[i]:
                lab = _values_label(schema, model.features[i], model.subsets[c])
                lines.append(f'  n{i} -> n{c} [label="{lab}"];')
    elif isinstance(model, RuleList):
        for j, a in enumerate(model.rules):
            cond = _dot_escape(a.describe(schema))
            lines.append(f'  r{j} [shape=ellipse, label="{cond}"];')
            lines.append(f'  l{j + 1} [shape=box, label="{_leaf_label(stats, j + 1)}"];')
            lines.append(f'  r{j} -> l{j + 1} [label="yes"];')
            nxt = f"r{j + 1}" if j + 1 < model.m else "l0"
            lines.append(f'  r{j} -> {nxt} [label="else"];')
        lines.append(f'  l0 [shape=box, label="{_leaf_label(stats, 0)}"];')
    else:
        raise TypeError(f"no DOT rendering for {type(model).__name__}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_text(fitted: FittedDensity) -> str:
    """Lists in if / else if / else form; trees as an indented outline."""
    model, stats = fitted.model, fitted.stats
    schema = model.schema
    out = []
    if isinstance(model, RuleList):
        for j, a in enumerate(model.rules):
            kw = "if" if j == 0 else "else if"
            out.append(
                f"{kw} {a.describe(schema)} then density = {_fmt(stats.densities[j + 1])}"
                f"  (n = {int(stats.counts[j + 1])}, Vol = {int(stats.volumes[j + 1])})"
            )
        kw = "else" if model.m else "always"
        out.append(
            f"{kw} density = {_fmt(stats.densities[0])}"
            f"  (n = {int(stats.counts[0])}, Vol = {int(stats.volumes[0])})"
        )
    elif isinstance(model, Tree):
        pos = {leaf: k for k, leaf in enumerate(model.leaves)}

        def walk(node, depth, head):
            pad = "  " * depth
            if model.is_leaf(node):
                k = pos[node]
                out.append(
                    f"{pad}{head}density = {_fmt(stats.densities[k])}"
                    f"  (n = {int(stats.counts[k])}, Vol = {int(stats.volumes[k])})"
                )
                return
            feat = schema.features[model.features[node]]
            if head:
                out.append(f"{pad}{head.rstrip(': ')}:")
                depth += 1
                pad = "  " * depth
            for c in model.children[node]:
                vals = ", ".join(feat.categories[v] for v in model.subsets[c])
                walk(c, depth, f"{feat.name} in {{{vals}}}: ")

        walk(0, 0, "")
    elif isinstance(model, FullHistogram):
        for cfg, c in zip(model.configs, model.counts):
            out.append(f"{', '.join(schema.labels(cfg))}: n = {int(c)}")
    else:
        raise TypeError(f"no text rendering for {type(model).__name__}")
    return "\n".join(out) + "\n"
