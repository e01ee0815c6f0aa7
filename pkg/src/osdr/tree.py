"""Multiscale union of affine subspaces coupled to random dot product models.

A :class:`SubspaceTree` is a binary tree of nodes keyed by ``(level, index)``.
Every node carries a subspace, an offset, a diagonal shape ``Lambda`` and a
logistic dot-product model. Samples are routed to the leaf with the smallest
affinity; an interaction between two samples is scored by the model of the
lowest common ancestor of their leaves, and learning moves the two leaf
subspaces plus that ancestor's parameters.

The structure, offsets and shapes are fixed at construction; only subspaces
and dot-product parameters are learned.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from . import models as m
from .engine import rdp_pair_step
from .grassmann import (
    IllConditionedMaskError,
    InsufficientObservationsError,
    mask_indices,
    orthonormality_error,
    project_coefficients_masked,
    random_subspace,
)

NodeKey = Tuple[int, int]
AFFINITY_KINDS = ("mahalanobis", "euclidean")


class TreeError(ValueError):
    """Raised for malformed trees or tree specification files."""


@dataclass(frozen=True)
class TreeNode:
    level: int
    index: int
    U: np.ndarray
    offset: np.ndarray
    shape: np.ndarray
    params: m.RdpParams = field(default_factory=m.RdpParams)
    parent: Optional[NodeKey] = None
    children: Tuple[NodeKey, ...] = ()

    @property
    def key(self) -> NodeKey:
        return (self.level, self.index)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class SubspaceTree:
    nodes: Dict[NodeKey, TreeNode]

    def __post_init__(self):
        if not self.nodes:
            raise TreeError("a tree needs at least one node")
        roots = [k for k, n in self.nodes.items() if n.parent is None]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        for key, node in self.nodes.items():
            if key != node.key:
                raise TreeError(f"node stored under {key} reports key {node.key}")
            if len(node.children) not in (0, 2):
                raise TreeError(f"node {key} has {len(node.children)} children, expected 0 or 2")
            for child in node.children:
                if child not in self.nodes or self.nodes[child].parent != key:
                    raise TreeError(f"child {child} of {key} is missing or points elsewhere")
            if node.parent is not None and key not in self.nodes[node.parent].children:
                raise TreeError(f"node {key} is not listed under its parent {node.parent}")
            if node.shape.shape != (node.U.shape[1],) or np.any(node.shape < 0):
                raise TreeError(f"node {key} needs {node.U.shape[1]} nonnegative shape entries")
            if np.any(np.diff(node.shape) > 0):
                raise TreeError(f"shape entries of node {key} must be sorted descending")

    @property
    def root(self) -> NodeKey:
        return next(k for k, n in self.nodes.items() if n.parent is None)

    @property
    def leaves(self) -> Tuple[NodeKey, ...]:
        return tuple(sorted(k for k, n in self.nodes.items() if n.is_leaf))

    @property
    def D(self) -> int:
        return next(iter(self.nodes.values())).U.shape[0]

    def __getitem__(self, key: NodeKey) -> TreeNode:
        return self.nodes[key]

    def with_nodes(self, changed: Iterable[TreeNode]) -> "SubspaceTree":
        nodes = dict(self.nodes)
        for node in changed:
            nodes[node.key] = node
        return SubspaceTree(nodes)


def build_tree(structure: Dict[NodeKey, Optional[NodeKey]], D: int, d: int, seed: int,
               offsets: Optional[Dict[NodeKey, np.ndarray]] = None,
               shapes: Optional[Dict[NodeKey, np.ndarray]] = None,
               subspaces: Optional[Dict[NodeKey, np.ndarray]] = None,
               params: Optional[Dict[NodeKey, m.RdpParams]] = None) -> SubspaceTree:
    """Assemble a tree from a ``child -> parent`` map.

    Subspaces not supplied are drawn at random from a stream seeded by
    ``(seed, level, index)``, so each node's start is independent of the others.
    """
    offsets, shapes = offsets or {}, shapes or {}
    subspaces, params = subspaces or {}, params or {}
    children: Dict[NodeKey, list] = {k: [] for k in structure}
    for key, parent in structure.items():
        if parent is not None:
            if parent not in structure:
                raise TreeError(f"parent {parent} of {key} is not a node")
            children[parent].append(key)
    nodes = {}
    for key, parent in structure.items():
        U = subspaces.get(key)
        if U is None:
            U = random_subspace(D, d, np.random.default_rng([seed, key[0], key[1]]))
        nodes[key] = TreeNode(
            level=key[0], index=key[1], U=np.asarray(U, dtype=float),
            offset=np.asarray(offsets.get(key, np.zeros(D)), dtype=float),
            shape=np.asarray(shapes.get(key, np.ones(d)), dtype=float),
            params=params.get(key, m.RdpParams()),
            parent=parent, children=tuple(sorted(children[key])))
    return SubspaceTree(nodes)


def _centered(node: TreeNode, x: np.ndarray, mask) -> Tuple[np.ndarray, np.ndarray]:
    """Coefficients and residual of ``x - offset`` against the node's subspace.

    With a mask the residual only covers observed entries.
    """
    v = np.asarray(x, dtype=float) - node.offset
    if mask is None:
        w = node.U.T @ v
        return w, v - node.U @ w
    idx = mask_indices(mask, node.U.shape[0])
    w = project_coefficients_masked(node.U, v[idx], idx)
    return w, v[idx] - node.U[idx] @ w


def affinity(node: TreeNode, x: np.ndarray, kind: str = "mahalanobis", mask=None) -> float:
    """Distance of ``x`` to the node's affine subset.

    ``euclidean`` is the squared residual off the affine subspace;
    ``mahalanobis`` adds the in-subspace spread ``sum w_i^2 / lambda_i``,
    which is infinite along directions with ``lambda_i = 0``.
    """
    if kind not in AFFINITY_KINDS:
        raise ValueError(f"unknown affinity {kind!r}; expected one of {AFFINITY_KINDS}")
    try:
        w, res = _centered(node, x, mask)
    except (InsufficientObservationsError, IllConditionedMaskError):
        return np.inf
    value = float(res @ res)
    if kind == "mahalanobis":
        with np.errstate(divide="ignore", invalid="ignore"):
            spread = np.where(w == 0.0, 0.0, w ** 2 / node.shape)
        value += float(np.sum(spread))
    return value


def affinity_select(tree: SubspaceTree, x: np.ndarray, kind: str = "mahalanobis", mask=None) -> NodeKey:
    """Leaf with the smallest affinity; ties go to the smaller ``(level, index)``."""
    best, best_value = None, np.inf
    for key in tree.leaves:
        value = affinity(tree[key], x, kind, mask)
        if best is None or value < best_value:
            best, best_value = key, value
    return best


def ancestors(tree: SubspaceTree, key: NodeKey) -> Tuple[NodeKey, ...]:
    """Path from ``key`` up to the root, inclusive."""
    path = [key]
    while tree[path[-1]].parent is not None:
        path.append(tree[path[-1]].parent)
    return tuple(path)


def common_parent(tree: SubspaceTree, a: NodeKey, b: NodeKey) -> NodeKey:
    """Lowest common ancestor; a leaf paired with itself is its own community."""
    above_a = set(ancestors(tree, a))
    return next(k for k in ancestors(tree, b) if k in above_a)


def tree_route(tree: SubspaceTree, x1, x2, kind: str = "mahalanobis",
               mask1=None, mask2=None) -> Tuple[NodeKey, NodeKey]:
    """Leaves selected for both sides of an interaction."""
    return affinity_select(tree, x1, kind, mask1), affinity_select(tree, x2, kind, mask2)


def tree_predict_interaction(tree: SubspaceTree, x1, x2, kind: str = "mahalanobis",
                             mask1=None, mask2=None, route=None) -> float:
    """``h(a beta1^T beta2 + b)`` under the community model of the two leaves.

    ``route`` reuses leaves from :func:`tree_route` computed on the same tree.
    """
    leaf1, leaf2 = route or tree_route(tree, x1, x2, kind, mask1, mask2)
    params = tree[common_parent(tree, leaf1, leaf2)].params
    try:
        b1, _ = _centered(tree[leaf1], x1, mask1)
        b2, _ = _centered(tree[leaf2], x2, mask2)
    except (InsufficientObservationsError, IllConditionedMaskError):
        return float(m.sigmoid(params.b))
    return m.rdp_predict(params, b1, b2)


def tree_interaction_step(tree: SubspaceTree, x1, x2, y: float, eta: float, mu: float,
                          kind: str = "mahalanobis", mask1=None, mask2=None, route=None,
                          supervised: bool = True) -> SubspaceTree:
    """Route both samples, step both leaf subspaces, then the community model.

    With ``supervised=False`` the leaves follow the reconstruction gradient
    instead. Samples whose mask leaves too few usable entries leave the tree
    unchanged.
    """
    leaf1, leaf2 = route or tree_route(tree, x1, x2, kind, mask1, mask2)
    n1, n2 = tree[leaf1], tree[leaf2]
    host = tree[common_parent(tree, leaf1, leaf2)]
    v1 = np.asarray(x1, dtype=float) - n1.offset
    v2 = np.asarray(x2, dtype=float) - n2.offset
    try:
        params, U1, U2 = rdp_pair_step(host.params, n1.U, n2.U, v1, v2, y, eta, mu,
                                       mask1, mask2, same=leaf1 == leaf2, supervised=supervised)
    except (InsufficientObservationsError, IllConditionedMaskError):
        return tree
    changed = [dataclasses.replace(n1, U=U1), dataclasses.replace(n2, U=U2)]
    if leaf1 == leaf2:
        changed = changed[:1]
    nodes = {n.key: n for n in changed}
    nodes[host.key] = dataclasses.replace(nodes.get(host.key, host), params=params)
    return tree.with_nodes(nodes.values())


def max_orthonormality_error(tree: SubspaceTree) -> float:
    return max(orthonormality_error(n.U) for n in tree.nodes.values())


# Tree specification files: one node per non-comment line,
#   level index parent_level parent_index seed | offset... | lambda...
# with "- -" as the parent of the root and an empty offset field for zeros.

def _format_key(key: Optional[NodeKey]) -> str:
    return "- -" if key is None else f"{key[0]} {key[1]}"


def write_tree_spec(path, tree: SubspaceTree, seeds: Optional[Dict[NodeKey, int]] = None) -> None:
    seeds = seeds or {}
    lines = ["# level index parent_level parent_index seed | offset | lambda"]
    for key in sorted(tree.nodes):
        node = tree[key]
        offset = "" if not np.any(node.offset) else " ".join(repr(float(v)) for v in node.offset)
        shape = " ".join(repr(float(v)) for v in node.shape)
        lines.append(f"{key[0]} {key[1]} {_format_key(node.parent)} {seeds.get(key, 0)} | {offset} | {shape}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_tree_spec(path, D: int, d: int) -> SubspaceTree:
    """Parse a tree specification; each node's subspace is drawn from its own seed."""
    structure, offsets, shapes, subspaces = {}, {}, {}, {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3:
            raise TreeError(f"{path}:{lineno}: expected 'header | offset | lambda'")
        head = parts[0].split()
        if len(head) != 5:
            raise TreeError(f"{path}:{lineno}: expected 'level index parent_level parent_index seed'")
        try:
            key = (int(head[0]), int(head[1]))
            parent = None if head[2] == "-" else (int(head[2]), int(head[3]))
            seed = int(head[4])
            offset = np.array([float(v) for v in parts[1].split()]) if parts[1] else np.zeros(D)
            shape = np.array([float(v) for v in parts[2].split()])
        except ValueError as exc:
            raise TreeError(f"{path}:{lineno}: {exc}") from None
        if key in structure:
            raise TreeError(f"{path}:{lineno}: duplicate node {key}")
        if offset.shape != (D,):
            raise TreeError(f"{path}:{lineno}: offset has {offset.size} entries, expected {D}")
        if shape.shape != (d,):
            raise TreeError(f"{path}:{lineno}: lambda has {shape.size} entries, expected {d}")
        structure[key], offsets[key], shapes[key] = parent, offset, shape
        subspaces[key] = random_subspace(D, d, np.random.default_rng(seed))
    try:
        return build_tree(structure, D, d, 0, offsets, shapes, subspaces)
    except TreeError as exc:
        raise TreeError(f"{path}: {exc}") from None
