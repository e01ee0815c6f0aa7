import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osdr import models as m
from osdr.engine import EngineConfig, EngineState, StreamSample, engine_step
from osdr.grassmann import projector_distance, random_subspace
from osdr.tree import (
    TreeError,
    TreeNode,
    affinity,
    affinity_select,
    ancestors,
    build_tree,
    common_parent,
    max_orthonormality_error,
    read_tree_spec,
    tree_interaction_step,
    tree_predict_interaction,
    write_tree_spec,
)

THREE_LEAF = {(1, 1): None, (2, 1): (1, 1), (2, 2): (1, 1), (3, 1): (2, 1), (3, 2): (2, 1)}


def brute_affinity(node, x, kind):
    v = x - node.offset
    w = np.linalg.lstsq(node.U, v, rcond=None)[0]
    value = float(np.sum((v - node.U @ w) ** 2))
    if kind == "mahalanobis":
        value += float(np.sum(w ** 2 / node.shape))
    return value


def brute_select(tree, x, kind):
    values = {k: brute_affinity(tree[k], x, kind) for k in tree.leaves}
    best = min(values.values())
    return min(k for k, v in values.items() if v == best)


def random_structure(n_leaves, rng):
    """Random full binary tree with ``n_leaves`` leaves, keyed by (level, index)."""
    structure = {(1, 1): None}
    leaves = [(1, 1)]
    counters = {}
    while len(leaves) < n_leaves:
        parent = leaves.pop(int(rng.integers(len(leaves))))
        level = parent[0] + 1
        for _ in range(2):
            counters[level] = counters.get(level, 0) + 1
            child = (level, counters[level])
            structure[child] = parent
            leaves.append(child)
    return structure


def three_leaf_tree(D=12, d=2, seed=0, spread=3.0):
    rng = np.random.default_rng(seed)
    offsets = {k: spread * rng.standard_normal(D) for k in THREE_LEAF}
    shapes = {k: np.array([1.0, 0.5]) for k in THREE_LEAF}
    params = {k: m.RdpParams(float(rng.normal()), float(rng.normal())) for k in THREE_LEAF}
    return build_tree(THREE_LEAF, D, d, seed, offsets=offsets, shapes=shapes, params=params)


class TestStructure:
    def test_leaves_and_root(self):
        tree = three_leaf_tree()
        assert tree.root == (1, 1)
        assert tree.leaves == ((2, 2), (3, 1), (3, 2))
        assert tree.D == 12

    def test_unary_node_rejected(self):
        with pytest.raises(TreeError):
            build_tree({(1, 1): None, (2, 1): (1, 1)}, 5, 2, 0)

    def test_two_roots_rejected(self):
        with pytest.raises(TreeError):
            build_tree({(1, 1): None, (1, 2): None}, 5, 2, 0)

    def test_missing_parent_rejected(self):
        with pytest.raises(TreeError):
            build_tree({(1, 1): None, (2, 1): (1, 1), (2, 2): (1, 9)}, 5, 2, 0)

    @pytest.mark.parametrize("shape", [[0.5, 1.0], [1.0, -0.1], [1.0]])
    def test_bad_shape_rejected(self, shape):
        with pytest.raises(TreeError):
            build_tree({(1, 1): None}, 5, 2, 0, shapes={(1, 1): np.array(shape)})

    def test_node_subspaces_are_seeded_per_node(self):
        a = build_tree(THREE_LEAF, 8, 2, seed=4)
        b = build_tree({(1, 1): None}, 8, 2, seed=4)
        assert np.array_equal(a[(1, 1)].U, b[(1, 1)].U)
        assert not np.array_equal(a[(2, 1)].U, a[(2, 2)].U)


class TestAffinitySelect:
    def test_single_leaf(self, rng):
        tree = build_tree({(1, 1): None}, 6, 2, 0)
        assert affinity_select(tree, rng.standard_normal(6)) == (1, 1)

    @pytest.mark.parametrize("leaf", [(2, 2), (3, 1), (3, 2)])
    def test_offset_itself(self, leaf):
        tree = three_leaf_tree(spread=10.0)
        assert affinity_select(tree, tree[leaf].offset.copy()) == leaf

    @pytest.mark.parametrize("kind", ["mahalanobis", "euclidean"])
    @pytest.mark.parametrize("seed", range(5))
    def test_exhaustive_oracle(self, kind, seed):
        tree = three_leaf_tree(seed=seed)
        rng = np.random.default_rng(seed + 100)
        for _ in range(20):
            x = 3.0 * rng.standard_normal(12)
            assert affinity_select(tree, x, kind) == brute_select(tree, x, kind)
            for k in tree.leaves:
                assert affinity(tree[k], x, kind) == pytest.approx(brute_affinity(tree[k], x, kind), rel=1e-10)

    def test_ties_go_to_smaller_key(self):
        U = np.eye(4)[:, :2]
        nodes = {k: np.zeros(4) for k in THREE_LEAF}
        tree = build_tree(THREE_LEAF, 4, 2, 0, offsets=nodes, subspaces={k: U for k in THREE_LEAF})
        assert affinity_select(tree, np.ones(4)) == (2, 2)

    def test_zero_shape_is_infinite_off_center(self):
        node = build_tree({(1, 1): None}, 4, 2, 0, subspaces={(1, 1): np.eye(4)[:, :2]},
                          shapes={(1, 1): np.array([1.0, 0.0])})[(1, 1)]
        assert affinity(node, np.array([1.0, 0.0, 0.0, 0.0])) == 1.0
        assert affinity(node, np.array([0.0, 1.0, 0.0, 0.0])) == np.inf

    def test_masked_affinity_uses_observed_rows(self, rng):
        tree = three_leaf_tree()
        x = rng.standard_normal(12)
        mask = np.ones(12, dtype=bool)
        for k in tree.leaves:
            assert affinity(tree[k], x, mask=mask) == pytest.approx(affinity(tree[k], x))
        mask[:11] = False
        assert affinity(tree[(2, 2)], x, mask=mask) == np.inf

    def test_unknown_kind(self, rng):
        with pytest.raises(ValueError):
            affinity(three_leaf_tree()[(2, 2)], rng.standard_normal(12), kind="cosine")

    @given(st.integers(1, 16), st.integers(0, 2**32 - 1), st.sampled_from(["mahalanobis", "euclidean"]))
    def test_selection_optimality(self, n_leaves, seed, kind):
        rng = np.random.default_rng(seed)
        structure = random_structure(n_leaves, rng)
        offsets = {k: 2.0 * rng.standard_normal(6) for k in structure}
        shapes = {k: np.sort(rng.random(2) + 0.1)[::-1] for k in structure}
        tree = build_tree(structure, 6, 2, seed, offsets=offsets, shapes=shapes)
        assert len(tree.leaves) == n_leaves
        x = 2.0 * rng.standard_normal(6)
        chosen = affinity_select(tree, x, kind)
        best = min(brute_affinity(tree[k], x, kind) for k in tree.leaves)
        assert brute_affinity(tree[chosen], x, kind) <= best * (1 + 1e-12) + 1e-12


class TestCommonParent:
    def test_same_leaf(self):
        assert common_parent(three_leaf_tree(), (3, 1), (3, 1)) == (3, 1)

    def test_root_children(self):
        tree = build_tree({(1, 1): None, (2, 1): (1, 1), (2, 2): (1, 1)}, 4, 2, 0)
        assert common_parent(tree, (2, 1), (2, 2)) == (1, 1)

    @given(st.integers(2, 16), st.integers(0, 2**32 - 1))
    def test_path_intersection_oracle(self, n_leaves, seed):
        rng = np.random.default_rng(seed)
        structure = random_structure(n_leaves, rng)
        tree = build_tree(structure, 4, 1, 0)
        a, b = (tree.leaves[i] for i in rng.integers(len(tree.leaves), size=2))
        def path(k):
            out = [k]
            while structure[out[-1]] is not None:
                out.append(structure[out[-1]])
            return out

        pa, pb = path(a), path(b)
        assert list(ancestors(tree, a)) == pa
        shared = [k for k in pa if k in pb]
        assert common_parent(tree, a, b) == shared[0]
        assert common_parent(tree, b, a) == shared[0]


class TestInteraction:
    def test_zero_params_give_half(self, rng):
        tree = three_leaf_tree()
        zero = {k: m.RdpParams(0.0, 0.0) for k in THREE_LEAF}
        tree = tree.with_nodes(TreeNode(**{**tree[k].__dict__, "params": zero[k]}) for k in THREE_LEAF)
        assert tree_predict_interaction(tree, rng.standard_normal(12), rng.standard_normal(12)) == 0.5

    def test_orthogonal_input_gives_offset_only(self, rng):
        tree = three_leaf_tree(spread=10.0)
        leaf = (3, 1)
        node = tree[leaf]
        v = rng.standard_normal(12)
        v = 0.1 * (v - node.U @ (node.U.T @ v)) / np.linalg.norm(v)
        x1 = node.offset + v
        assert affinity_select(tree, x1) == leaf
        x2 = tree[(3, 2)].offset + 0.1 * tree[(3, 2)].U[:, 0]
        host = tree[common_parent(tree, leaf, affinity_select(tree, x2))]
        assert tree_predict_interaction(tree, x1, x2) == pytest.approx(m.sigmoid(host.params.b), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_hand_composed_prediction(self, seed):
        tree = three_leaf_tree(seed=seed)
        rng = np.random.default_rng(seed + 50)
        x1, x2 = 3.0 * rng.standard_normal(12), 3.0 * rng.standard_normal(12)
        l1, l2 = brute_select(tree, x1, "mahalanobis"), brute_select(tree, x2, "mahalanobis")
        host = tree[min(set(ancestors(tree, l1)) & set(ancestors(tree, l2)), key=lambda k: -k[0])]
        b1 = tree[l1].U.T @ (x1 - tree[l1].offset)
        b2 = tree[l2].U.T @ (x2 - tree[l2].offset)
        expected = 1.0 / (1.0 + np.exp(-(host.params.a * b1 @ b2 + host.params.b)))
        assert tree_predict_interaction(tree, x1, x2) == pytest.approx(expected, abs=1e-12)

    def test_zero_rates_leave_tree_unchanged(self, rng):
        tree = three_leaf_tree()
        new = tree_interaction_step(tree, rng.standard_normal(12), rng.standard_normal(12), 1.0, 0.0, 0.0)
        for k in THREE_LEAF:
            assert np.array_equal(new[k].U, tree[k].U) and new[k].params == tree[k].params

    def test_saturated_prediction_does_not_move(self, rng):
        tree = three_leaf_tree()
        sat = {k: m.RdpParams(1e-3, 60.0) for k in THREE_LEAF}
        tree = tree.with_nodes(TreeNode(**{**tree[k].__dict__, "params": sat[k]}) for k in THREE_LEAF)
        new = tree_interaction_step(tree, rng.standard_normal(12), rng.standard_normal(12), 1.0, 0.5, 0.5)
        for k in THREE_LEAF:
            assert projector_distance(new[k].U, tree[k].U) < 1e-12
            assert abs(new[k].params.a - tree[k].params.a) < 1e-15
            assert abs(new[k].params.b - tree[k].params.b) < 1e-15

    @pytest.mark.parametrize("seed", range(5))
    def test_single_leaf_matches_flat_model(self, seed):
        rng = np.random.default_rng(seed)
        U = random_subspace(10, 2, rng)
        params = m.RdpParams(0.8, -0.3)
        tree = build_tree({(1, 1): None}, 10, 2, 0, subspaces={(1, 1): U}, params={(1, 1): params})
        config = EngineConfig(D=10, d=2, model="rdp", eta=0.2, mu=0.1, reorthogonalize_every=0)
        state = EngineState(U, params)
        for _ in range(20):
            x1, x2 = rng.standard_normal(10), rng.standard_normal(10)
            y = float(rng.integers(2))
            tree = tree_interaction_step(tree, x1, x2, y, 0.2, 0.1)
            state = engine_step(config, state, StreamSample(x1, y, x2=x2))
            assert np.allclose(tree[(1, 1)].U, state.U, atol=1e-10)
            assert tree[(1, 1)].params.a == pytest.approx(state.params.a, abs=1e-10)
            assert tree[(1, 1)].params.b == pytest.approx(state.params.b, abs=1e-10)

    def test_step_touches_leaves_and_host_only(self, rng):
        tree = three_leaf_tree(spread=10.0)
        x1 = tree[(3, 1)].offset + tree[(3, 1)].U @ rng.standard_normal(2) + 0.1 * rng.standard_normal(12)
        x2 = tree[(2, 2)].offset + tree[(2, 2)].U @ rng.standard_normal(2) + 0.1 * rng.standard_normal(12)
        new = tree_interaction_step(tree, x1, x2, 1.0, 0.1, 0.1)
        assert not np.array_equal(new[(3, 1)].U, tree[(3, 1)].U)
        assert not np.array_equal(new[(2, 2)].U, tree[(2, 2)].U)
        assert new[(1, 1)].params != tree[(1, 1)].params
        for k in [(2, 1), (3, 2)]:
            assert new[k] is tree[k]

    def test_manifold_after_many_steps(self):
        tree = three_leaf_tree()
        rng = np.random.default_rng(9)
        for _ in range(300):
            mask1, mask2 = rng.random(12) < 0.6, rng.random(12) < 0.6
            tree = tree_interaction_step(tree, 3 * rng.standard_normal(12), 3 * rng.standard_normal(12),
                                         float(rng.integers(2)), 0.1, 0.05, mask1=mask1, mask2=mask2)
            assert max_orthonormality_error(tree) <= 1e-10

    def test_unusable_mask_leaves_tree_unchanged(self, rng):
        tree = three_leaf_tree()
        mask = np.zeros(12, dtype=bool)
        mask[0] = True
        new = tree_interaction_step(tree, rng.standard_normal(12), rng.standard_normal(12), 1.0, 0.1, 0.1,
                                    mask1=mask, mask2=mask)
        assert new is tree


class TestTreeSpec:
    def test_round_trip(self, tmp_path):
        tree = three_leaf_tree(D=5)
        path = tmp_path / "tree.txt"
        seeds = {k: 10 * k[0] + k[1] for k in THREE_LEAF}
        write_tree_spec(path, tree, seeds)
        back = read_tree_spec(path, 5, 2)
        assert back.leaves == tree.leaves
        for k in THREE_LEAF:
            assert np.array_equal(back[k].offset, tree[k].offset)
            assert np.array_equal(back[k].shape, tree[k].shape)
            assert back[k].parent == tree[k].parent
            assert np.array_equal(back[k].U, random_subspace(5, 2, np.random.default_rng(seeds[k])))

    def test_zero_offset_shorthand(self, tmp_path):
        path = tmp_path / "tree.txt"
        path.write_text("# root only\n1 1 - - 7 |  | 2.0 1.0\n")
        tree = read_tree_spec(path, 4, 2)
        assert np.array_equal(tree[(1, 1)].offset, np.zeros(4))

    @pytest.mark.parametrize("text,where", [
        ("1 1 - - 7 | 2.0 1.0\n", ":1:"),
        ("1 1 - 7 |  | 2.0 1.0\n", ":1:"),
        ("1 1 - - 7 | 1 2 | 2.0 1.0\n", ":1:"),
        ("1 1 - - 7 |  | 2.0\n", ":1:"),
        ("1 1 - - 7 |  | 2.0 1.0\n1 1 - - 7 |  | 2.0 1.0\n", ":2:"),
        ("1 1 - - x |  | 2.0 1.0\n", ":1:"),
        ("1 1 - - 7 |  | 2.0 1.0\n2 1 1 1 3 |  | 1.0 1.0\n", "children"),
    ])
    def test_errors_name_the_line(self, tmp_path, text, where):
        path = tmp_path / "tree.txt"
        path.write_text(text)
        with pytest.raises(TreeError, match=where):
            read_tree_spec(path, 4, 2)
