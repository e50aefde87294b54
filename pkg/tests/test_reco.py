import numpy as np
import pytest

from core.errors import DataError, DimensionError, NumericError, UsageError
from core.reco import (
    EmbeddingMatrix,
    Interactions,
    aggregate_and_score,
    build_bipartite,
    mean_embedding,
    neighbor_info_score,
    rank_and_evaluate,
    select_neighbors,
    split_interactions,
    tune_alpha,
)
from core.synth import generate_bipartite


@pytest.fixture
def toy():
    """Users 0, 1 and items 0, 1 (unified ids 2, 3): u0-i0, u1-i0, u1-i1."""
    g = build_bipartite([0, 1, 1], [0, 0, 1], [1.0, 2.0, 1.0], 2, 2)
    E = EmbeddingMatrix(2, 2, np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0]]))
    return g, E


def brute_force_metrics(scores, train, test, k):
    """Per-user metrics from a full sort; ``scores`` is a users x items array."""
    precision, recall, ndcg, users = [], [], [], 0
    for u in range(scores.shape[0]):
        relevant = {i for uu, i in test if uu == u}
        if not relevant:
            continue
        users += 1
        seen = {i for uu, i in train if uu == u}
        ranked = sorted((i for i in range(scores.shape[1]) if i not in seen), key=lambda i: (-scores[u, i], i))[:k]
        hits = [i in relevant for i in ranked]
        precision.append(sum(hits) / k)
        recall.append(sum(hits) / len(relevant))
        dcg = sum(1 / np.log2(r + 2) for r, h in enumerate(hits) if h)
        idcg = sum(1 / np.log2(r + 2) for r in range(min(k, len(relevant))))
        ndcg.append(dcg / idcg)
    return np.mean(precision), np.mean(recall), np.mean(ndcg), users


def in_group_share(sel, data):
    groups = np.concatenate([data.user_groups, data.item_groups])
    same = total = 0
    for node, chosen in enumerate(sel.selected):
        same += int(np.sum(groups[chosen] == groups[node]))
        total += chosen.shape[0]
    return same / total


class TestBipartiteGraph:
    def test_duplicates_summed(self):
        g = build_bipartite([0, 0, 1], [1, 1, 0], [1.0, 2.5, 1.0], 2, 2)
        assert g.num_interactions == 2
        assert g.matrix[0, 1] == 3.5

    def test_transpose_and_unified_blocks(self, toy):
        g, _ = toy
        np.testing.assert_array_equal(g.item_users(0), [0, 1])
        dense = g.unified().toarray()
        np.testing.assert_array_equal(dense, dense.T)
        assert dense[:2, :2].sum() == 0 and dense[2:, 2:].sum() == 0
        assert dense[1, 2] == 2.0

    def test_rejects_bad_weights(self):
        with pytest.raises(DataError):
            build_bipartite([0], [0], [0.0], 1, 1)

    def test_rejects_out_of_range(self):
        with pytest.raises(DataError, match="item id"):
            build_bipartite([0], [3], None, 1, 2)

    def test_embedding_shape(self):
        with pytest.raises(DimensionError):
            EmbeddingMatrix(2, 2, np.zeros((3, 4)))
        with pytest.raises(DataError):
            EmbeddingMatrix(1, 1, np.array([[np.inf], [0.0]]))


class TestNeighborInfoScore:
    def test_all_zero(self):
        z = np.zeros(3)
        assert neighbor_info_score(z, z, z) == pytest.approx(-1.386294, abs=1e-6)

    def test_large_affinity_limit(self):
        xu, xv = np.array([700.0]), np.array([1.0])
        assert neighbor_info_score(xu, xv, np.zeros(1)) == pytest.approx(-0.693147, abs=1e-6)

    def test_scalar_example(self):
        got = neighbor_info_score(np.array([1.0, 0.0]), np.array([2.0, 0.0]), np.array([0.5, 0.0]))
        assert got == pytest.approx(-1.101005, abs=1e-6)

    def test_finite_at_extremes(self):
        xu = np.array([1.0])
        assert np.isfinite(neighbor_info_score(xu, np.array([-700.0]), np.array([700.0])))

    def test_monotone_in_both_dot_products(self):
        xu, xbar = np.array([1.0, 0.0]), np.array([0.3, 0.0])
        values = [neighbor_info_score(xu, np.array([t, 0.0]), xbar) for t in np.linspace(-5, 5, 21)]
        assert np.all(np.diff(values) > 0)
        xv = np.array([1.0, 0.0])
        values = [neighbor_info_score(xu, xv, np.array([t, 0.0])) for t in np.linspace(-5, 5, 21)]
        assert np.all(np.diff(values) < 0)

    def test_errors(self):
        with pytest.raises(DimensionError):
            neighbor_info_score(np.zeros(2), np.zeros(3), np.zeros(2))
        with pytest.raises(NumericError):
            neighbor_info_score(np.array([np.nan]), np.zeros(1), np.zeros(1))


class TestMeanEmbedding:
    def test_examples(self):
        assert mean_embedding(EmbeddingMatrix(1, 1, np.array([[1.0, 0.0], [0.0, 1.0]]))).tolist() == [0.5, 0.5]
        z = np.array([3.0, -1.0, 2.0])
        np.testing.assert_array_equal(mean_embedding(EmbeddingMatrix(2, 2, np.tile(z, (4, 1)))), z)

    def test_matches_summation(self):
        values = np.random.default_rng(42).standard_normal((10, 4))
        np.testing.assert_allclose(mean_embedding(EmbeddingMatrix(4, 6, values)), values.sum(axis=0) / 10)


class TestSelectNeighbors:
    @pytest.mark.parametrize("policy", ["random-walk", "intuitive", "negcn"])
    def test_single_neighbor(self, policy):
        g = build_bipartite([0], [0], None, 1, 1)
        E = EmbeddingMatrix(1, 1, np.array([[1.0], [0.5]]))
        sel = select_neighbors(g, E, policy, k=3, seed=0)
        assert [s.tolist() for s in sel.selected] == [[1], [0]]

    def test_intuitive_takes_heaviest(self):
        g = build_bipartite([0, 0, 0], [0, 1, 2], [1.0, 3.0, 2.0], 1, 3)
        E = EmbeddingMatrix(1, 3, np.zeros((4, 2)))
        sel = select_neighbors(g, E, "intuitive", k=2, seed=0)
        assert sel.selected[0].tolist() == [2, 3]

    def test_ties_by_smaller_id(self):
        g = build_bipartite([0, 0, 0], [0, 1, 2], None, 1, 3)
        E = EmbeddingMatrix(1, 3, np.zeros((4, 2)))
        sel = select_neighbors(g, E, "intuitive", k=2, seed=0)
        assert sel.selected[0].tolist() == [1, 2]

    def test_negcn_prefers_aligned_neighbor(self, toy):
        g, E = toy
        sel = select_neighbors(g, E, "negcn", k=1, seed=0)
        # user 1 = [0, 1] against items [1, 1] and [2, 0]
        assert sel.selected[1].tolist() == [2]

    def test_large_k_agrees_across_policies(self):
        data = generate_bipartite(30, 40, 3, 0.2, seed=1, dim=8, mean_interactions=5.0)
        k = int(np.diff(data.graph.unified().indptr).max())
        sets = [
            [set(s.tolist()) for s in select_neighbors(data.graph, data.embeddings, p, k, seed=0).selected]
            for p in ("random-walk", "intuitive", "negcn")
        ]
        assert sets[0] == sets[1] == sets[2]
        adjacency = data.graph.unified()
        for node, chosen in enumerate(sets[0]):
            assert chosen == set(adjacency.indices[adjacency.indptr[node] : adjacency.indptr[node + 1]].tolist())

    def test_selection_is_valid_and_deterministic(self):
        data = generate_bipartite(40, 60, 4, 0.3, seed=2, dim=8, mean_interactions=8.0)
        a = select_neighbors(data.graph, data.embeddings, "random-walk", 3, seed=5, walks=20)
        b = select_neighbors(data.graph, data.embeddings, "random-walk", 3, seed=5, walks=20)
        adjacency = data.graph.unified()
        for node, (x, y) in enumerate(zip(a.selected, b.selected)):
            np.testing.assert_array_equal(x, y)
            assert x.shape[0] == np.unique(x).shape[0] <= 3
            assert np.isin(x, adjacency.indices[adjacency.indptr[node] : adjacency.indptr[node + 1]]).all()

    def test_noiseless_groups_select_in_group(self):
        data = generate_bipartite(50, 80, 4, 0.0, seed=3, embed_noise=0.0, dim=8, mean_interactions=6.0)
        sel = select_neighbors(data.graph, data.embeddings, "negcn", 3, seed=0)
        assert in_group_share(sel, data) == 1.0

    def test_negcn_beats_random_walk_on_planted_groups(self):
        data = generate_bipartite(200, 300, 5, 0.3, seed=4, dim=16)
        negcn = select_neighbors(data.graph, data.embeddings, "negcn", 5, seed=0)
        intuitive = select_neighbors(data.graph, data.embeddings, "intuitive", 5, seed=0)
        walk = select_neighbors(data.graph, data.embeddings, "random-walk", 5, seed=0, walks=50)
        assert in_group_share(negcn, data) > in_group_share(walk, data)
        assert in_group_share(intuitive, data) > in_group_share(walk, data)

    def test_rejects_bad_arguments(self, toy):
        g, E = toy
        with pytest.raises(UsageError):
            select_neighbors(g, E, "popularity", 2, seed=0)
        with pytest.raises(UsageError):
            select_neighbors(g, E, "negcn", 0, seed=0)
        with pytest.raises(DimensionError):
            select_neighbors(g, EmbeddingMatrix(3, 1, E.values), "negcn", 2, seed=0)


class TestAggregate:
    def test_alpha_one_is_raw_inner_product(self, toy):
        g, E = toy
        scorer = aggregate_and_score(E, select_neighbors(g, E, "intuitive", 5, seed=0), 1.0)
        np.testing.assert_allclose(scorer(1, np.array([0, 1])), [1.0, 0.0])

    def test_hand_computed_half_mix(self, toy):
        g, E = toy
        scorer = aggregate_and_score(E, select_neighbors(g, E, "intuitive", 5, seed=0), 0.5)
        np.testing.assert_allclose(scorer(0, np.array([0, 1])), [1.125, 1.25])
        np.testing.assert_allclose(scorer(1, np.array([0, 1])), [1.125, 1.125])

    def test_empty_selection_keeps_embedding(self):
        g = build_bipartite([0], [0], None, 2, 1)
        E = EmbeddingMatrix(2, 1, np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 1.0]]))
        scorer = aggregate_and_score(E, select_neighbors(g, E, "negcn", 2, seed=0), 0.0)
        np.testing.assert_allclose(scorer.refined[1], [3.0, 4.0])
        np.testing.assert_allclose(scorer.refined[0], [0.0, 1.0])

    def test_alpha_range(self, toy):
        g, E = toy
        with pytest.raises(UsageError):
            aggregate_and_score(E, select_neighbors(g, E, "negcn", 1, seed=0), 1.5)


class TestRankAndEvaluate:
    def test_single_item_ranked_first(self):
        g = build_bipartite([0], [0], None, 1, 30)
        test = Interactions.from_pairs([0], [5])
        report = rank_and_evaluate(lambda u, items: (items == 5).astype(float), g, test, k=20)
        assert (report.ndcg_at_k, report.recall_at_k, report.precision_at_k) == (1.0, 1.0, 1 / 20)

    def test_relevant_item_outside_top_k(self):
        g = build_bipartite([0], [0], None, 1, 30)
        test = Interactions.from_pairs([0], [5])
        report = rank_and_evaluate(lambda u, items: -(items == 5).astype(float), g, test, k=3)
        assert (report.ndcg_at_k, report.recall_at_k, report.precision_at_k) == (0.0, 0.0, 0.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n_users, n_items, k = int(rng.integers(1, 11)), int(rng.integers(2, 51)), int(rng.integers(1, 11))
        draws = int(rng.integers(2, 6 * n_users + 3))
        draw_u, draw_i = rng.integers(0, n_users, draws), rng.integers(0, n_items, draws)
        pairs = sorted({(int(u), int(i)) for u, i in zip(draw_u, draw_i)})
        if len(pairs) < 2:
            pairs = [(0, 0), (0, 1)]
        rng.shuffle(pairs)
        cut = max(1, len(pairs) * 3 // 4)
        train, test = pairs[:cut], pairs[cut:]
        scores = np.round(rng.standard_normal((n_users, n_items)), 1)  # rounding forces ties
        g = build_bipartite([u for u, _ in train], [i for _, i in train], None, n_users, n_items)
        inter = Interactions.from_pairs([u for u, _ in test], [i for _, i in test])
        report = rank_and_evaluate(lambda u, items: scores[u, items], g, inter, k=k)
        precision, recall, ndcg, users = brute_force_metrics(scores, train, test, k)
        assert report.users_evaluated == users
        assert report.precision_at_k == pytest.approx(precision, abs=1e-12)
        assert report.recall_at_k == pytest.approx(recall, abs=1e-12)
        assert report.ndcg_at_k == pytest.approx(ndcg, abs=1e-12)

    def test_invariant_to_increasing_transform(self):
        rng = np.random.default_rng(42)
        scores = rng.standard_normal((4, 20))
        g = build_bipartite([0, 1, 2, 3], [0, 1, 2, 3], None, 4, 20)
        test = Interactions.from_pairs([0, 1, 2, 3, 3], [7, 8, 9, 10, 11])
        a = rank_and_evaluate(lambda u, items: scores[u, items], g, test, k=4)
        b = rank_and_evaluate(lambda u, items: np.exp(3 * scores[u, items]) + 1, g, test, k=4)
        assert a == b

    def test_overlap_with_training(self, toy):
        g, _ = toy
        with pytest.raises(DataError, match="overlap"):
            rank_and_evaluate(lambda u, items: np.zeros(len(items)), g, Interactions.from_pairs([1], [1]), k=1)

    def test_no_test_users(self, toy):
        g, _ = toy
        with pytest.raises(DataError):
            rank_and_evaluate(lambda u, items: np.zeros(len(items)), g, Interactions.from_pairs([], []), k=1)

    def test_k_range(self, toy):
        g, _ = toy
        with pytest.raises(UsageError):
            rank_and_evaluate(lambda u, items: np.zeros(len(items)), g, Interactions.from_pairs([0], [1]), k=0)


class TestSplitAndTune:
    def test_split_partitions_each_user(self):
        rng = np.random.default_rng(0)
        inter = Interactions.from_pairs(rng.integers(0, 20, 400), rng.integers(0, 50, 400))
        parts = split_interactions(inter, 50, seed=3)
        keys = [set(p.keys(50).tolist()) for p in parts]
        assert not (keys[0] & keys[1] or keys[0] & keys[2] or keys[1] & keys[2])
        assert set().union(*keys) == set(inter.keys(50).tolist())
        assert set(parts[0].users.tolist()) == set(inter.users.tolist())

    def test_split_fraction_validation(self):
        inter = Interactions.from_pairs([0], [0])
        with pytest.raises(UsageError):
            split_interactions(inter, 1, fractions=(0.5, 0.6))

    def test_split_is_seeded(self):
        rng = np.random.default_rng(1)
        inter = Interactions.from_pairs(rng.integers(0, 10, 200), rng.integers(0, 40, 200))
        a = split_interactions(inter, 40, seed=9)
        b = split_interactions(inter, 40, seed=9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.keys(40), y.keys(40))

    def test_tune_alpha_prefers_larger_on_ties(self, toy):
        g, _ = toy
        E = EmbeddingMatrix(2, 2, np.zeros((4, 2)))
        sel = select_neighbors(g, E, "negcn", 2, seed=0)
        tune = Interactions.from_pairs([0], [1])
        alpha, results = tune_alpha(E, sel, g, tune, k=1)
        assert alpha == 1.0
        assert set(results) == {0.0, 0.25, 0.5, 0.75, 1.0}


@pytest.mark.slow
def test_policy_ordering_on_planted_benchmark():
    policies = ("negcn", "intuitive", "random-walk")
    ndcg = {policy: [] for policy in policies}
    for seed in range(5):
        data = generate_bipartite(500, 1000, 5, 0.1, seed=seed)
        for policy in policies:
            sel = select_neighbors(data.graph, data.embeddings, policy, 5, seed=seed)
            scorer = aggregate_and_score(data.embeddings, sel, 0.5)
            ndcg[policy].append(rank_and_evaluate(scorer, data.graph, data.test, 20).ndcg_at_k)
    means = {policy: np.mean(values) for policy, values in ndcg.items()}
    assert means["negcn"] >= means["intuitive"] >= means["random-walk"]
    assert all(n > r for n, r in zip(ndcg["negcn"], ndcg["random-walk"]))
