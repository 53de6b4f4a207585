import random

import numpy as np
import pytest

from hetmatch import autodiff as ad
from hetmatch.autodiff import Tensor
from hetmatch.config import TrainConfig
from hetmatch.errors import DataError, UsageError
from hetmatch.graphs import HetGraph, TypeVocab, permute_nodes, typed_wl_hash
from hetmatch.model import MatchingModel, mse_loss

from conftest import random_graph

VOCAB = TypeVocab(("A", "B", "C"), ("r", "s", "t"))


def small_cfg(**overrides):
    base = dict(seed=0, hidden_dim=8, heads=2, basis_count=2, hgin_layers=2,
                graph_match_dim=8, node_match_dim=8, fcl_dims=(8, 4, 1),
                max_nodes=8)
    base.update(overrides)
    return TrainConfig(**base)


def set_zero(store):
    for _, t in store.items():
        t.data[...] = 0.0


class TestEncoder:
    def test_isolated_node_is_mlp_of_self_term(self):
        # graph with an edge plus one isolated node: the isolated row must
        # equal MLP((1+eps) * z)
        cfg = small_cfg(hgin_layers=1, normalization_mode="none")
        model = MatchingModel(VOCAB, cfg)
        g = HetGraph("g", (0, 1, 2), frozenset({(0, 1, 0)}))
        prep = model.prepare(g, canonical=False)
        z = model.encode([prep]).data[0]

        eps = model.params["enc.l0.eps"].data
        w1 = model.params["enc.l0.mlp_w1"].data
        b1 = model.params["enc.l0.mlp_b1"].data
        w2 = model.params["enc.l0.mlp_w2"].data
        b2 = model.params["enc.l0.mlp_b2"].data
        x_iso = prep.x[2]
        expected = np.maximum((1 + eps) * x_iso @ w1 + b1, 0.0) @ w2 + b2
        assert np.allclose(z[2], expected, atol=1e-12)

    def test_gin_degradation(self):
        # single relation type, basis fixed so W_r = I, no normalization:
        # the layer must reproduce the plain GIN update exactly
        vocab = TypeVocab(("A", "B", "C"), ("r",))
        cfg = small_cfg(basis_count=1, hgin_layers=1, normalization_mode="none")
        model = MatchingModel(vocab, cfg)
        d_in = len(vocab.node_types)
        model.params["enc.l0.basis"].data[...] = np.eye(d_in)[None]
        model.params["enc.l0.coeffs"].data[...] = 1.0

        rng = random.Random(0)
        for _ in range(20):
            g = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=1)
            prep = model.prepare(g, canonical=False)
            z = model.encode([prep]).data[0]

            eps = model.params["enc.l0.eps"].data
            w1 = model.params["enc.l0.mlp_w1"].data
            b1 = model.params["enc.l0.mlp_b1"].data
            w2 = model.params["enc.l0.mlp_w2"].data
            b2 = model.params["enc.l0.mlp_b2"].data
            x = prep.x
            neighbor_sum = np.zeros_like(x)
            for s, d, _ in g.edges:
                neighbor_sum[s] += x[d]
                neighbor_sum[d] += x[s]
            gin = np.maximum(((1 + eps) * x + neighbor_sum) @ w1 + b1, 0.0) @ w2 + b2
            assert np.abs(z - gin).max() < 1e-12

    def test_two_node_hand_computed(self):
        # 1-dimensional weights set by hand on a single edge
        vocab = TypeVocab(("A",), ("r",))
        cfg = TrainConfig(seed=0, hidden_dim=1, heads=1, basis_count=1,
                          hgin_layers=1, graph_match_dim=1, node_match_dim=1,
                          fcl_dims=(1,), max_nodes=2, normalization_mode="none")
        model = MatchingModel(vocab, cfg)
        p = model.params
        p["enc.l0.eps"].data[...] = 0.5
        p["enc.l0.basis"].data[...] = 2.0      # W_r = 1 * [[2]]
        p["enc.l0.coeffs"].data[...] = 1.0
        p["enc.l0.mlp_w1"].data[...] = 1.0
        p["enc.l0.mlp_b1"].data[...] = 0.25
        p["enc.l0.mlp_w2"].data[...] = 3.0
        p["enc.l0.mlp_b2"].data[...] = -0.1

        g = HetGraph("g", (0, 0), frozenset({(0, 1, 0)}))
        z = model.encode([model.prepare(g, canonical=False)]).data[0]
        # features are [1]; gamma = 2*1; pre = 1.5*1 + 2 = 3.5
        # mlp: relu(3.5*1 + 0.25) = 3.75 -> 3.75*3 - 0.1 = 11.15
        assert np.allclose(z[:2, 0], [11.15, 11.15], atol=1e-12)

    def test_permutation_equivariance_raw_order(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(1)
        for _ in range(10):
            g = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
            perm = list(range(g.n_nodes))
            rng.shuffle(perm)
            z1 = model.encode([model.prepare(g, canonical=False)]).data[0]
            z2 = model.encode(
                [model.prepare(permute_nodes(g, perm), canonical=False)]).data[0]
            for old, new in enumerate(perm):
                assert np.allclose(z1[old], z2[new], atol=1e-9)

    def test_zero_params_zero_embedding(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        set_zero(model.params)
        g = HetGraph("g", (0, 1), frozenset({(0, 1, 0)}))
        z = model.encode([model.prepare(g)]).data
        assert (z == 0.0).all()

    def test_deterministic(self):
        cfg = small_cfg()
        m1 = MatchingModel(VOCAB, cfg)
        m2 = MatchingModel(VOCAB, cfg)
        g = HetGraph("g", (0, 1, 2), frozenset({(0, 1, 0), (1, 2, 2)}))
        z1 = m1.encode([m1.prepare(g)]).data
        z2 = m2.encode([m2.prepare(g)]).data
        assert np.array_equal(z1, z2)

    def test_degree_normalization_mode(self):
        cfg = small_cfg(normalization_mode="degree", hgin_layers=1)
        model = MatchingModel(VOCAB, cfg)
        g = HetGraph("g", (0, 0, 0), frozenset({(0, 1, 0), (0, 2, 0)}))
        prep = model.prepare(g, canonical=False)
        # node 0 has two type-r neighbors: each contributes 1/2
        assert prep.adj[0, 0, 1] == 0.5 and prep.adj[0, 0, 2] == 0.5
        assert prep.adj[0, 1, 0] == 1.0  # node 1 has a single neighbor


class TestTypePool:
    def test_one_node_per_type(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        g = HetGraph("g", (0, 1, 2), frozenset({(0, 1, 0)}))
        prep = model.prepare(g)
        z = model.encode([prep])
        pooled = model.type_pool(z, [prep]).data[0]
        for c in range(3):
            node = int(np.argmax(prep.type_ind[c]))
            assert np.allclose(pooled[c], z.data[0, node], atol=1e-12)

    def test_absent_type_zero_row(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        g = HetGraph("g", (0, 0), frozenset({(0, 1, 1)}))
        prep = model.prepare(g)
        z = model.encode([prep])
        pooled = model.type_pool(z, [prep]).data[0]
        assert (pooled[1] == 0.0).all() and (pooled[2] == 0.0).all()

    def test_matches_direct_summation(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(2)
        for _ in range(10):
            g = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
            prep = model.prepare(g)
            z = model.encode([prep]).data[0]
            pooled = prep.type_ind @ z
            for c in range(3):
                direct = np.zeros(z.shape[1])
                for i in range(prep.n):
                    if prep.types[i] == c:
                        direct += z[i]
                assert np.allclose(pooled[c], direct, atol=1e-12)


class TestGraphMatch:
    def test_single_type_pool_formula(self):
        vocab = TypeVocab(("A",), ("r",))
        cfg = small_cfg()
        model = MatchingModel(vocab, cfg)
        rng = np.random.default_rng(3)
        t_a = Tensor(rng.normal(size=(1, 1, 8)))
        t_b = Tensor(rng.normal(size=(1, 1, 8)))
        capture = {}
        model.graph_match(t_a, t_b, capture)
        t_c = capture["gm.t_c"][0, 0]
        a = capture["gm.a"][0]
        sig = 1.0 / (1.0 + np.exp(-(t_c @ a)))
        assert np.allclose(capture["gm.h"][0], sig * t_c, atol=1e-12)

    def test_default_output_length_128(self):
        model = MatchingModel(VOCAB, TrainConfig(seed=0))
        g = HetGraph("g", (0, 1), frozenset({(0, 1, 0)}))
        out = model.forward_pairs([g], [g], skip_node_match=True)
        assert model.params["gm.out_w2"].data.shape[1] == 128

    def test_scalar_hand_computation(self):
        vocab = TypeVocab(("A",), ("r",))
        cfg = TrainConfig(seed=0, hidden_dim=1, heads=1, basis_count=1,
                          hgin_layers=1, graph_match_dim=1, node_match_dim=1,
                          fcl_dims=(1,), max_nodes=2)
        model = MatchingModel(vocab, cfg)
        p = model.params
        for name in ("gm.mlp_w1", "gm.mlp_w2", "gm.out_w1", "gm.out_w2", "gm.attn"):
            p[name].data[...] = 1.0
        for name in ("gm.mlp_b1", "gm.mlp_b2", "gm.out_b1", "gm.out_b2"):
            p[name].data[...] = 0.0
        t_a = Tensor(np.array([[[2.0]]]))
        t_b = Tensor(np.array([[[3.0]]]))
        out = model.graph_match(t_a, t_b).data
        # t_c = relu(2+3) = 5; a = tanh(5); h = sigmoid(5*a)*5; out = relu(h)
        a = np.tanh(5.0)
        h = 5.0 / (1.0 + np.exp(-5.0 * a))
        assert abs(out[0, 0] - max(h, 0.0)) < 1e-12


class TestNodeMatch:
    def test_cross_type_entries_exactly_zero(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(4)
        for _ in range(10):
            ga = random_graph(rng, max_nodes=6, n_node_types=3, n_edge_types=3)
            gb = random_graph(rng, max_nodes=6, n_node_types=3, n_edge_types=3)
            capture = {}
            model.forward_pairs([ga], [gb], capture=capture)
            mask = capture["nm.mask_ab"][0, 0]
            for s_key in ("nm.S_ab", "nm.channels", "nm.aligned"):
                s = capture[s_key][0]
                assert (s[:, mask == 0.0] == 0.0).all()
            s_ba = capture["nm.S_ba"][0]
            mask_ba = capture["nm.mask_ba"][0, 0]
            assert (s_ba[:, mask_ba == 0.0] == 0.0).all()

    def test_singleton_softmax_is_one(self):
        # both graphs are one node of the same type and max_nodes=1, so the
        # softmax support is a single entry
        vocab = TypeVocab(("A", "B"), ("r",))
        cfg = TrainConfig(seed=0, hidden_dim=4, heads=2, basis_count=1,
                          hgin_layers=1, graph_match_dim=4, node_match_dim=4,
                          fcl_dims=(4, 1), max_nodes=1)
        model = MatchingModel(vocab, cfg)
        ga = HetGraph("a", (0,), frozenset())
        gb = HetGraph("b", (0,), frozenset())
        pa = [model.prepare(ga)]
        pb = [model.prepare(gb)]
        z = model.encode(pa + pb)
        capture = {}
        model.node_match_matrices(ad.narrow(z, 0, 1), ad.narrow(z, 1, 2),
                                  pa, pb, capture)
        assert capture["nm.premask_ab"][0, :, 0, 0].tolist() == [1.0, 1.0]
        assert capture["nm.S_ab"][0, :, 0, 0].tolist() == [1.0, 1.0]

    def test_swap_swaps_direction_channels(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(5)
        ga = random_graph(rng, max_nodes=6, n_node_types=3, n_edge_types=3)
        gb = random_graph(rng, max_nodes=6, n_node_types=3, n_edge_types=3)
        fwd, rev = {}, {}
        model.forward_pairs([ga], [gb], capture=fwd)
        model.forward_pairs([gb], [ga], capture=rev)
        assert np.array_equal(fwd["nm.S_ab"], rev["nm.S_ba"])
        assert np.array_equal(fwd["nm.S_ba"], rev["nm.S_ab"])

    def test_additive_mask_mode_still_exact_zero(self):
        cfg = small_cfg(mask_mode="additive")
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(6)
        ga = random_graph(rng, max_nodes=6, n_node_types=3)
        gb = random_graph(rng, max_nodes=6, n_node_types=3)
        capture = {}
        model.forward_pairs([ga], [gb], capture=capture)
        mask = capture["nm.mask_ab"][0, 0]
        assert (capture["nm.S_ab"][0][:, mask == 0.0] == 0.0).all()
        assert (capture["nm.aligned"][0][:, mask == 0.0] == 0.0).all()

    def test_oversized_graph_rejected(self):
        cfg = small_cfg(max_nodes=4)
        model = MatchingModel(VOCAB, cfg)
        g = HetGraph("g", (0,) * 6, frozenset())
        with pytest.raises(DataError, match="max_nodes"):
            model.forward_pairs([g], [g])


class TestPredictHead:
    def test_output_in_unit_interval(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = np.random.default_rng(7)
        h = Tensor(rng.normal(size=(1000, 8)) * 3)
        s = Tensor(rng.normal(size=(1000, 8)) * 3)
        out = model.predict_head(h, s).data
        assert ((out > 0) & (out < 1)).all()

    def test_zero_weights_half(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        set_zero(model.params)
        out = model.predict_head(Tensor(np.ones((3, 8))), Tensor(np.ones((3, 8)))).data
        assert (out == 0.5).all()

    def test_deterministic(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        x = Tensor(np.linspace(-1, 1, 16).reshape(2, 8))
        y = Tensor(np.linspace(1, -1, 16).reshape(2, 8))
        assert np.array_equal(model.predict_head(x, y).data,
                              model.predict_head(x, y).data)


class TestMseLoss:
    def test_zero_when_equal(self):
        preds = Tensor(np.array([[0.3], [0.7]]))
        assert mse_loss(preds, np.array([[0.3], [0.7]])).item() == 0.0

    def test_reference_value(self):
        preds = Tensor(np.array([[1.0], [0.0]]))
        assert mse_loss(preds, np.array([[0.0], [0.0]])).item() == 0.5

    def test_order_invariant(self):
        preds = Tensor(np.array([[0.9], [0.1], [0.5]]))
        t = np.array([[0.2], [0.4], [0.6]])
        a = mse_loss(preds, t).item()
        b = mse_loss(Tensor(preds.data[::-1].copy()), t[::-1].copy()).item()
        assert abs(a - b) < 1e-15

    def test_empty_batch_rejected(self):
        with pytest.raises(UsageError):
            mse_loss(Tensor(np.zeros((0, 1))), np.zeros((0, 1)))


class TestPipelineInvariants:
    def test_permutation_invariance(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(8)
        worst = 0.0
        for _ in range(30):
            ga = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
            gb = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
            pa = list(range(ga.n_nodes))
            pb = list(range(gb.n_nodes))
            rng.shuffle(pa)
            rng.shuffle(pb)
            s1 = model.forward_pairs([ga], [gb]).data[0, 0]
            s2 = model.forward_pairs([permute_nodes(ga, pa)],
                                     [permute_nodes(gb, pb)]).data[0, 0]
            worst = max(worst, abs(s1 - s2))
        assert worst < 1e-9

    def test_batch_matches_single(self):
        cfg = small_cfg()
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(9)
        gas = [random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
               for _ in range(7)]
        gbs = [random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
               for _ in range(7)]
        batched = model.forward_pairs(gas, gbs).data[:, 0]
        singles = np.array([model.forward_pairs([a], [b]).data[0, 0]
                            for a, b in zip(gas, gbs)])
        assert np.abs(batched - singles).max() < 1e-12

    def test_wl_distinguishability(self):
        cfg = small_cfg(hidden_dim=64, heads=4, graph_match_dim=16, node_match_dim=16)
        model = MatchingModel(VOCAB, cfg)
        rng = random.Random(10)
        distinct = total = 0
        while total < 40:
            ga = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
            gb = random_graph(rng, max_nodes=8, n_node_types=3, n_edge_types=3)
            if typed_wl_hash(ga) == typed_wl_hash(gb):
                continue
            total += 1
            pa, pb = model.prepare(ga), model.prepare(gb)
            z = model.encode([pa, pb]).data
            emb_a = (pa.type_ind @ z[0]).sum(axis=0)
            emb_b = (pb.type_ind @ z[1]).sum(axis=0)
            if np.abs(emb_a - emb_b).max() > 1e-6:
                distinct += 1
        assert distinct / total >= 0.99

    def test_full_model_gradients(self):
        from hetmatch.training import full_model_gradcheck
        err = full_model_gradcheck(seed=3, n_pairs=2, eps=1e-5, max_nodes=4)
        assert err < 1e-3

    def test_full_model_gradients_masked_heavy(self):
        # seed 1 at 4-node padding once landed conv biases exactly on relu
        # kinks under fully-masked receptive fields; keep it as a regression
        from hetmatch.training import full_model_gradcheck
        err = full_model_gradcheck(seed=1, n_pairs=2, eps=1e-5, max_nodes=4)
        assert err < 1e-3

    def test_gin_ablation_shares_shapes(self):
        cfg = small_cfg(encoder="gin-ablation")
        model = MatchingModel(VOCAB, cfg)
        assert model.n_rel == 1
        assert model.params["enc.l0.coeffs"].data.shape[0] == 1
        g = HetGraph("g", (0, 1), frozenset({(0, 1, 2)}))
        prep = model.prepare(g)
        assert prep.adj.shape[0] == 1 and prep.adj[0, 0, 1] == 1.0
        out = model.forward_pairs([g], [g]).data
        assert 0.0 < out[0, 0] < 1.0
