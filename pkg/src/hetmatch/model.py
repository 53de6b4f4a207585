"""Two-tier type-aligned graph matching network.

Siamese relational-GIN encoder (per-relation weights shared through a basis
decomposition), a graph-level match over per-type pooled embeddings, a
node-level match over type-masked cross-attention matrices read out by a
small CNN, and a fully connected head squashing to (0, 1).

All forwards are batched: a batch of graph pairs is padded to the
configured max_nodes and every op carries the batch dimension, so one pair
is just a batch of one. Nodes are reordered canonically (by typed-WL color
towers) before padding; nodes that share a tower are indistinguishable to
the encoder, which makes the node-match attention images, and therefore the
prediction, invariant under node relabeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig
from .errors import DataError, UsageError
from .graphs import HetGraph, TypeVocab, wl_color_towers
from .optim import ParamStore

CONV1_CHANNELS = 8
CONV2_CHANNELS = 16
CONV_KERNEL = 3


@dataclass
class GraphPrep:
    """Per-graph constants: canonical order, padded features, relation
    adjacency stack, and type-pooling indicator."""

    n: int
    types: np.ndarray      # (P,) int, -1 on padding rows
    x: np.ndarray          # (P, |C|) one-hot features, zero-padded
    adj: np.ndarray        # (R_eff, P, P) normalized relation adjacency
    adj_h: np.ndarray      # (P, R_eff*P) relations stacked horizontally
    type_ind: np.ndarray   # (|C|, P) type-pooling indicator


def mse_loss(preds: Tensor, targets) -> Tensor:
    """Mean squared error over a batch of predictions."""
    targets = ad.as_tensor(targets)
    if preds.data.size == 0:
        raise UsageError("mse_loss: empty batch")
    if preds.data.shape != targets.data.shape:
        raise UsageError(
            f"mse_loss: shape mismatch {preds.data.shape} vs {targets.data.shape}")
    diff = ad.sub(preds, targets)
    return ad.mean(ad.mul(diff, diff))


def glorot(rng: np.random.Generator, shape: tuple[int, ...],
           fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(vocab: TypeVocab, cfg: TrainConfig, seed: int) -> ParamStore:
    """Create all trainable parameters in a fixed, seeded order."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    n_types = len(vocab.node_types)
    n_rel = 1 if cfg.encoder == "gin-ablation" else len(vocab.edge_types)
    d = cfg.hidden_dim

    d_in = n_types
    for layer in range(cfg.hgin_layers):
        pre = f"enc.l{layer}"
        store.add(f"{pre}.eps", np.zeros(()))
        store.add(f"{pre}.basis",
                  np.stack([glorot(rng, (d_in, d_in), d_in, d_in)
                            for _ in range(cfg.basis_count)]))
        store.add(f"{pre}.coeffs",
                  glorot(rng, (n_rel, cfg.basis_count), n_rel, cfg.basis_count))
        store.add(f"{pre}.mlp_w1", glorot(rng, (d_in, d), d_in, d))
        store.add(f"{pre}.mlp_b1", np.zeros(d))
        store.add(f"{pre}.mlp_w2", glorot(rng, (d, d), d, d))
        store.add(f"{pre}.mlp_b2", np.zeros(d))
        d_in = d

    store.add("gm.mlp_w1", glorot(rng, (2 * d, d), 2 * d, d))
    store.add("gm.mlp_b1", np.zeros(d))
    store.add("gm.mlp_w2", glorot(rng, (d, d), d, d))
    store.add("gm.mlp_b2", np.zeros(d))
    store.add("gm.attn", glorot(rng, (d, d), d, d))
    dg = cfg.graph_match_dim
    store.add("gm.out_w1", glorot(rng, (d, dg), d, dg))
    store.add("gm.out_b1", np.zeros(dg))
    store.add("gm.out_w2", glorot(rng, (dg, dg), dg, dg))
    store.add("gm.out_b2", np.zeros(dg))

    p = cfg.max_nodes
    store.add("nm.q", glorot(rng, (d, d), d, d))
    store.add("nm.k", glorot(rng, (d, d), d, d))
    store.add("nm.align_q", glorot(rng, (p, p), p, p))
    store.add("nm.align_k", glorot(rng, (p, p), p, p))
    store.add("nm.align_v", glorot(rng, (p, p), p, p))
    k2 = CONV_KERNEL * CONV_KERNEL
    c_in = 2 * cfg.heads
    store.add("nm.conv1_w",
              glorot(rng, (CONV1_CHANNELS, c_in, CONV_KERNEL, CONV_KERNEL),
                     c_in * k2, CONV1_CHANNELS * k2))
    store.add("nm.conv1_b", np.zeros(CONV1_CHANNELS))
    store.add("nm.conv2_w",
              glorot(rng, (CONV2_CHANNELS, CONV1_CHANNELS, CONV_KERNEL, CONV_KERNEL),
                     CONV1_CHANNELS * k2, CONV2_CHANNELS * k2))
    store.add("nm.conv2_b", np.zeros(CONV2_CHANNELS))
    flat = CONV2_CHANNELS * (p // 2 // 2) ** 2
    dn = cfg.node_match_dim
    store.add("nm.read_w", glorot(rng, (flat, dn), max(flat, 1), dn))
    store.add("nm.read_b", np.zeros(dn))

    widths = list(cfg.fcl_dims)
    d_prev = dg + dn
    for i, width in enumerate(widths):
        store.add(f"head.fc{i}_w", glorot(rng, (d_prev, width), d_prev, width))
        store.add(f"head.fc{i}_b", np.zeros(width))
        d_prev = width
    return store


class MatchingModel:
    """Holds the parameters plus per-graph prep caches and runs forwards."""

    def __init__(self, vocab: TypeVocab, cfg: TrainConfig,
                 seed: int | None = None, params: ParamStore | None = None):
        self.vocab = vocab
        self.cfg = cfg
        self.n_rel = 1 if cfg.encoder == "gin-ablation" else len(vocab.edge_types)
        self.params = params if params is not None else init_params(
            vocab, cfg, cfg.seed if seed is None else seed)
        self._prep_cache: dict[HetGraph, GraphPrep] = {}

    # ---------------------------------------------------------------- prep

    def prepare(self, g: HetGraph, canonical: bool = True) -> GraphPrep:
        cfg = self.cfg
        if canonical and g in self._prep_cache:
            return self._prep_cache[g]
        if g.n_nodes > cfg.max_nodes:
            raise DataError(
                f"graph {g.id!r} has {g.n_nodes} nodes > max_nodes {cfg.max_nodes}")
        p = cfg.max_nodes
        n = g.n_nodes
        if canonical:
            towers = wl_color_towers(g, cfg.hgin_layers)
            order = sorted(range(n), key=lambda i: towers[i])
        else:
            order = list(range(n))
        pos = {node: i for i, node in enumerate(order)}

        types = np.full(p, -1, dtype=np.int64)
        x = np.zeros((p, len(self.vocab.node_types)))
        for node in range(n):
            types[pos[node]] = g.node_type_ids[node]
            x[pos[node], g.node_type_ids[node]] = 1.0

        adj = np.zeros((self.n_rel, p, p))
        for s, d, t in g.sorted_edges():
            r = 0 if self.cfg.encoder == "gin-ablation" else t
            adj[r, pos[s], pos[d]] = 1.0
            adj[r, pos[d], pos[s]] = 1.0
        if cfg.normalization_mode == "degree":
            deg = adj.sum(axis=2, keepdims=True)  # (R, P, 1) per-relation degree
            np.divide(adj, deg, out=adj, where=deg > 0)

        type_ind = np.zeros((len(self.vocab.node_types), p))
        for i in range(n):
            type_ind[types[i], i] = 1.0
        adj_h = adj.transpose(1, 0, 2).reshape(p, self.n_rel * p).copy()
        prep = GraphPrep(n=n, types=types, x=x, adj=adj, adj_h=adj_h,
                         type_ind=type_ind)
        if canonical:
            self._prep_cache[g] = prep
        return prep

    # -------------------------------------------------------------- encode

    def encode(self, preps: list[GraphPrep]) -> Tensor:
        """Stacked relational-GIN embedding, shape (B, P, hidden)."""
        cfg = self.cfg
        p = cfg.max_nodes
        n_rel = self.n_rel
        z = Tensor(np.stack([q.x for q in preps]))
        adj_h = Tensor(np.stack([q.adj_h for q in preps]))   # (B, P, R*P)
        batch = z.data.shape[0]
        for layer in range(cfg.hgin_layers):
            pre = f"enc.l{layer}"
            eps = self.params[f"{pre}.eps"]
            basis = self.params[f"{pre}.basis"]              # (Bc, d, d)
            coeffs = self.params[f"{pre}.coeffs"]            # (R, Bc)
            d_in = basis.data.shape[1]
            w_rel = ad.reshape(
                ad.matmul(coeffs, ad.reshape(basis, (cfg.basis_count, d_in * d_in))),
                (n_rel, d_in, d_in))                         # W_r = sum_b w_rb P_b
            # one fused product: z @ [W_1^T | ... | W_R^T], rows regrouped per
            # relation, then the horizontally stacked adjacency sums over
            # relations and neighbors in a single matmul
            w_h = ad.reshape(ad.transpose(w_rel, (2, 0, 1)), (d_in, n_rel * d_in))
            zw = ad.reshape(ad.matmul(z, w_h), (batch, p, n_rel, d_in))
            zr = ad.reshape(ad.transpose(zw, (0, 2, 1, 3)), (batch, n_rel * p, d_in))
            gamma = ad.matmul(adj_h, zr)
            pre_act = ad.add(ad.mul(z, ad.add(eps, 1.0)), gamma)
            h = ad.relu(ad.add(ad.matmul(pre_act, self.params[f"{pre}.mlp_w1"]),
                               self.params[f"{pre}.mlp_b1"]))
            z = ad.add(ad.matmul(h, self.params[f"{pre}.mlp_w2"]),
                       self.params[f"{pre}.mlp_b2"])
        return z

    # ---------------------------------------------------------- type pool

    def type_pool(self, z: Tensor, preps: list[GraphPrep]) -> Tensor:
        """Per-type sum pooling: row c sums the embeddings of type-c nodes;
        absent types yield zero rows. Shape (B, |C|, d)."""
        ind = Tensor(np.stack([q.type_ind for q in preps]))
        return ad.matmul(ind, z)

    # --------------------------------------------------------- graph match

    def graph_match(self, t_a: Tensor, t_b: Tensor, capture=None) -> Tensor:
        n_types = len(self.vocab.node_types)
        joint = ad.concat([t_a, t_b], axis=-1)               # (B, C, 2d)
        h = ad.relu(ad.add(ad.matmul(joint, self.params["gm.mlp_w1"]),
                           self.params["gm.mlp_b1"]))
        t_c = ad.add(ad.matmul(h, self.params["gm.mlp_w2"]),
                     self.params["gm.mlp_b2"])               # (B, C, d)
        context = ad.mul(ad.sum_axis(t_c, axis=1), 1.0 / n_types)
        a = ad.tanh(ad.matmul(context, self.params["gm.attn"]))  # (B, d)
        batch, d = a.data.shape
        scores = ad.sigmoid(ad.matmul(t_c, ad.reshape(a, (batch, d, 1))))
        pooled = ad.sum_axis(ad.mul(t_c, scores), axis=1)    # (B, d)
        h1 = ad.relu(ad.add(ad.matmul(pooled, self.params["gm.out_w1"]),
                            self.params["gm.out_b1"]))
        out = ad.add(ad.matmul(h1, self.params["gm.out_w2"]),
                     self.params["gm.out_b2"])
        if capture is not None:
            capture["gm.t_c"] = t_c.data.copy()
            capture["gm.a"] = a.data.copy()
            capture["gm.scores"] = scores.data.copy()
            capture["gm.h"] = pooled.data.copy()
        return out

    # ---------------------------------------------------------- node match

    def _heads(self, z: Tensor, weight: Tensor) -> Tensor:
        cfg = self.cfg
        batch = z.data.shape[0]
        dk = cfg.hidden_dim // cfg.heads
        proj = ad.matmul(z, weight)                          # (B, P, d)
        split = ad.reshape(proj, (batch, cfg.max_nodes, cfg.heads, dk))
        return ad.transpose(split, (0, 2, 1, 3))             # (B, H, P, dk)

    def node_match_matrices(self, z_a: Tensor, z_b: Tensor,
                            preps_a, preps_b, capture=None):
        """Bidirectional type-masked attention images plus the aligned stack.

        Returns (channels, aligned): both (B, 2H, P, P) oriented with rows
        indexing the first graph's nodes. The second direction is computed
        in its native orientation (rows = second graph) and transposed into
        place. Masked (cross-type or padded) entries are exactly 0.
        """
        cfg = self.cfg
        dk = cfg.hidden_dim // cfg.heads
        types_a = np.stack([q.types for q in preps_a])       # (B, P)
        types_b = np.stack([q.types for q in preps_b])
        real_a = types_a >= 0
        real_b = types_b >= 0
        mask_ab = ((types_a[:, :, None] == types_b[:, None, :])
                   & real_a[:, :, None] & real_b[:, None, :])
        mask_ab = mask_ab[:, None, :, :].astype(np.float64)  # (B, 1, P, P)
        mask_ba = np.swapaxes(mask_ab, 2, 3)

        q_a, k_a = self._heads(z_a, self.params["nm.q"]), self._heads(z_a, self.params["nm.k"])
        q_b, k_b = self._heads(z_b, self.params["nm.q"]), self._heads(z_b, self.params["nm.k"])
        scale = 1.0 / math.sqrt(dk)

        # direction a->b: rows are a's nodes, keys from a, queries from b
        scores_ab = ad.mul(ad.matmul(k_a, ad.transpose(q_b, (0, 1, 3, 2))), scale)
        # direction b->a, native orientation: rows are b's nodes
        scores_ba = ad.mul(ad.matmul(k_b, ad.transpose(q_a, (0, 1, 3, 2))), scale)
        if cfg.mask_mode == "additive":
            scores_ab = ad.add(scores_ab, (mask_ab - 1.0) * 1e9)
            scores_ba = ad.add(scores_ba, (mask_ba - 1.0) * 1e9)
        soft_ab = ad.row_softmax(scores_ab)
        soft_ba = ad.row_softmax(scores_ba)
        s_ab = ad.masked_mul(soft_ab, mask_ab)
        s_ba = ad.masked_mul(soft_ba, mask_ba)

        # stack both directions as channels in row=a orientation
        channels = ad.concat([s_ab, ad.transpose(s_ba, (0, 1, 3, 2))], axis=1)

        align_scale = 1.0 / math.sqrt(cfg.max_nodes)
        c_shape = channels.data.shape
        flat = ad.reshape(channels, (-1, cfg.max_nodes))
        q_s = ad.reshape(ad.matmul(flat, self.params["nm.align_q"]), c_shape)
        k_s = ad.reshape(ad.matmul(flat, self.params["nm.align_k"]), c_shape)
        v_s = ad.reshape(ad.matmul(flat, self.params["nm.align_v"]), c_shape)
        attn = ad.row_softmax(ad.mul(ad.matmul(q_s, ad.transpose(k_s, (0, 1, 3, 2))),
                                     align_scale))
        aligned = ad.masked_mul(ad.matmul(attn, v_s), mask_ab)
        if capture is not None:
            capture["nm.premask_ab"] = soft_ab.data.copy()
            capture["nm.premask_ba"] = soft_ba.data.copy()
            capture["nm.S_ab"] = s_ab.data.copy()
            capture["nm.S_ba"] = s_ba.data.copy()
            capture["nm.mask_ab"] = mask_ab.copy()
            capture["nm.mask_ba"] = mask_ba.copy()
            capture["nm.channels"] = channels.data.copy()
            capture["nm.aligned"] = aligned.data.copy()
        return channels, aligned

    def node_match(self, z_a, z_b, preps_a, preps_b, capture=None) -> Tensor:
        _, aligned = self.node_match_matrices(z_a, z_b, preps_a, preps_b, capture)
        c1 = ad.maxpool2d(ad.relu(ad.conv2d(aligned, self.params["nm.conv1_w"],
                                            self.params["nm.conv1_b"])))
        c2 = ad.maxpool2d(ad.relu(ad.conv2d(c1, self.params["nm.conv2_w"],
                                            self.params["nm.conv2_b"])))
        flat = ad.flatten(c2)
        return ad.add(ad.matmul(flat, self.params["nm.read_w"]),
                      self.params["nm.read_b"])

    # ---------------------------------------------------------------- head

    def predict_head(self, h_graph: Tensor, s_node: Tensor) -> Tensor:
        x = ad.concat([h_graph, s_node], axis=-1)
        last = len(self.cfg.fcl_dims) - 1
        for i in range(len(self.cfg.fcl_dims)):
            x = ad.add(ad.matmul(x, self.params[f"head.fc{i}_w"]),
                       self.params[f"head.fc{i}_b"])
            if i < last:
                x = ad.relu(x)
        return ad.sigmoid(x)

    # ------------------------------------------------------------- forward

    def forward_pairs(self, graphs_a: list[HetGraph], graphs_b: list[HetGraph],
                      capture=None, skip_node_match: bool = False) -> Tensor:
        """Predicted similarities for a batch of graph pairs, shape (B, 1)."""
        if len(graphs_a) != len(graphs_b):
            raise UsageError("graphs_a and graphs_b must have equal length")
        if not graphs_a:
            raise UsageError("empty batch")
        batch = len(graphs_a)
        preps_a = [self.prepare(g) for g in graphs_a]
        preps_b = [self.prepare(g) for g in graphs_b]

        z = self.encode(preps_a + preps_b)
        z_a = ad.narrow(z, 0, batch)
        z_b = ad.narrow(z, batch, 2 * batch)

        t_a = self.type_pool(z_a, preps_a)                   # (B, C, d)
        t_b = self.type_pool(z_b, preps_b)
        h_graph = self.graph_match(t_a, t_b, capture)

        if skip_node_match:
            s_node = Tensor(np.zeros((batch, self.cfg.node_match_dim)))
        else:
            s_node = self.node_match(z_a, z_b, preps_a, preps_b, capture)
        out = self.predict_head(h_graph, s_node)
        if capture is not None:
            capture["Z_a"] = z_a.data.copy()
            capture["Z_b"] = z_b.data.copy()
            capture["T_a"] = t_a.data.copy()
            capture["T_b"] = t_b.data.copy()
            capture["h_graph"] = h_graph.data.copy()
            capture["s_node"] = s_node.data.copy()
            capture["pred"] = out.data.copy()
        return out

    def score_pairs(self, pairs, batch_size: int = 256,
                    skip_node_match: bool = False) -> np.ndarray:
        """Inference over (graph_a, graph_b) pairs without building graphs."""
        out = np.empty(len(pairs))
        with ad.no_grad():
            for start in range(0, len(pairs), batch_size):
                chunk = pairs[start:start + batch_size]
                preds = self.forward_pairs([a for a, _ in chunk],
                                           [b for _, b in chunk],
                                           skip_node_match=skip_node_match)
                out[start:start + len(chunk)] = preds.data[:, 0]
        return out
