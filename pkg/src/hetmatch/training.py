"""Training loop with early stopping, evaluation metrics, retrieval queries,
and timing benchmarks."""

from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import metrics as rank_metrics
from .autodiff import backward
from .config import TrainConfig
from .datasets import DatasetBundle, GraphPair
from .errors import DataError, NumericError, UsageError
from .graphs import HetGraph
from .model import MatchingModel, mse_loss
from .optim import AdamW, checkpoint_bytes, load_checkpoint

try:
    # the models here run many small GEMMs where BLAS thread fan-out costs
    # more than it saves; limit to one thread when threadpoolctl is present
    from threadpoolctl import threadpool_limits as _blas_limits
except ImportError:
    import contextlib

    def _blas_limits(limits=None):
        return contextlib.nullcontext()

TRAIN_LOG_HEADER = "epoch,train_loss,val_loss,best_val_loss,seconds"
METRICS_CSV_HEADER = "mse,spearman_rho,kendall_tau,p_at_10,p_at_20,num_pairs,seconds"


@dataclass
class MetricsRecord:
    mse: float
    spearman_rho: float
    kendall_tau: float
    p_at_10: float
    p_at_20: float
    num_pairs: int
    seconds: float

    def csv_row(self) -> str:
        return (f"{self.mse!r},{self.spearman_rho!r},{self.kendall_tau!r},"
                f"{self.p_at_10!r},{self.p_at_20!r},{self.num_pairs},{self.seconds!r}")


@dataclass
class TrainResult:
    values: dict            # best-validation parameter snapshot
    config: dict            # checkpoint config document
    log_rows: list[str]     # training log CSV rows (without header)
    best_epoch: int
    epochs_run: int


def _resolve_pairs(pairs: list[GraphPair], corpus: dict[str, HetGraph]):
    resolved = []
    for p in pairs:
        if p.id_a not in corpus:
            raise DataError(f"pair references unknown graph id {p.id_a!r}")
        if p.id_b not in corpus:
            raise DataError(f"pair references unknown graph id {p.id_b!r}")
        resolved.append((corpus[p.id_a], corpus[p.id_b]))
    return resolved


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def train(cfg: TrainConfig, bundle: DatasetBundle) -> TrainResult:
    """Train to minimum validation loss with patience-based early stopping.

    Mini-batches are reshuffled every epoch from a seeded stream; validation
    runs every epoch once `val_start_epoch` is reached and the parameter
    snapshot with the lowest validation loss becomes the checkpoint. The
    result is a pure function of (config, dataset), so reruns are
    byte-identical apart from wall-clock times in the log.
    """
    train_pairs = list(bundle.pairs["train"])
    if not train_pairs:
        raise UsageError("empty train-pair list")
    with _blas_limits(limits=1):
        return _train_loop(cfg, bundle, train_pairs)


def _train_loop(cfg: TrainConfig, bundle: DatasetBundle,
                train_pairs: list[GraphPair]) -> TrainResult:
    if cfg.train_pair_cap is not None and len(train_pairs) > cfg.train_pair_cap:
        train_pairs = random.Random(cfg.seed).sample(train_pairs, cfg.train_pair_cap)
    val_pairs = list(bundle.pairs["val"])

    model = MatchingModel(bundle.vocab, cfg)
    optimizer = AdamW(model.params, lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    graphs = _resolve_pairs(train_pairs, bundle.corpus)
    targets = np.array([[p.norm_score] for p in train_pairs])
    val_graphs = _resolve_pairs(val_pairs, bundle.corpus)
    val_targets = np.array([p.norm_score for p in val_pairs])

    best_val = math.inf
    best_epoch = 0
    best_values = model.params.copy_values()
    epochs_since_improvement = 0
    log_rows: list[str] = []
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        tick = time.perf_counter()
        order = rng.permutation(len(graphs))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            preds = model.forward_pairs([graphs[i][0] for i in idx],
                                        [graphs[i][1] for i in idx])
            loss = mse_loss(preds, targets[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            backward(loss)
            optimizer.step()
            total += value * len(idx)
        train_loss = total / len(graphs)
        epochs_run = epoch

        val_loss = None
        if val_pairs and epoch >= cfg.val_start_epoch:
            preds = model.score_pairs(val_graphs)
            val_loss = float(np.mean((preds - val_targets) ** 2))
            if not math.isfinite(val_loss):
                raise NumericError(f"non-finite validation loss at epoch {epoch}")
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_values = model.params.copy_values()
                epochs_since_improvement = 0
            else:
                epochs_since_improvement += 1
        seconds = time.perf_counter() - tick
        log_rows.append(f"{epoch},{_fmt(train_loss)},{_fmt(val_loss)},"
                        f"{_fmt(None if math.isinf(best_val) else best_val)},{seconds!r}")
        if epochs_since_improvement >= cfg.patience:
            break

    if best_epoch == 0:  # training ended before validation ever ran
        best_values = model.params.copy_values()
        best_epoch = epochs_run
    config = {
        "train_config": cfg.to_dict(),
        "vocab": {"node_types": list(bundle.vocab.node_types),
                  "edge_types": list(bundle.vocab.edge_types)},
        "best_epoch": best_epoch,
        "epochs_run": epochs_run,
    }
    return TrainResult(best_values, config, log_rows, best_epoch, epochs_run)


def model_from_checkpoint(path, bundle: DatasetBundle | None = None) -> MatchingModel:
    """Rebuild a model from a checkpoint file; validates the vocabulary
    against the bundle when one is given."""
    values, config = load_checkpoint(path)
    try:
        cfg = TrainConfig.from_dict(config["train_config"])
        vocab_doc = config["vocab"]
    except KeyError as exc:
        raise DataError(f"checkpoint config missing {exc}") from None
    from .graphs import TypeVocab
    vocab = TypeVocab(tuple(vocab_doc["node_types"]), tuple(vocab_doc["edge_types"]))
    if bundle is not None and vocab != bundle.vocab:
        raise DataError("checkpoint vocabulary does not match the dataset")
    model = MatchingModel(vocab, cfg)
    model.params.load_values(values)
    return model


def evaluate(model: MatchingModel, pairs: list[GraphPair],
             corpus: dict[str, HetGraph], batch_size: int = 256) -> MetricsRecord:
    """Batched inference plus ranking metrics.

    MSE covers every pair; rho, tau, and p@k are computed per query graph
    (grouped by id_a) over its candidate ranking and macro-averaged. Queries
    where a rank metric is undefined (constant scores) or where the
    candidate list is shorter than k are left out of that metric's average.
    """
    if not pairs:
        raise UsageError("no pairs to evaluate")
    tick = time.perf_counter()
    resolved = _resolve_pairs(pairs, corpus)
    with _blas_limits(limits=1):
        preds = model.score_pairs(resolved, batch_size=batch_size)
    truths = np.array([p.norm_score for p in pairs])
    mse = float(np.mean((preds - truths) ** 2))

    by_query: dict[str, list[int]] = {}
    for i, p in enumerate(pairs):
        by_query.setdefault(p.id_a, []).append(i)

    rhos, taus, p10s, p20s = [], [], [], []
    for _, idx in sorted(by_query.items()):
        q_pred = preds[idx]
        q_true = truths[idx]
        ids = [pairs[i].id_b for i in idx]
        if len(idx) >= 2:
            try:
                rhos.append(rank_metrics.spearman(q_pred, q_true))
            except NumericError:
                pass
            try:
                taus.append(rank_metrics.kendall(q_pred, q_true))
            except NumericError:
                pass
        if len(idx) >= 10:
            p10s.append(rank_metrics.precision_at_k(q_pred, q_true, 10, ids=ids))
        if len(idx) >= 20:
            p20s.append(rank_metrics.precision_at_k(q_pred, q_true, 20, ids=ids))

    def avg(values):
        return float(np.mean(values)) if values else float("nan")

    return MetricsRecord(
        mse=mse, spearman_rho=avg(rhos), kendall_tau=avg(taus),
        p_at_10=avg(p10s), p_at_20=avg(p20s), num_pairs=len(pairs),
        seconds=time.perf_counter() - tick)


def query(model: MatchingModel, g: HetGraph, corpus: dict[str, HetGraph],
          k: int) -> list[tuple[str, float]]:
    """Top-k corpus graphs by predicted similarity to `g` (ties by id)."""
    if k < 0:
        raise UsageError("k must be nonnegative")
    if k == 0:
        return []
    ids = list(corpus)
    with _blas_limits(limits=1):
        scores = model.score_pairs([(g, corpus[i]) for i in ids])
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[:k]]


def bench_time(model: MatchingModel, pairs: list[GraphPair],
               corpus: dict[str, HetGraph], repeat: int = 3) -> dict[str, float]:
    """Median wall seconds to score the fixed pair list, for the full model
    and for the graph-match-only variant (node matching skipped)."""
    if repeat < 1:
        raise UsageError("repeat must be >= 1")
    resolved = _resolve_pairs(pairs, corpus)
    results = {}
    with _blas_limits(limits=1):
        for name, skip in (("full", False), ("graph_match_only", True)):
            times = []
            for _ in range(repeat):
                tick = time.perf_counter()
                model.score_pairs(resolved, skip_node_match=skip)
                times.append(time.perf_counter() - tick)
            results[name] = statistics.median(times)
    return results


def checkpoint_document(result: TrainResult) -> bytes:
    return checkpoint_bytes(result.values, result.config)


def full_model_gradcheck(seed: int = 0, n_pairs: int = 10, eps: float = 1e-5,
                         max_nodes: int = 5) -> float:
    """Finite-difference check of the whole pipeline's loss gradient.

    Builds a small but complete model (every module present, reduced widths)
    over random sampled graph pairs and returns the worst relative error
    between autodiff and central differences across all parameters. Every
    parameter is nudged off its initialization first: zero-initialized
    biases otherwise sit exactly on relu kinks wherever a receptive field is
    fully masked, where a central difference straddles two subgradients.
    """
    from .autodiff import finite_diff_check
    from .datasets import SamplerSpec, bfs_sample, synth_source_graph

    source, vocab = synth_source_graph(3, 2, 200, 2.5, seed=seed)
    rng = random.Random(seed + 1)
    spec = SamplerSpec(max_nodes=max_nodes, min_node_types=2, seed=seed)
    graphs_a = [bfs_sample(source, spec, rng) for _ in range(n_pairs)]
    graphs_b = [bfs_sample(source, spec, rng) for _ in range(n_pairs)]
    targets = np.array([[rng.uniform(0.05, 0.95)] for _ in range(n_pairs)])

    cfg = TrainConfig(seed=seed, hidden_dim=8, heads=2, basis_count=2,
                      graph_match_dim=8, node_match_dim=8, fcl_dims=(8, 4, 2, 1),
                      max_nodes=max_nodes)
    model = MatchingModel(vocab, cfg)
    jitter = np.random.default_rng(seed + 2)
    for _, tensor in model.params.items():
        tensor.data += jitter.uniform(-0.05, 0.05, size=tensor.data.shape)

    def loss_fn(_params):
        return mse_loss(model.forward_pairs(graphs_a, graphs_b), targets)

    with _blas_limits(limits=1):
        return finite_diff_check(loss_fn, model.params, eps=eps)
