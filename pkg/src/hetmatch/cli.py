"""Command-line interface.

Subcommands: synth, sample, ged, dataset, train, eval, query, bench,
gradcheck. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from dataclasses import replace

from . import ged
from .config import TrainConfig, parse_config_file
from .datasets import (DatasetBundle, SamplerSpec, build_corpus, build_pairs,
                       read_dataset, split_corpus, synth_source_graph,
                       write_dataset)
from .errors import (DataError, HetmatchError, NumericError, SearchLimitError,
                     UsageError)
from .graphs import (TypeVocab, infer_vocab, parse_graph, read_corpus,
                     serialize_graph, write_corpus)
from .training import (METRICS_CSV_HEADER, TRAIN_LOG_HEADER, bench_time,
                       checkpoint_document, evaluate, full_model_gradcheck,
                       model_from_checkpoint, query, train)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_vocab(path) -> TypeVocab:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return TypeVocab.from_json(fh.read())
    except FileNotFoundError:
        raise DataError(f"vocab file not found: {path}") from None


def _load_corpus(corpus_path, vocab_path):
    """Corpus plus vocabulary; the vocabulary is inferred from the corpus
    when no vocab file is given."""
    if vocab_path is not None:
        vocab = _load_vocab(vocab_path)
    else:
        try:
            with open(corpus_path, "r", encoding="utf-8") as fh:
                docs = [json.loads(line) for line in fh if line.strip()]
        except FileNotFoundError:
            raise DataError(f"corpus file not found: {corpus_path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed corpus {corpus_path}: {exc}") from None
        vocab = infer_vocab(docs)
    return read_corpus(corpus_path, vocab), vocab


def _load_source(source_path, vocab_path):
    try:
        with open(source_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise DataError(f"source graph not found: {source_path}") from None
    vocab = _load_vocab(vocab_path) if vocab_path else infer_vocab([json.loads(text)])
    return parse_graph(text, vocab), vocab


def _cmd_synth(args) -> int:
    graph, vocab = synth_source_graph(args.node_types, args.edge_types,
                                      args.nodes, args.mean_degree, args.seed)
    _write_text(args.out, serialize_graph(graph, vocab) + "\n")
    if args.vocab_out:
        _write_text(args.vocab_out, vocab.to_json() + "\n")
    return 0


def _cmd_sample(args) -> int:
    source, vocab = _load_source(args.source, args.vocab)
    spec = SamplerSpec(max_nodes=args.max_nodes,
                       min_node_types=args.min_node_types, seed=args.seed)
    corpus, stats = build_corpus(source, vocab, args.count, spec)
    write_corpus(args.out, corpus.values(), vocab)
    if args.stats_out:
        _write_text(args.stats_out, json.dumps(stats, sort_keys=True) + "\n")
    print(f"wrote {len(corpus)} graphs to {args.out} "
          f"(avg nodes {stats['avg_nodes']:.2f}, avg edges {stats['avg_edges']:.2f})")
    return 0


def _cmd_ged(args) -> int:
    corpus, _ = _load_corpus(args.corpus, args.vocab)
    if args.a is not None or args.b is not None:
        if args.a is None or args.b is None:
            raise UsageError("--a and --b must be given together")
        id_pairs = [(args.a, args.b)]
    elif args.pairs_file is not None:
        id_pairs = []
        with open(args.pairs_file, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise DataError(f"{args.pairs_file}: expected id_a,id_b lines")
                id_pairs.append((parts[0], parts[1]))
    elif args.all:
        ids = list(corpus)
        id_pairs = [(ids[i], ids[j]) for i in range(len(ids))
                    for j in range(i + 1, len(ids))]
    else:
        raise UsageError("choose pairs via --a/--b, --pairs-file, or --all")

    for id_a, id_b in id_pairs:
        if id_a not in corpus:
            raise DataError(f"unknown graph id {id_a!r}")
        if id_b not in corpus:
            raise DataError(f"unknown graph id {id_b!r}")

    rows = []
    if args.jobs > 1 and len(id_pairs) >= 64:
        from concurrent.futures import ProcessPoolExecutor

        from .datasets import _label_chunk
        payload = [(corpus[a], corpus[b]) for a, b in id_pairs]
        chunksize = max(1, (len(payload) + args.jobs * 4 - 1) // (args.jobs * 4))
        chunks = [(payload[i:i + chunksize], args.limit)
                  for i in range(0, len(payload), chunksize)]
        results = []
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for part in pool.map(_label_chunk, chunks):
                results.extend(part)
        for (id_a, id_b), dist in zip(id_pairs, results):
            if dist is None:
                raise SearchLimitError(args.limit or ged.DEFAULT_EXPANSION_LIMIT)
            ga, gb = corpus[id_a], corpus[id_b]
            rows.append((id_a, id_b, dist,
                         ged.normalize_score(dist, ga.n_nodes, gb.n_nodes)))
    else:
        for id_a, id_b in id_pairs:
            ga, gb = corpus[id_a], corpus[id_b]
            dist = ged.ged_astar(ga, gb, expansion_limit=args.limit)
            rows.append((id_a, id_b, dist,
                         ged.normalize_score(dist, ga.n_nodes, gb.n_nodes)))
    lines = [ged.PAIRS_CSV_HEADER]
    lines += [f"{a},{b},{d},{s:.6f}" for a, b, d, s in rows]
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_dataset(args) -> int:
    source, vocab = _load_source(args.source, args.vocab)
    spec = SamplerSpec(max_nodes=args.max_nodes,
                       min_node_types=args.min_node_types, seed=args.seed)
    corpus, stats = build_corpus(source, vocab, args.count, spec)
    split = split_corpus(list(corpus), seed=args.seed)
    pairs, failures = build_pairs(split, corpus, train_pair_cap=args.train_pair_cap,
                                  seed=args.seed, expansion_limit=args.limit,
                                  jobs=args.jobs)
    stats["label_failures"] = failures
    bundle = DatasetBundle(vocab, corpus, split, pairs, stats)
    write_dataset(bundle, args.out)
    print(f"dataset written to {args.out}: {len(corpus)} graphs, "
          f"pairs train/val/test = {len(pairs['train'])}/{len(pairs['val'])}/"
          f"{len(pairs['test'])}, label failures = {failures}")
    return 0


def _cmd_train(args) -> int:
    bundle = read_dataset(args.data)
    cfg = TrainConfig()
    if args.config:
        cfg = parse_config_file(args.config, cfg)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    result = train(cfg, bundle)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.json")
    with open(ckpt_path, "wb") as fh:
        fh.write(checkpoint_document(result))
    log_path = os.path.join(args.out, "train_log.csv")
    _write_text(log_path, "\n".join([TRAIN_LOG_HEADER] + result.log_rows) + "\n")
    print(f"trained {result.epochs_run} epochs; best epoch {result.best_epoch}; "
          f"checkpoint {ckpt_path}")
    return 0


def _cmd_eval(args) -> int:
    bundle = read_dataset(args.data)
    model = model_from_checkpoint(args.checkpoint, bundle)
    pairs = bundle.pairs.get(args.phase)
    if pairs is None:
        raise UsageError(f"unknown phase {args.phase!r}")
    record = evaluate(model, pairs, bundle.corpus)
    _write_text(args.out, METRICS_CSV_HEADER + "\n" + record.csv_row() + "\n")
    if args.out and args.out != "-":
        print(f"mse={record.mse:.6g} rho={record.spearman_rho:.4f} "
              f"tau={record.kendall_tau:.4f} p@10={record.p_at_10:.4f} "
              f"p@20={record.p_at_20:.4f} ({record.num_pairs} pairs)")
    return 0


def _cmd_query(args) -> int:
    bundle = read_dataset(args.data)
    model = model_from_checkpoint(args.checkpoint, bundle)
    with open(args.graph, "r", encoding="utf-8") as fh:
        g = parse_graph(fh.read(), bundle.vocab)
    ranked = query(model, g, bundle.corpus, args.k)
    lines = ["id,score"] + [f"{gid},{score:.6f}" for gid, score in ranked]
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_bench(args) -> int:
    bundle = read_dataset(args.data)
    model = model_from_checkpoint(args.checkpoint, bundle)
    pairs = bundle.pairs.get(args.phase)
    if pairs is None:
        raise UsageError(f"unknown phase {args.phase!r}")
    if args.pairs is not None:
        pairs = pairs[:args.pairs]
    results = bench_time(model, pairs, bundle.corpus, repeat=args.repeat)
    rows = [("full", results["full"]), ("graph_match_only", results["graph_match_only"])]

    if args.include_solver:
        resolved = [(bundle.corpus[p.id_a], bundle.corpus[p.id_b]) for p in pairs]
        backends = ["python"] + (["compiled"] if ged.backend_name() == "compiled" else [])
        for backend in backends:
            times = []
            for _ in range(args.repeat):
                tick = time.perf_counter()
                for ga, gb in resolved:
                    ged.ged_astar(ga, gb, backend=backend)
                times.append(time.perf_counter() - tick)
            rows.append((f"ged_{backend}", statistics.median(times)))

    lines = ["variant,pairs,repeat,median_seconds"]
    lines += [f"{name},{len(pairs)},{args.repeat},{secs!r}" for name, secs in rows]
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_gradcheck(args) -> int:
    err = full_model_gradcheck(seed=args.seed, n_pairs=args.pairs, eps=args.eps,
                               max_nodes=args.max_nodes)
    print(f"max relative gradient error: {err:.3e} (tolerance {args.tol:g})")
    if err >= args.tol:
        raise NumericError(f"gradient check failed: {err:.3e} >= {args.tol:g}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="hetmatch",
                     description="Typed-graph similarity toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic typed source graph")
    p.add_argument("--node-types", type=int, required=True)
    p.add_argument("--edge-types", type=int, required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--mean-degree", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-out")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("sample", help="BFS-sample a subgraph corpus")
    p.add_argument("--source", required=True)
    p.add_argument("--vocab")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--max-nodes", type=int, default=16)
    p.add_argument("--min-node-types", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--stats-out")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("ged", help="exact edit distances for graph pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--pairs-file")
    p.add_argument("--all", action="store_true")
    p.add_argument("--limit", type=int, default=None,
                   help="search-state limit per pair")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ged)

    p = sub.add_parser("dataset", help="build a labeled pair dataset directory")
    p.add_argument("--source", required=True)
    p.add_argument("--vocab")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--max-nodes", type=int, default=16)
    p.add_argument("--min-node-types", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-pair-cap", type=int, default=None)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dataset)

    p = sub.add_parser("train", help="train a matching model")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--phase", default="test", choices=["train", "val", "test"])
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("query", help="rank corpus graphs against a query graph")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("bench", help="time similarity scoring")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--phase", default="test", choices=["train", "val", "test"])
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--include-solver", action="store_true",
                   help="also time the exact solver backends on the same pairs")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-nodes", type=int, default=5)
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else int(exc.code)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, SearchLimitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except HetmatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
