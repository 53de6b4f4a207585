"""hetmatch: typed-graph similarity learning toolkit.

Exact typed graph edit distance (brute-force oracle plus an A* solver with
a compiled kernel and pure-Python fallback), BFS-sampled pair datasets with
exact labels, and a two-tier type-aligned matching network trained to
predict normalized edit distance.
"""

from .config import TrainConfig, desk_preset, parse_config_file
from .datasets import (DatasetBundle, GraphPair, SamplerSpec, bfs_sample,
                       build_corpus, build_pairs, read_dataset, split_corpus,
                       synth_source_graph, write_dataset)
from .errors import (DataError, GraphFormatError, HetmatchError, NumericError,
                     SearchLimitError, SizeBoundError, UsageError)
from .ged import (EditOp, EditPath, SearchState, backend_name,
                  edit_path_for_mapping, ged_astar, ged_brute,
                  ged_brute_mapping, heuristic_lower_bound, normalize_score)
from .graphs import (HetGraph, TypeVocab, brute_isomorphic, one_hot_features,
                     parse_graph, permute_nodes, serialize_graph, typed_wl_hash,
                     validate_graph)
from .metrics import kendall, precision_at_k, spearman
from .model import MatchingModel, init_params, mse_loss
from .training import (MetricsRecord, bench_time, evaluate,
                       full_model_gradcheck, model_from_checkpoint, query,
                       train)

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "desk_preset", "parse_config_file",
    "DatasetBundle", "GraphPair", "SamplerSpec", "bfs_sample", "build_corpus",
    "build_pairs", "read_dataset", "split_corpus", "synth_source_graph",
    "write_dataset",
    "DataError", "GraphFormatError", "HetmatchError", "NumericError",
    "SearchLimitError", "SizeBoundError", "UsageError",
    "EditOp", "EditPath", "SearchState", "backend_name",
    "edit_path_for_mapping", "ged_astar", "ged_brute", "ged_brute_mapping",
    "heuristic_lower_bound", "normalize_score",
    "HetGraph", "TypeVocab", "brute_isomorphic", "one_hot_features",
    "parse_graph", "permute_nodes", "serialize_graph", "typed_wl_hash",
    "validate_graph",
    "kendall", "precision_at_k", "spearman",
    "MatchingModel", "init_params", "mse_loss",
    "MetricsRecord", "bench_time", "evaluate", "full_model_gradcheck",
    "model_from_checkpoint", "query", "train",
]
