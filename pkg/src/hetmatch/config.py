"""Training/model configuration and the flat `key = value` config file."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import DataError, UsageError


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 128
    max_epochs: int = 10000
    lr: float = 0.001
    patience: int = 100
    val_start_epoch: int = 100
    hgin_layers: int = 3
    hidden_dim: int = 64
    basis_count: int = 4
    heads: int = 4
    graph_match_dim: int = 128
    node_match_dim: int = 128
    fcl_dims: tuple[int, ...] = (128, 64, 32, 1)
    normalization_mode: str = "degree"       # "degree" | "none"
    mask_mode: str = "multiplicative"        # "multiplicative" | "additive"
    encoder: str = "hgin"                    # "hgin" | "gin-ablation"
    max_nodes: int = 16
    train_pair_cap: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "fcl_dims", tuple(self.fcl_dims))
        for name in ("batch_size", "max_epochs", "patience", "val_start_epoch",
                     "hgin_layers", "hidden_dim", "basis_count", "heads",
                     "graph_match_dim", "node_match_dim", "max_nodes"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if not self.fcl_dims or self.fcl_dims[-1] != 1:
            raise UsageError("fcl_dims must end in 1")
        if self.hidden_dim % self.heads != 0:
            raise UsageError("hidden_dim must be divisible by heads")
        if self.normalization_mode not in ("degree", "none"):
            raise UsageError(f"unknown normalization_mode {self.normalization_mode!r}")
        if self.mask_mode not in ("multiplicative", "additive"):
            raise UsageError(f"unknown mask_mode {self.mask_mode!r}")
        if self.encoder not in ("hgin", "gin-ablation"):
            raise UsageError(f"unknown encoder {self.encoder!r}")
        if self.train_pair_cap is not None and self.train_pair_cap < 1:
            raise UsageError("train_pair_cap must be positive or omitted")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fcl_dims"] = list(self.fcl_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def desk_preset(seed: int = 0) -> TrainConfig:
    """Shortened schedule for desk-scale corpora (a few hundred graphs of
    at most 10 nodes)."""
    return TrainConfig(seed=seed, batch_size=32, max_epochs=500, patience=50,
                       val_start_epoch=50, max_nodes=10, train_pair_cap=2500)


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name == "fcl_dims":
        try:
            return tuple(int(part) for part in raw.replace(",", " ").split())
        except ValueError:
            raise DataError(f"config {name}: expected integers, got {raw!r}") from None
    if name == "lr":
        try:
            return float(raw)
        except ValueError:
            raise DataError(f"config {name}: expected a number, got {raw!r}") from None
    if name in ("normalization_mode", "mask_mode", "encoder"):
        return raw
    if name == "train_pair_cap" and raw.lower() in ("none", ""):
        return None
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"config {name}: expected an integer, got {raw!r}") from None


def parse_config_file(path, base: TrainConfig | None = None) -> TrainConfig:
    """Read a flat `key = value` file using exactly the TrainConfig field
    names; blank lines and '#' comments are ignored."""
    cfg = base if base is not None else TrainConfig()
    names = {f.name for f in fields(TrainConfig)}
    overrides = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in names:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            overrides[key] = _parse_value(key, raw)
    return replace(cfg, **overrides)
