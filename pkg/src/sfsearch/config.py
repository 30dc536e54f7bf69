"""Run configuration: a flat-key TOML file plus --key=value overrides.

Every key is validated against the schema below; unknown keys are rejected
so typos fail loudly. A [synthetic] table describes a generated dataset as
an alternative to ``dataset``:

    [synthetic]
    n_entities = 200
    seed = 7
    families = [
        { pattern = "symmetric", count = 4, facts = 400 },
        { pattern = "anti-symmetric", count = 4, facts = 200 },
    ]
"""

from dataclasses import dataclass, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .datasets import RelationFamily, SyntheticSpec
from .errors import ConfigError
from .search import SearchConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    dataset: str | None = None
    out: str = "runs/out"
    seed: int = 0
    workers: int = 0
    # model shape
    dim: int = 32
    blocks: int = 2
    groups: int = 2
    arch: str | None = None
    # standalone training
    batch_size: int = 512
    epochs: int = 100
    learning_rate: float = 0.1
    l2: float = 1e-3
    lr_decay: float = 1.0
    eval_every: int = 5
    patience: int = 10
    # search loop
    search_epochs: int = 20
    search_learning_rate: float | None = None
    u_samples: int = 2
    k_derive: int = 16
    reward_batch: int = 256
    reward_candidates: int = 500
    single_level: bool = False
    freeze_groups: bool = False
    constraint_scope: str = "per_group"
    groups_from: str | None = None
    # controller
    ctrl_hidden: int = 64
    ctrl_embed: int = 32
    ctrl_lr: float = 1e-3
    baseline_decay: float = 0.9
    entropy_weight: float = 0.0
    # evaluation
    tie_rule: str = "mean"
    classification: bool = False
    eval_split: str = "test"
    debug: bool = False
    synthetic: SyntheticSpec | None = None

    def train_config(self):
        return TrainConfig(
            dim=self.dim,
            batch_size=self.batch_size,
            u_samples=self.u_samples,
            learning_rate=self.learning_rate,
            l2=self.l2,
            lr_decay=self.lr_decay,
            epochs=self.epochs,
            seed=self.seed,
            eval_every=self.eval_every,
            patience=self.patience,
            tie_rule=self.tie_rule,
            debug=self.debug,
        )

    def search_config(self):
        lr = (
            self.learning_rate
            if self.search_learning_rate is None
            else self.search_learning_rate
        )
        return SearchConfig(
            n_groups=self.groups,
            n_blocks=self.blocks,
            dim=self.dim,
            epochs=self.search_epochs,
            batch_size=self.batch_size,
            u_samples=self.u_samples,
            learning_rate=lr,
            l2=self.l2,
            reward_batch=self.reward_batch,
            reward_candidates=self.reward_candidates,
            k_derive=self.k_derive,
            seed=self.seed,
            single_level=self.single_level,
            freeze_groups=self.freeze_groups,
            constraint_scope=self.constraint_scope,
            ctrl_hidden=self.ctrl_hidden,
            ctrl_embed=self.ctrl_embed,
            ctrl_lr=self.ctrl_lr,
            baseline_decay=self.baseline_decay,
            entropy_weight=self.entropy_weight,
            debug=self.debug,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}

_CHOICES = {
    "constraint_scope": ("per_group", "union"),
    "tie_rule": ("mean", "optimistic"),
    "eval_split": ("train", "valid", "test"),
}

_POSITIVE = {
    "dim", "blocks", "groups", "batch_size", "epochs", "search_epochs",
    "u_samples", "k_derive", "reward_batch", "eval_every", "patience",
    "ctrl_hidden", "ctrl_embed",
}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError("expected an integer")
            return int(value)
        if kind is float or kind == float | None:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError("expected a number")
            return float(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError("expected true or false")
            return value
        if kind is str or kind == str | None:
            if not isinstance(value, str):
                raise ValueError("expected a string")
            return value
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc} (got {value!r})") from None
    raise ConfigError(f"config key {key!r} cannot be set from a file or flag")


def _parse_flag_value(key, raw):
    """Parse the textual right-hand side of a --key=value override."""
    kind = _FIELD_TYPES[key]
    try:
        if kind is int:
            return int(raw)
        if kind is float or kind == float | None:
            return float(raw)
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError("expected true or false")
        if kind is str or kind == str | None:
            return raw
        raise ValueError("not settable from a flag")
    except ValueError as exc:
        raise ConfigError(f"override {key}={raw!r}: {exc}") from None


def _synthetic_spec(section, default_seed):
    if not isinstance(section, dict):
        raise ConfigError("[synthetic] must be a table")
    unknown = set(section) - {"n_entities", "seed", "families"}
    if unknown:
        raise ConfigError(f"unknown [synthetic] keys: {sorted(unknown)}")
    try:
        n_entities = int(section["n_entities"])
        families_raw = section["families"]
    except KeyError as exc:
        raise ConfigError(f"[synthetic] missing required key {exc}") from None
    families = []
    for fam in families_raw:
        unknown = set(fam) - {"pattern", "count", "facts"}
        if unknown:
            raise ConfigError(f"unknown family keys: {sorted(unknown)}")
        try:
            families.append(
                RelationFamily(str(fam["pattern"]), int(fam["count"]), int(fam["facts"]))
            )
        except KeyError as exc:
            raise ConfigError(f"synthetic family missing key {exc}") from None
    spec = SyntheticSpec(
        n_entities=n_entities,
        families=tuple(families),
        seed=int(section.get("seed", default_seed)),
    )
    spec.validate()
    return spec


def load_run_config(path=None, overrides=()):
    """Build a validated RunConfig from an optional TOML file plus flags."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    synthetic_section = raw.pop("synthetic", None)
    cfg = RunConfig()
    for key, value in raw.items():
        if key not in _FIELD_TYPES or key == "synthetic":
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, value))
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(
                f"bad override {item!r}; expected --key=value"
            )
        key, _, rawval = item[2:].partition("=")
        key = key.replace("-", "_")
        if key == "synthetic":
            raise ConfigError("the synthetic spec cannot be set from a flag")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _parse_flag_value(key, rawval))
    if synthetic_section is not None:
        cfg.synthetic = _synthetic_spec(synthetic_section, cfg.seed)
    _validate(cfg)
    return cfg


def _validate(cfg):
    for key in _POSITIVE:
        if getattr(cfg, key) < 1:
            raise ConfigError(f"config key {key!r} must be >= 1")
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(
                f"config key {key!r} must be one of {choices}, "
                f"got {getattr(cfg, key)!r}"
            )
    if cfg.dim % cfg.blocks:
        raise ConfigError(
            f"dim {cfg.dim} must be divisible by blocks {cfg.blocks}"
        )
    if cfg.reward_candidates < 0:
        raise ConfigError("reward_candidates must be >= 0 (0 = all entities)")
    if cfg.workers < 0:
        raise ConfigError("workers must be >= 0 (0 = library default)")
