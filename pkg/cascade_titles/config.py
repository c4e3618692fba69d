"""Tunables of the pipeline and how they are loaded.

Sources, later wins: built-in defaults, the config file (`--config`, else
$CASCADE_TITLES_CONFIG), `--set KEY=VALUE` flags, dedicated flags. The config
file is read by simpleconf and must be local; data and models may be remote.
"""

from __future__ import annotations

import os
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Mapping

from simpleconf import Config

from .corpus import MAJOR_MAX, MAJOR_MIN
from .linear_svm import SOLVERS, STRATEGIES
from .textprep import DEFAULT_EXCEPTIONS
from .utils import ConfigError, parse_number

CONFIG_ENV = "CASCADE_TITLES_CONFIG"
TEXT_FIELDS = ("title", "full")

CONFIG_HELP = """
Configuration keys (config file or --set KEY=VALUE):
  min_df          minimum document frequency of a term (2)
  min_title_freq  minimum occurrences of a title to be clustered (4)
  quality_q       SVD energy fraction in (0, 1] (0.9)
  threshold       cluster assignment cosine threshold in (0, 1] (0.2)
  max_labels      maximum number of cluster labels (100)
  k               number of fine titles returned (5)
  min_tf          minimum query term frequency (1)
  C               SVM regularization, > 0 (1.0)
  strategy        ova or crammer_singer (ova)
  solver          binary SVM solver, primal_cd or dual_cd (primal_cd)
  tol             SVM stopping tolerance (1e-6)
  max_iters       SVM epoch limit (1000)
  bias            add a bias feature to the SVM (false)
  base_count      per-group cap when under-sampling, accepts 150k (150000)
  min_group_size  documents a group needs for a vertical (5)
  aliases         merged groups, e.g. {"healthcare": [29, 31]}
  seed            random seed (0)
  stopwords       stop word file, null for the bundled list (null)
  exceptions      tokens kept intact by normalization (c++, c#, f#, .net, node.js)
  cluster_text    text clustered by verticals, title or full (title)
  coarse_text     text of the coarse features, title or full (full)
  svd_tol         power iteration tolerance (1e-9)
  svd_max_iter    power iteration limit (1000)
  folds           cross-validation folds (10)
  stratified      stratify cross-validation folds (false)

The config file may be TOML, YAML or JSON; $CASCADE_TITLES_CONFIG is used
when --config is not given.
"""


@dataclass(frozen=True)
class Settings:
    min_df: int = 2
    min_title_freq: int = 4
    quality_q: float = 0.9
    threshold: float = 0.2
    max_labels: int = 100
    k: int = 5
    min_tf: int = 1
    C: float = 1.0
    strategy: str = "ova"
    solver: str = "primal_cd"
    tol: float = 1e-6
    max_iters: int = 1000
    bias: bool = False
    base_count: int = 150_000
    min_group_size: int = 5
    aliases: Mapping[str, tuple[int, ...]] = field(
        default_factory=lambda: {"healthcare": (29, 31)}
    )
    seed: int = 0
    stopwords: str | None = None
    exceptions: tuple[str, ...] = DEFAULT_EXCEPTIONS
    cluster_text: str = "title"
    coarse_text: str = "full"
    svd_tol: float = 1e-9
    svd_max_iter: int = 1000
    folds: int = 10
    stratified: bool = False

    def __post_init__(self):
        _validate(self)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> Settings:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config key: {unknown[0]!r}")
        return cls(**{key: _coerce(key, value) for key, value in mapping.items()})

    def replace(self, **changes) -> Settings:
        return Settings.from_mapping({**self.to_dict(), **changes})

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready snapshot, as written into model manifests"""
        out = asdict(self)
        out["aliases"] = {
            name: list(groups) for name, groups in sorted(self.aliases.items())
        }
        out["exceptions"] = list(self.exceptions)
        return out


_INTS = (
    "min_df",
    "min_title_freq",
    "max_labels",
    "k",
    "min_tf",
    "max_iters",
    "min_group_size",
    "seed",
    "svd_max_iter",
    "folds",
)
_FLOATS = ("quality_q", "threshold", "C", "tol", "svd_tol")
_BOOLS = ("bias", "stratified")


def _coerce(key: str, value: Any) -> Any:
    try:
        if key == "base_count":
            return parse_number(value)
        if key in _INTS:
            if isinstance(value, bool) or isinstance(value, float):
                raise ValueError(value)
            return int(value)
        if key in _FLOATS:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if key in _BOOLS:
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if key == "aliases":
            return {
                str(name): tuple(int(g) for g in groups)
                for name, groups in dict(value).items()
            }
        if key == "exceptions":
            if isinstance(value, str):
                raise ValueError(value)
            return tuple(str(e) for e in value)
        if key == "stopwords":
            return None if value is None else str(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key!r}: {value!r}") from None


def _check(ok: bool, key: str, expected: str, value: Any) -> None:
    if not ok:
        raise ConfigError(f"{key!r} must be {expected}, got {value!r}")


def _validate(s: Settings) -> None:
    for key in ("min_df", "min_title_freq", "max_labels", "k", "min_tf"):
        _check(getattr(s, key) >= 1, key, ">= 1", getattr(s, key))
    for key in ("max_iters", "base_count", "min_group_size", "svd_max_iter"):
        _check(getattr(s, key) >= 1, key, ">= 1", getattr(s, key))
    _check(0 < s.quality_q <= 1, "quality_q", "in (0, 1]", s.quality_q)
    _check(0 < s.threshold <= 1, "threshold", "in (0, 1]", s.threshold)
    _check(s.C > 0, "C", "> 0", s.C)
    _check(s.tol > 0, "tol", "> 0", s.tol)
    _check(s.svd_tol > 0, "svd_tol", "> 0", s.svd_tol)
    _check(s.folds >= 2, "folds", ">= 2", s.folds)
    _check(s.seed >= 0, "seed", ">= 0", s.seed)
    _check(s.strategy in STRATEGIES, "strategy", f"one of {STRATEGIES}", s.strategy)
    _check(s.solver in SOLVERS, "solver", f"one of {SOLVERS}", s.solver)
    for key in ("cluster_text", "coarse_text"):
        value = getattr(s, key)
        _check(value in TEXT_FIELDS, key, f"one of {TEXT_FIELDS}", value)

    seen: dict[int, str] = {}
    for name, groups in s.aliases.items():
        _check(bool(name) and not name.isdigit(), "aliases", "named groups", name)
        _check(len(groups) > 0, "aliases", "non-empty group lists", name)
        for group in groups:
            _check(
                MAJOR_MIN <= group <= MAJOR_MAX,
                "aliases",
                f"major groups in [{MAJOR_MIN}, {MAJOR_MAX}]",
                group,
            )
            _check(group not in seen, "aliases", "disjoint", group)
            seen[group] = name


def parse_override(text: str) -> tuple[str, Any]:
    """KEY=VALUE with VALUE parsed as JSON, else kept as a string"""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def load_settings(
    path: str | None = None,
    overrides: Iterable[str] = (),
    **flags: Any,
) -> Settings:
    """Defaults <- config file <- KEY=VALUE overrides <- flags (None skipped)

    Raises:
        ConfigError: on unknown keys or invalid values
        OSError: when the config file cannot be read
    """
    path = path or os.environ.get(CONFIG_ENV)
    values: dict[str, Any] = {}
    if path:
        if "://" in path:
            raise ConfigError(f"config file must be a local path, got {path!r}")
        if not os.path.isfile(path):
            raise FileNotFoundError(2, "No such file or directory", path)
        values.update(json.loads(json.dumps(Config.load(path))))

    for text in overrides or ():
        key, value = parse_override(text)
        values[key] = value
    values.update({key: value for key, value in flags.items() if value is not None})
    return Settings.from_mapping(values)


def settings_from_args(args, **flags: Any) -> Settings:
    """Settings of a command: --config, --set, then --seed and `flags`"""
    return load_settings(
        getattr(args, "config", None),
        getattr(args, "set", None) or (),
        seed=getattr(args, "seed", None),
        **flags,
    )
