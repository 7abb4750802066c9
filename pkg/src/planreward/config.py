"""Scoring configuration: defaults, JSON config files and ``PLANREWARD_*`` env overrides."""

from __future__ import annotations

import importlib
import json
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from .advantage import DEFAULT_EPS
from .alignment import DEFAULT_MAX_NODES, EditCosts
from .rewards import AnnealConfig, Embedder, HashingEmbedder

ENV_PREFIX = "PLANREWARD_"

# Config-file keys that differ from the attribute names.
_ALIASES = {"lambda": "lam"}
_REVERSE_ALIASES = {v: k for k, v in _ALIASES.items()}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScoringConfig:
    total_steps: int = 200
    alpha: float = 0.1
    lam: float = 0.5
    gamma: float = 0.5
    delta: float = 0.5
    anneal_center: float = 0.9
    anneal_scale: float = 10.0
    node_insert: float = 1.0
    node_delete: float = 1.0
    edge_insert: float = 1.0
    edge_delete: float = 1.0
    embedder: str = "hashing"
    embedder_dim: int = 256
    eps: float = DEFAULT_EPS
    max_ged_nodes: int = DEFAULT_MAX_NODES
    require_bridge_think: bool = False

    def anneal(self) -> AnnealConfig:
        return AnnealConfig(
            total_steps=self.total_steps,
            alpha=self.alpha,
            lam=self.lam,
            gamma=self.gamma,
            delta=self.delta,
            center=self.anneal_center,
            scale=self.anneal_scale,
        )

    def costs(self) -> EditCosts:
        return EditCosts(self.node_insert, self.node_delete, self.edge_insert, self.edge_delete)

    def make_embedder(self) -> Embedder:
        """``hashing`` or an import path ``package.module:factory`` returning an Embedder."""
        if self.embedder == "hashing":
            return HashingEmbedder(self.embedder_dim)
        module_name, _, attr = self.embedder.partition(":")
        if not attr:
            raise ConfigError(f"embedder must be 'hashing' or 'module:factory', got {self.embedder!r}")
        factory = getattr(importlib.import_module(module_name), attr)
        return factory()

    def to_dict(self) -> dict[str, Any]:
        return {_REVERSE_ALIASES.get(k, k): v for k, v in asdict(self).items()}


def _coerce(name: str, raw: Any, target: type) -> Any:
    if target is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str) and raw.strip().lower() in ("1", "true", "yes", "on", "0", "false", "no", "off"):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if target is int:
        if isinstance(raw, bool):
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
        try:
            value = int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
        if isinstance(raw, float) and raw != value:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
        return value
    if target is float:
        if isinstance(raw, bool):
            raise ConfigError(f"{name}: expected a number, got {raw!r}")
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    if not isinstance(raw, str):
        raise ConfigError(f"{name}: expected a string, got {raw!r}")
    return raw


_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> ScoringConfig:
    """Defaults, then the JSON file at ``path``, then ``PLANREWARD_<KEY>`` variables."""
    env = os.environ if env is None else env
    types = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(ScoringConfig)}
    values: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, raw in data.items():
            name = _ALIASES.get(key, key)
            if name not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[name] = _coerce(key, raw, types[name])
    for name, target in types.items():
        key = _REVERSE_ALIASES.get(name, name)
        raw = env.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[name] = _coerce(ENV_PREFIX + key.upper(), raw, target)
    try:
        cfg = ScoringConfig(**values)
        cfg.anneal()
        cfg.costs()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.eps <= 0 or cfg.max_ged_nodes < 1 or cfg.embedder_dim < 1:
        raise ConfigError("eps, max_ged_nodes and embedder_dim must be positive")
    return cfg
