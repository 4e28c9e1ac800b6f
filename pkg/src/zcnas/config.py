"""Run configuration: one JSON document, unknown keys rejected.

Defaults: batch 64, Kaiming-normal fan-in init, natural log, tau-b.  A single
global ``seed`` fans out to the init / input / probe / search streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

from .errors import ConfigError
from .nn import INIT_METHODS, InitSpec
from .proxies import ScoringConfig
from .ranking import BUILTIN_PROXIES
from .rng import derive_seed
from .search import SearchConfig
from .space import Nb201Space, space_from_dict, space_to_dict

_TOP_KEYS = {"seed", "space", "scoring", "search", "proxies", "aggregation", "workers", "paths"}
_SCORING_KEYS = {"batch", "resolution", "init", "power_iters", "power_tol", "eig_tol"}
_INIT_KEYS = {"method", "std", "lo", "hi"}
_SEARCH_KEYS = {"T", "k", "budget", "rerank_period", "max_retries"}
_PATH_KEYS = {"trace", "output", "gt", "external", "scores"}


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class RunConfig:
    seed: int = 0
    space: object = field(default_factory=Nb201Space)
    batch: int = 64
    resolution: int | None = None
    init_method: str = "kaiming-normal-fan-in"
    init_std: float = 0.1
    init_lo: float = -0.1
    init_hi: float = 0.1
    power_iters: int = 50
    power_tol: float = 1e-6
    eig_tol: float = 1e-10
    T: int = 2000
    k: int = 1024
    budget: int | None = None
    rerank_period: int = 1
    max_retries: int = 100
    proxies: tuple = BUILTIN_PROXIES
    aggregation: str = "nl"
    workers: int = 1
    paths: dict = field(default_factory=dict)

    def validate(self):
        if self.init_method not in INIT_METHODS:
            raise ConfigError(f"unknown init method {self.init_method!r}")
        if self.aggregation not in ("nl", "linear"):
            raise ConfigError(f"aggregation must be 'nl' or 'linear', got {self.aggregation!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def sub_seed(self, name):
        return derive_seed(self.seed, name)

    def scoring_config(self):
        init = InitSpec(self.init_method, self.sub_seed("init"), self.init_std, self.init_lo,
                        self.init_hi)
        return ScoringConfig(batch=self.batch, resolution=self.resolution, init=init,
                             input_seed=self.sub_seed("input"), probe_seed=self.sub_seed("probe"),
                             power_iters=self.power_iters, power_tol=self.power_tol,
                             eig_tol=self.eig_tol)

    def search_config(self):
        return SearchConfig(T=self.T, k=min(self.k, self.T), budget=self.budget,
                            seed=self.sub_seed("search"), rerank_period=self.rerank_period,
                            proxy_subset=tuple(self.proxies), max_retries=self.max_retries)

    @classmethod
    def from_dict(cls, doc):
        _check_keys(doc, _TOP_KEYS, "config")
        cfg = cls()
        if "seed" in doc:
            cfg.seed = int(doc["seed"])
        if "space" in doc:
            cfg.space = space_from_dict(doc["space"])
        scoring = doc.get("scoring", {})
        _check_keys(scoring, _SCORING_KEYS, "scoring")
        for key in ("batch", "resolution", "power_iters", "power_tol", "eig_tol"):
            if key in scoring:
                setattr(cfg, key, scoring[key])
        init = scoring.get("init", {})
        _check_keys(init, _INIT_KEYS, "scoring.init")
        for key in _INIT_KEYS:
            if key in init:
                setattr(cfg, f"init_{key}", init[key])
        search = doc.get("search", {})
        _check_keys(search, _SEARCH_KEYS, "search")
        for key in _SEARCH_KEYS:
            if key in search:
                setattr(cfg, key, search[key])
        if "proxies" in doc:
            cfg.proxies = tuple(doc["proxies"])
        if "aggregation" in doc:
            cfg.aggregation = doc["aggregation"]
        if "workers" in doc:
            cfg.workers = int(doc["workers"])
        paths = doc.get("paths", {})
        _check_keys(paths, _PATH_KEYS, "paths")
        cfg.paths = dict(paths)
        return cfg.validate()

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return {
            "seed": self.seed,
            "space": space_to_dict(self.space),
            "scoring": {
                "batch": self.batch, "resolution": self.resolution,
                "init": {"method": self.init_method, "std": self.init_std,
                         "lo": self.init_lo, "hi": self.init_hi},
                "power_iters": self.power_iters, "power_tol": self.power_tol,
                "eig_tol": self.eig_tol,
            },
            "search": {"T": self.T, "k": self.k, "budget": self.budget,
                       "rerank_period": self.rerank_period, "max_retries": self.max_retries},
            "proxies": list(self.proxies),
            "aggregation": self.aggregation,
            "workers": self.workers,
            "paths": dict(self.paths),
        }
