"""Engine configuration knobs with their shipped defaults.

Flat dotted keys (e.g. ``sampling.retention``) map onto the grouped
dataclasses below; ``EngineConfig.from_dict`` accepts either nesting style.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class SamplingConfig:
    retention: float = 0.2
    threshold_rows: int = 100_000
    score_cap_rows: int = 2_000_000
    epsilon_floor: float = 1e-6


@dataclass
class SurrogateConfig:
    families: tuple = ("random_forest", "gradient_boosted_trees", "ridge_linear")
    ensemble_members: int = 5
    cv_folds: int = 5
    family_time_budget_s: float = 300.0
    forest_trees: int = 100
    forest_max_depth: int = 0  # 0 = unlimited
    forest_min_leaf: int = 1
    gbt_rounds: int = 100
    gbt_learning_rate: float = 0.1
    gbt_max_depth: int = 3
    ridge_alpha: float = 1.0


@dataclass
class GeneratorConfig:
    population: int = 50
    generations: int = 200
    mutation_sigma: float = 0.25
    mutation_rate: float = 0.2
    crossover_rate: float = 0.9
    elite_fraction: float = 0.1
    tournament_size: int = 3
    workers: int = 4
    parallel: bool = True
    wall_budget_s: float = 60.0
    minimize_percentile: float = 0.05
    duplicate_sig_digits: int = 6


@dataclass
class TrustConfig:
    k_neighbors: int = 20
    tau_close_percentile: float = 0.05
    caution_threshold: float = 0.95
    unsupported_threshold: float = 0.99
    next_runs: int = 5


@dataclass
class EngineConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        cfg = cls()
        for key, value in data.items():
            if isinstance(value, dict):
                group = getattr(cfg, key)
                for sub, v in value.items():
                    _set_known(group, key, sub, v)
            elif "." in key:
                group_name, sub = key.split(".", 1)
                _set_known(getattr(cfg, group_name), group_name, sub, v=value)
            else:
                raise KeyError(f"unknown config key: {key}")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "EngineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _set_known(group, group_name: str, sub: str, v):
    names = {f.name for f in dataclasses.fields(group)}
    if sub not in names:
        raise KeyError(f"unknown config key: {group_name}.{sub}")
    setattr(group, sub, v)
