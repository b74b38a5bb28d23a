"""Experiment configuration, named presets and seeding."""
from __future__ import annotations

import copy
import dataclasses
import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..geometry import FULL_SPHERE, HEMISPHERE

PAPER = "paper"
DESK = "desk"


def parse_order(value):
    """Born order from JSON: a positive integer or ``"inf"``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "oo"):
            return math.inf
        try:
            value = int(value)
        except ValueError:
            raise ConfigError(f"invalid Born order {value!r}") from None
    if isinstance(value, float) and math.isinf(value):
        return math.inf
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ConfigError(f"invalid Born order {value!r}")
    return int(value)


def format_order(order) -> str:
    return "inf" if order == math.inf else str(int(order))


@dataclass
class ExperimentConfig:
    """Every knob of a run; unknown keys in JSON are rejected.

    ``threshold`` of ``None`` means "use the true sparsity". ``params`` holds
    experiment-specific settings (model geometry, sweeps, reference constants).
    """

    experiment: str = "custom"
    side_length: float = 3.0
    n_per_side: int = 10
    data_n_per_side: Optional[int] = None
    n_meas: int = 500
    n_src: int = 500
    coverage: str = FULL_SPHERE
    eta0: list = field(default_factory=lambda: [0.1])
    sparsity: list = field(default_factory=lambda: [3])
    born_orders: list = field(default_factory=lambda: [1, 2, math.inf])
    threshold: Optional[int] = None
    iterations: int = 100
    noise_level: float = 0.0
    realizations: int = 1
    seed: int = 0
    out_dir: Optional[str] = None
    green_four_pi: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        if isinstance(self.eta0, (int, float)):
            self.eta0 = [self.eta0]
        if isinstance(self.sparsity, int):
            self.sparsity = [self.sparsity]
        need(isinstance(self.experiment, str) and self.experiment, "experiment must be a non-empty string")
        need(_is_num(self.side_length) and self.side_length > 0, "side_length must be positive")
        for name in ("n_per_side", "n_meas", "n_src", "iterations", "realizations"):
            val = getattr(self, name)
            need(_is_int(val) and val >= 1, f"{name} must be a positive integer")
        need(self.data_n_per_side is None or (_is_int(self.data_n_per_side) and self.data_n_per_side >= 1),
             "data_n_per_side must be a positive integer or null")
        need(self.coverage in (FULL_SPHERE, HEMISPHERE), f"coverage must be {FULL_SPHERE!r} or {HEMISPHERE!r}")
        need(all(_is_num(e) and e >= 0 for e in self.eta0), "eta0 entries must be non-negative numbers")
        need(all(_is_int(s) and s >= 0 for s in self.sparsity), "sparsity entries must be non-negative integers")
        self.born_orders = [parse_order(m) for m in self.born_orders]
        need(len(self.born_orders) > 0, "born_orders must be non-empty")
        need(self.threshold is None or (_is_int(self.threshold) and self.threshold >= 1),
             "threshold must be a positive integer or null")
        need(_is_num(self.noise_level) and self.noise_level >= 0, "noise_level must be non-negative")
        need(_is_int(self.seed) and self.seed >= 0, "seed must be a non-negative integer")
        need(isinstance(self.green_four_pi, bool), "green_four_pi must be a boolean")
        need(isinstance(self.params, dict), "params must be an object")

    @property
    def h(self):
        return self.side_length / self.n_per_side

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**copy.deepcopy(data))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["born_orders"] = [format_order(m) if m == math.inf else m for m in self.born_orders]
        return d

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def _is_int(x):
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_num(x):
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    return data


def realization_seed(master_seed, experiment_id, r) -> np.random.SeedSequence:
    """Independent stream for realization ``r`` of a named experiment."""
    tag = zlib.crc32(str(experiment_id).encode())
    return np.random.SeedSequence([int(master_seed), tag, int(r)])


def realization_rng(master_seed, experiment_id, r) -> np.random.Generator:
    return np.random.default_rng(realization_seed(master_seed, experiment_id, r))


_INF = "inf"

# Each preset is a base dict plus per-scale overrides.
_PRESETS = {
    "coherence-directions": (
        dict(side_length=3.0, n_per_side=10, n_meas=500, n_src=500, green_four_pi=False,
             params={"direction_counts": [1, 10, 25, 50, 100, 200, 300, 400, 500, 750, 1000]}),
        {DESK: dict(params={"direction_counts": [1, 50, 125, 250, 500, 1000]})},
    ),
    "single-scatterer": (
        dict(side_length=3.0, n_per_side=10, n_meas=500, n_src=500, eta0=[0.05, 0.1, 0.2],
             green_four_pi=False, params={"rho_max_h": 10.0, "n_rho": 4001}),
        {DESK: dict(params={"rho_max_h": 10.0, "n_rho": 901})},
    ),
    "coherence-sparsity": (
        dict(side_length=3.0, n_per_side=10, n_meas=500, n_src=500, eta0=[0.1], green_four_pi=False,
             sparsity=[0, 1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20], realizations=100,
             params={"fixed_vg_norm": 0.3553}),
        {DESK: dict(sparsity=[0, 1, 3, 6, 10], realizations=10)},
    ),
    "convergence-1": (
        dict(side_length=4.75, n_per_side=10, n_meas=400, n_src=400, eta0=[1e-5], sparsity=[3],
             born_orders=[1, 2, _INF], iterations=30, green_four_pi=False,
             params={"reference": {"mu": 0.0525, "delta": 0.0395, "gamma": 0.0460}}),
        {},
    ),
    "convergence-2": (
        dict(side_length=4.55, n_per_side=10, n_meas=400, n_src=400, eta0=[1e-4], sparsity=[3],
             born_orders=[1, 2, _INF], iterations=30, green_four_pi=False,
             params={"reference": {"mu": 0.098, "delta": 0.0987, "gamma": 0.1299}}),
        {},
    ),
    "model-1": (
        dict(side_length=5.0, n_per_side=21, data_n_per_side=25, n_meas=225, n_src=225,
             coverage=HEMISPHERE, eta0=[0.01, 0.06, 0.1, 0.4], born_orders=[1, 2, 3, _INF],
             threshold=230, iterations=100, noise_level=0.01, green_four_pi=True,
             params={"model": {"kind": "two-spheres", "radius": 0.5, "separation": 1.5}, "step": "auto"}),
        {DESK: dict(n_per_side=13, data_n_per_side=15, threshold=55, iterations=30,
                    eta0=[0.01, 0.1, 0.4])},
    ),
    "model-2": (
        dict(side_length=5.0, n_per_side=21, data_n_per_side=25, n_meas=225, n_src=225,
             coverage=HEMISPHERE, eta0=[0.09], born_orders=[1, 3, 5, 7, 9, _INF],
             threshold=1800, iterations=100, noise_level=0.01, green_four_pi=True,
             params={"model": {"kind": "radial-sphere", "radius": 1.25}, "step": "auto"}),
        {DESK: dict(n_per_side=13, data_n_per_side=15, threshold=427, iterations=30,
                    born_orders=[1, 3, 5, _INF])},
    ),
    "success-rate": (
        dict(side_length=5.0, n_per_side=10, n_meas=225, n_src=225, coverage=HEMISPHERE,
             eta0=[0.05, 0.1], sparsity=list(range(1, 51)), born_orders=[1, 2, 3, 4, _INF],
             iterations=50, realizations=500, green_four_pi=True),
        {DESK: dict(eta0=[0.1], sparsity=[5, 15, 25], born_orders=[1, 2, _INF], realizations=50)},
    ),
}

EXPERIMENT_IDS = tuple(_PRESETS)


def preset(experiment_id, scale=DESK, overrides=None) -> ExperimentConfig:
    """Configuration for a named experiment at ``paper`` or ``desk`` scale."""
    if experiment_id not in _PRESETS:
        raise ConfigError(f"unknown experiment {experiment_id!r}; choose from {', '.join(EXPERIMENT_IDS)}")
    if scale not in (PAPER, DESK):
        raise ConfigError(f"scale must be {PAPER!r} or {DESK!r}")
    base, scaled = _PRESETS[experiment_id]
    d = copy.deepcopy(base)
    d["experiment"] = experiment_id
    d.update(copy.deepcopy(scaled.get(scale, {})))
    if "params" in scaled.get(scale, {}):
        d["params"] = {**base.get("params", {}), **scaled[scale]["params"]}
    if overrides:
        overrides = dict(overrides)
        if "params" in overrides:
            d["params"] = {**d.get("params", {}), **overrides.pop("params")}
        d.update(overrides)
    return ExperimentConfig.from_dict(d)
