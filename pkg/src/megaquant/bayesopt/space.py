"""Mixed categorical/ordinal configuration spaces on the unit hypercube.

Categoricals encode one-hot; ordinals encode as a scaled index. Decoding
any hypercube point snaps to the nearest member (argmax over the one-hot
block, rounded index otherwise), so every point decodes to a valid
config and decode(encode(c)) == c exactly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError
from ..sobol import sobol_sample


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: Tuple

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if len(self.choices) < 1:
            raise ConfigError(f"dimension {self.name} needs at least one choice")


@dataclass(frozen=True)
class Ordinal:
    name: str
    values: Tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 1:
            raise ConfigError(f"dimension {self.name} needs at least one value")


Dimension = Union[Categorical, Ordinal]


def _canon(value):
    """Hashable form of a config value (JSON round trips lists)."""
    return tuple(value) if isinstance(value, list) else value


class ConfigSpace:
    def __init__(self, dimensions: Sequence[Dimension]):
        self.dimensions: List[Dimension] = list(dimensions)
        if not self.dimensions:
            raise ConfigError("config space needs at least one dimension")
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ConfigError("dimension names must be unique")
        self._blocks = []
        offset = 0
        for dim in self.dimensions:
            width = len(dim.choices) if isinstance(dim, Categorical) else 1
            self._blocks.append((offset, width))
            offset += width
        self.encoded_dim = offset

    def __len__(self) -> int:
        n = 1
        for dim in self.dimensions:
            n *= len(dim.choices if isinstance(dim, Categorical) else dim.values)
        return n

    def _options(self, dim: Dimension) -> Tuple:
        return dim.choices if isinstance(dim, Categorical) else dim.values

    def encode(self, config: Dict) -> np.ndarray:
        x = np.zeros(self.encoded_dim)
        for dim, (offset, width) in zip(self.dimensions, self._blocks):
            options = self._options(dim)
            try:
                idx = options.index(_canon(config[dim.name]))
            except (KeyError, ValueError):
                raise ConfigError(
                    f"config value {config.get(dim.name)!r} not in dimension "
                    f"{dim.name} options") from None
            if isinstance(dim, Categorical):
                x[offset + idx] = 1.0
            else:
                x[offset] = idx / (len(options) - 1) if len(options) > 1 else 0.0
        return x

    def decode(self, vector) -> Dict:
        x = np.asarray(vector, dtype=np.float64)
        if x.shape != (self.encoded_dim,):
            raise ConfigError(f"expected vector of length {self.encoded_dim}")
        config = {}
        for dim, (offset, width) in zip(self.dimensions, self._blocks):
            options = self._options(dim)
            if isinstance(dim, Categorical):
                idx = int(np.argmax(x[offset:offset + width]))
            else:
                idx = int(round(x[offset] * (len(options) - 1))) if len(options) > 1 else 0
                idx = min(max(idx, 0), len(options) - 1)
            config[dim.name] = options[idx]
        return config

    def key(self, config: Dict) -> Tuple:
        """Hashable identity, also the lexicographic tie-break order."""
        return tuple(self._options(dim).index(_canon(config[dim.name]))
                     for dim in self.dimensions)

    def all_configs(self) -> Iterator[Dict]:
        names = [d.name for d in self.dimensions]
        for combo in itertools.product(*(self._options(d) for d in self.dimensions)):
            yield dict(zip(names, combo))

    def sample_configs(self, n: int, rng: np.random.Generator) -> List[Dict]:
        out = []
        for _ in range(n):
            out.append({dim.name: self._options(dim)[rng.integers(len(self._options(dim)))]
                        for dim in self.dimensions})
        return out

    def sobol_config(self, index: int, skip: int = 0) -> Dict:
        return self.decode(sobol_sample(self.encoded_dim, index, skip))
