"""Random test-case generation.

Uses :class:`random.Random` (Mersenne Twister, MT19937) and only its
``random()`` stream, whose output for a given seed is fixed across
platforms and Python versions.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict

from .equivalence import TestCase
from .subjects import Operation

DEFAULT_MIX = {"insert": 40, "update": 20, "delete": 15, "query": 25}
DEPENDENT = ("update", "delete", "query")


@dataclass
class GenConfig:
    num_ops: int = 200
    seed: int = 1
    key_space: int = 24
    value_space: int = 1000
    reuse_bias: float = 0.7
    mix: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_MIX))

    def validate(self) -> None:
        if self.num_ops < 0:
            raise ValueError("num_ops must be >= 0")
        if not 0.0 <= self.reuse_bias <= 1.0:
            raise ValueError(f"reuse_bias must be in [0, 1], got {self.reuse_bias}")
        if self.key_space < 1 or self.value_space < 1:
            raise ValueError("key_space and value_space must be >= 1")
        if not self.mix or any(w < 0 for w in self.mix.values()) or not sum(self.mix.values()):
            raise ValueError("op mix needs non-negative weights with a positive sum")


def _pick(rng: random.Random, n: int) -> int:
    return min(int(rng.random() * n), n - 1)


def generate(config: GenConfig) -> TestCase:
    config.validate()
    rng = random.Random(config.seed)
    kinds = sorted(config.mix)
    total = sum(config.mix.values())
    used: list = []
    seen: set = set()
    ops = []
    for _ in range(config.num_ops):
        r = rng.random() * total
        kind = kinds[-1]
        for k in kinds:
            r -= config.mix[k]
            if r < 0:
                kind = k
                break
        if kind in DEPENDENT and used and rng.random() < config.reuse_bias:
            key = used[_pick(rng, len(used))]
        else:
            key = 1 + _pick(rng, config.key_space)
        value = 1 + _pick(rng, config.value_space) if kind in ("insert", "update") else 0
        if key not in seen:
            seen.add(key)
            used.append(key)
        ops.append(Operation(kind, key, value))
    return TestCase(tuple(ops))
