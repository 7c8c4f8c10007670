"""Seeded random instance families: i.i.d. cost matrices, Euclidean point clouds, circle samples."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import CostFamily, CostKind, DiscreteMeasure, ProblemInstance, StageSpace

FAMILIES = ("random_matrix", "euclidean", "circle")


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a random instance; identical specs give identical instances.

    ``cost_scale`` bounds the i.i.d. entries of the ``random_matrix`` family;
    the geometric families sample the unit cube or the unit circle.
    ``cost_kind`` switches the Euclidean family between squared and plain
    distance, and ``forbid_prob`` marks random matrix entries as forbidden.
    """

    family: str
    K: int
    sizes: tuple
    seed: int = 0
    cost_scale: float = 1.0
    dimension: int = 1
    allow_skips: bool = True
    cost_kind: str | None = None
    forbid_prob: float = 0.0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    def problems(self) -> list:
        out = []
        if self.family not in FAMILIES:
            out.append(f"family must be one of {', '.join(FAMILIES)}, got {self.family!r}")
        if not isinstance(self.K, int) or self.K < 1:
            out.append(f"K must be an integer >= 1, got {self.K!r}")
        elif len(self.sizes) != self.K + 1:
            out.append(f"sizes must list {self.K + 1} stage sizes, got {len(self.sizes)}")
        if any(s < 1 for s in self.sizes):
            out.append(f"every stage size must be >= 1, got {list(self.sizes)}")
        if not self.cost_scale > 0:
            out.append("cost_scale must be positive")
        if self.dimension < 1:
            out.append("dimension must be >= 1")
        if not 0.0 <= self.forbid_prob < 1.0:
            out.append("forbid_prob must lie in [0, 1)")
        if self.cost_kind is not None:
            allowed = {"euclidean": {CostKind.SQUARED_EUCLIDEAN.value, CostKind.EUCLIDEAN.value},
                       "circle": {CostKind.SQUARED_CIRCLE.value},
                       "random_matrix": {CostKind.EXPLICIT.value}}.get(self.family, set())
            if self.cost_kind not in allowed:
                out.append(f"cost_kind {self.cost_kind!r} does not fit family {self.family!r}")
        if self.extra:
            out.append(f"unknown spec keys {sorted(self.extra)}")
        return out

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorSpec:
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        missing = {"family", "K", "sizes"} - set(d)
        if missing:
            raise ValueError(f"spec is missing {sorted(missing)}")
        args = {k: v for k, v in d.items() if k in known}
        return cls(**args, extra={k: v for k, v in d.items() if k not in known})

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d["sizes"] = list(self.sizes)
        return d


def _labels(k: int, n: int) -> list:
    return [f"s{k}p{i}" for i in range(n)]


def generate(spec: GeneratorSpec) -> ProblemInstance:
    bad = spec.problems()
    if bad:
        raise ValueError("; ".join(bad))
    rng = np.random.default_rng(spec.seed)
    K, sizes = spec.K, spec.sizes
    if spec.family == "random_matrix":
        spaces = [StageSpace(k, _labels(k, n)) for k, n in enumerate(sizes)]
        mats = {}
        for i in range(K + 1):
            for j in range(i + 1, K + 1):
                C = rng.uniform(0.0, spec.cost_scale, size=(sizes[i], sizes[j]))
                if spec.forbid_prob > 0:
                    C[rng.random(C.shape) < spec.forbid_prob] = math.inf
                mats[(i, j)] = C
        costs = CostFamily(CostKind.EXPLICIT, mats)
    elif spec.family == "euclidean":
        spaces = [StageSpace(k, _labels(k, n), coords=rng.uniform(0.0, 1.0, size=(n, spec.dimension)))
                  for k, n in enumerate(sizes)]
        costs = CostFamily(CostKind(spec.cost_kind or CostKind.SQUARED_EUCLIDEAN.value))
    else:
        spaces = [StageSpace(k, _labels(k, n), angles=rng.uniform(0.0, 2 * math.pi, size=n))
                  for k, n in enumerate(sizes)]
        costs = CostFamily(CostKind.SQUARED_CIRCLE)
    mu0 = DiscreteMeasure(0, np.full(sizes[0], 1.0 / sizes[0]))
    muK = DiscreteMeasure(K, np.full(sizes[-1], 1.0 / sizes[-1]))
    return ProblemInstance(K, spaces, costs, mu0, muK, allow_skips=spec.allow_skips)
