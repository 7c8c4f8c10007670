"""Problem data: stage spaces, skip augmentation, pairwise costs, endpoint measures.

A path is a plain tuple of length ``K + 1``.  Entry ``k`` is a point index
into stage ``k`` or :data:`SKIP` for the isolated skip point of an
intermediate stage.  Measures on intermediate stages live on the augmented
index set, with the skip slot stored last.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

SKIP = -1
NORMALIZATION_TOL = 1e-12
# atoms lighter than this are treated as outside the support
SUPPORT_EPS = 1e-15

Path = tuple  # tuple[int, ...]; SKIP marks a bypassed stage


class CostKind(str, enum.Enum):
    EXPLICIT = "ExplicitMatrices"
    SQUARED_EUCLIDEAN = "SquaredEuclidean"
    EUCLIDEAN = "Euclidean"
    SQUARED_CIRCLE = "SquaredCircleGeodesic"

    @property
    def is_kernel(self) -> bool:
        return self is not CostKind.EXPLICIT


@dataclass(frozen=True, eq=False)
class StageSpace:
    stage_index: int
    points: tuple
    coords: np.ndarray | None = None
    angles: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.coords is not None:
            c = np.asarray(self.coords, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            object.__setattr__(self, "coords", c)
        if self.angles is not None:
            object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float).ravel())

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class CostFamily:
    kind: CostKind
    matrices: dict | None = None  # {(i, j): ndarray}, i < j

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind(self.kind))
        if self.matrices is not None:
            mats = {(int(i), int(j)): np.asarray(m, dtype=float) for (i, j), m in self.matrices.items()}
            object.__setattr__(self, "matrices", mats)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    stage_index: int
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights >= SUPPORT_EPS)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    K: int
    spaces: tuple
    costs: CostFamily
    mu0: DiscreteMeasure
    muK: DiscreteMeasure
    allow_skips: bool = True

    def __post_init__(self):
        object.__setattr__(self, "spaces", tuple(self.spaces))

    @property
    def sizes(self) -> tuple:
        return tuple(s.size for s in self.spaces)

    def augmented_size(self, k: int) -> int:
        """Number of augmented states at stage ``k`` (points, plus skip if intermediate)."""
        n = self.spaces[k].size
        return n + 1 if 0 < k < self.K else n

    def slot(self, k: int, choice: int) -> int:
        """Position of a path entry in the augmented weight vector of stage ``k``."""
        return self.spaces[k].size if choice == SKIP else choice

    def choice_from_slot(self, k: int, slot: int) -> int:
        if 0 < k < self.K and slot == self.spaces[k].size:
            return SKIP
        return slot

    @cached_property
    def matrices(self) -> dict:
        """Realized cost matrices keyed by ``(i, j)``, computed once."""
        return realize_costs(self).matrices

    def cost(self, i: int, j: int) -> np.ndarray:
        return self.matrices[(i, j)]


class Violation(NamedTuple):
    code: str
    message: str


class InvalidInstanceError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in self.violations))


def _kernel_coordinates_missing(instance: ProblemInstance) -> list:
    kind = instance.costs.kind
    missing = []
    for s in instance.spaces:
        if kind is CostKind.SQUARED_CIRCLE and s.angles is None:
            missing.append(s.stage_index)
        elif kind in (CostKind.SQUARED_EUCLIDEAN, CostKind.EUCLIDEAN) and s.coords is None:
            missing.append(s.stage_index)
    return missing


def validate(instance: ProblemInstance) -> list:
    """Return every violated invariant; an empty list means the instance is valid."""
    out = []
    K = instance.K
    if not isinstance(K, (int, np.integer)) or K < 1:
        return [Violation("bad-K", f"K must be an integer >= 1, got {K!r}")]
    if len(instance.spaces) != K + 1:
        return [Violation("stage-count", f"expected {K + 1} stages, got {len(instance.spaces)}")]

    dims = set()
    for k, s in enumerate(instance.spaces):
        if s.stage_index != k:
            out.append(Violation("stage-index", f"stage at position {k} declares index {s.stage_index}"))
        if s.size == 0:
            out.append(Violation("empty-stage", f"stage {k} has no points"))
        if len(set(s.points)) != s.size:
            out.append(Violation("duplicate-label", f"stage {k} has repeated point labels"))
        if s.coords is not None:
            if s.coords.shape[0] != s.size or s.coords.shape[1] < 1:
                out.append(Violation("coords-shape", f"stage {k} coords shape {s.coords.shape} vs {s.size} points"))
            dims.add(s.coords.shape[1])
        if s.angles is not None and s.angles.shape[0] != s.size:
            out.append(Violation("coords-shape", f"stage {k} has {s.angles.shape[0]} angles for {s.size} points"))
    if len(dims) > 1:
        out.append(Violation("coords-shape", f"stages disagree on coordinate dimension {sorted(dims)}"))

    kind = instance.costs.kind
    if kind.is_kernel:
        for k in _kernel_coordinates_missing(instance):
            out.append(Violation("missing-coords", f"{kind.value} needs coordinates on stage {k}"))
    else:
        mats = instance.costs.matrices or {}
        for i in range(K + 1):
            for j in range(i + 1, K + 1):
                m = mats.get((i, j))
                if m is None:
                    out.append(Violation("missing-cost", f"no matrix for stage pair ({i},{j})"))
                    continue
                shape = (instance.spaces[i].size, instance.spaces[j].size)
                if m.shape != shape:
                    out.append(Violation("cost-shape", f"matrix ({i},{j}) has shape {m.shape}, expected {shape}"))
                    continue
                if np.isnan(m).any():
                    out.append(Violation("nan-cost", f"matrix ({i},{j}) contains NaN"))
                if (m < 0).any():
                    out.append(Violation("negative-cost", f"matrix ({i},{j}) has entry {m.min()!r} < 0"))

    for name, mu, k in (("mu0", instance.mu0, 0), ("muK", instance.muK, K)):
        if mu.stage_index != k:
            out.append(Violation("stage-index", f"{name} declares stage {mu.stage_index}, expected {k}"))
        n = instance.spaces[k].size
        w = mu.weights
        if w.shape[0] == n + 1:
            if w[-1] != 0:
                out.append(Violation("skip-mass-on-endpoint", f"{name} puts mass {w[-1]!r} on a skip slot"))
            w = w[:-1]
        elif w.shape[0] != n:
            out.append(Violation("measure-length", f"{name} has {w.shape[0]} weights for {n} points"))
            continue
        if not np.all(np.isfinite(w)) or (w < 0).any():
            out.append(Violation("negative-weight", f"{name} has negative or non-finite weights"))
        total = float(np.sum(w))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            out.append(Violation("measure-not-normalized", f"{name} sums to {total!r}"))
    return out


def check_valid(instance: ProblemInstance) -> ProblemInstance:
    bad = validate(instance)
    if bad:
        raise InvalidInstanceError(bad)
    return instance


def _pairwise_sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def circle_arc(a, b):
    """Geodesic distance on the unit circle between angles (broadcasting)."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), 2 * math.pi)
    return np.minimum(d, 2 * math.pi - d)


def kernel_matrix(kind: CostKind, src: StageSpace, dst: StageSpace) -> np.ndarray:
    if kind is CostKind.SQUARED_EUCLIDEAN:
        return _pairwise_sq_dist(src.coords, dst.coords)
    if kind is CostKind.EUCLIDEAN:
        return np.sqrt(_pairwise_sq_dist(src.coords, dst.coords))
    if kind is CostKind.SQUARED_CIRCLE:
        return circle_arc(src.angles[:, None], dst.angles[None, :]) ** 2
    raise ValueError(f"{kind} is not a kernel cost")


def kernel_from_point(kind: CostKind, x, dst: StageSpace) -> np.ndarray:
    """Costs from a single (possibly off-grid) source location to every point of ``dst``."""
    if kind is CostKind.SQUARED_CIRCLE:
        return circle_arc(float(np.ravel(x)[0]), dst.angles) ** 2
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = dst.coords - x[None, :]
    sq = np.einsum("ij,ij->i", diff, diff)
    if kind is CostKind.SQUARED_EUCLIDEAN:
        return sq
    if kind is CostKind.EUCLIDEAN:
        return np.sqrt(sq)
    raise ValueError(f"{kind} is not a kernel cost")


def realize_costs(instance: ProblemInstance) -> CostFamily:
    """Materialize the cost family as explicit matrices for every pair i < j."""
    fam = instance.costs
    if fam.kind is CostKind.EXPLICIT:
        return fam
    missing = _kernel_coordinates_missing(instance)
    if missing:
        raise ValueError(f"{fam.kind.value} needs coordinates on stages {missing}")
    sp = instance.spaces
    mats = {}
    for i in range(instance.K + 1):
        for j in range(i + 1, instance.K + 1):
            mats[(i, j)] = kernel_matrix(fam.kind, sp[i], sp[j])
    return CostFamily(CostKind.EXPLICIT, mats)


def with_matrices(instance: ProblemInstance, matrices: dict) -> ProblemInstance:
    """Copy of ``instance`` whose costs are the given explicit matrices (coords kept)."""
    return ProblemInstance(
        K=instance.K,
        spaces=instance.spaces,
        costs=CostFamily(CostKind.EXPLICIT, matrices),
        mu0=instance.mu0,
        muK=instance.muK,
        allow_skips=instance.allow_skips,
    )


def endpoint_weights(instance: ProblemInstance) -> tuple:
    """(mu0, muK) weight vectors restricted to real points."""
    n0, nK = instance.spaces[0].size, instance.spaces[-1].size
    return instance.mu0.weights[:n0], instance.muK.weights[:nK]


def line_instance(xs: Sequence[Sequence[float]], mu0=None, muK=None, allow_skips=True,
                  kind=CostKind.SQUARED_EUCLIDEAN) -> ProblemInstance:
    """Small helper: points on the real line, one list per stage, uniform endpoints by default."""
    K = len(xs) - 1
    spaces = [
        StageSpace(k, [f"s{k}p{i}" for i in range(len(x))], coords=np.asarray(x, dtype=float)[:, None])
        for k, x in enumerate(xs)
    ]
    n0, nK = len(xs[0]), len(xs[-1])
    w0 = np.full(n0, 1.0 / n0) if mu0 is None else np.asarray(mu0, dtype=float)
    wK = np.full(nK, 1.0 / nK) if muK is None else np.asarray(muK, dtype=float)
    return ProblemInstance(K, spaces, CostFamily(kind), DiscreteMeasure(0, w0), DiscreteMeasure(K, wK),
                           allow_skips=allow_skips)


def explicit_instance(sizes, matrices: dict, mu0=None, muK=None, allow_skips=True) -> ProblemInstance:
    K = len(sizes) - 1
    spaces = [StageSpace(k, [f"s{k}p{i}" for i in range(n)]) for k, n in enumerate(sizes)]
    w0 = np.full(sizes[0], 1.0 / sizes[0]) if mu0 is None else np.asarray(mu0, dtype=float)
    wK = np.full(sizes[-1], 1.0 / sizes[-1]) if muK is None else np.asarray(muK, dtype=float)
    return ProblemInstance(K, spaces, CostFamily(CostKind.EXPLICIT, matrices),
                           DiscreteMeasure(0, w0), DiscreteMeasure(K, wK), allow_skips=allow_skips)
