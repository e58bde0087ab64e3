"""Per-slot device selection and RB allocation.

The slot problem is a maximum-weight bipartite matching between devices and
resource blocks. ``solve_optimal`` pads the weight matrix with zero-weight
virtual RBs (or virtual devices) to a square matrix and runs the
shortest-augmenting-path Hungarian method, O(n^3). Integrality of the LP
relaxation means this exact combinatorial optimum is the LP optimum as well.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

BASELINE_KINDS = ("random", "data_aware", "gain_aware")


@dataclass(frozen=True)
class AllocationInstance:
    weights: np.ndarray  # (N, M) bits
    covered: np.ndarray  # (N,) bool

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise ValueError("weights must be a 2-D matrix")
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError("weights must be finite and non-negative")
        cov = np.asarray(self.covered, dtype=bool)
        if cov.shape != (w.shape[0],):
            raise ValueError("covered must have one entry per device")
        if (w[~cov] != 0).any():
            raise ValueError("uncovered devices must have all-zero weight rows")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "covered", cov)

    @property
    def n_devices(self) -> int:
        return self.weights.shape[0]

    @property
    def n_rbs(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def dense(cls, weights) -> "AllocationInstance":
        """Instance in which a device counts as covered iff it has some positive weight."""
        w = np.asarray(weights, dtype=float)
        return cls(w, (w > 0).any(axis=1) if w.size else np.zeros(w.shape[0], bool))


@dataclass(frozen=True)
class AllocationResult:
    rb_of_device: np.ndarray  # (N,) int, -1 when no RB is held
    selected: np.ndarray  # (N,) bool
    total_weight: float

    def collected(self, inst: AllocationInstance) -> np.ndarray:
        out = np.zeros(inst.n_devices)
        idx = np.flatnonzero(self.selected)
        out[idx] = inst.weights[idx, self.rb_of_device[idx]]
        return out


def build_instance(rates: np.ndarray, remaining: np.ndarray, covered: np.ndarray,
                   delta_hover: float) -> AllocationInstance:
    """Edge weights min(r * delta_hover, D) for covered devices, 0 otherwise."""
    rates = np.asarray(rates, dtype=float)
    if (rates < 0).any():
        raise ValueError("rates must be non-negative")
    w = np.minimum(rates * delta_hover, np.asarray(remaining, dtype=float)[:, None])
    w[~np.asarray(covered, dtype=bool)] = 0.0
    return AllocationInstance(w, covered)


def _result(inst: AllocationInstance, pairs: dict[int, int]) -> AllocationResult:
    rb = np.full(inst.n_devices, -1, dtype=int)
    for n, m in pairs.items():
        if inst.weights[n, m] > 0:
            rb[n] = m
    selected = rb >= 0
    total = 0.0
    for n in np.flatnonzero(selected):
        total += inst.weights[n, rb[n]]
    return AllocationResult(rb, selected, float(total))


def hungarian_min_cost(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching of a square matrix; returns col index per row."""
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))  # lowest index among ties
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row


def solve_optimal(inst: AllocationInstance) -> AllocationResult:
    """Maximum total collected bits subject to one RB per device and one device per RB."""
    n_dev, n_rb = inst.weights.shape
    active = np.flatnonzero((inst.weights > 0).any(axis=1))
    if n_rb == 0 or active.size == 0:
        return _result(inst, {})
    # zero rows cannot add weight; drop them before padding
    sub = inst.weights[active]
    n = max(sub.shape)
    padded = np.zeros((n, n))
    padded[: sub.shape[0], : sub.shape[1]] = sub
    cols = hungarian_min_cost(-padded)
    pairs = {int(active[r]): int(c) for r, c in enumerate(cols[: sub.shape[0]]) if c < n_rb}
    return _result(inst, pairs)


@lru_cache(maxsize=None)
def _partial_assignments(n_dev: int, n_rb: int) -> np.ndarray:
    """All injective partial maps device -> RB; value n_rb marks 'no RB'."""
    rows = []
    for k in range(min(n_dev, n_rb) + 1):
        for devs in itertools.combinations(range(n_dev), k):
            for rbs in itertools.permutations(range(n_rb), k):
                row = [n_rb] * n_dev
                for d, m in zip(devs, rbs):
                    row[d] = m
                rows.append(row)
    return np.array(rows, dtype=int).reshape(len(rows), n_dev)


def solve_bruteforce(inst: AllocationInstance) -> AllocationResult:
    """Exhaustive enumeration over every feasible assignment (test oracle)."""
    n_dev, n_rb = inst.weights.shape
    if n_dev > 8 or n_rb > 8:
        raise ValueError("brute force is limited to 8 devices and 8 RBs")
    if n_dev == 0 or n_rb == 0:
        return _result(inst, {})
    assign = _partial_assignments(n_dev, n_rb)
    ext = np.concatenate([inst.weights, np.zeros((n_dev, 1))], axis=1)
    vals = np.zeros(len(assign))
    for d in range(n_dev):  # accumulate in device order, like _result
        vals = vals + ext[d, assign[:, d]]
    best = assign[int(np.argmax(vals))]
    return _result(inst, {d: int(m) for d, m in enumerate(best) if m < n_rb})


def solve_baseline(inst: AllocationInstance, kind: str, aux: dict | None = None,
                   rng: np.random.Generator | None = None) -> AllocationResult:
    """Heuristic allocators used for comparison.

    ``random`` picks min(M, |covered|) covered devices and a random RB for each.
    ``data_aware`` / ``gain_aware`` pick the devices with the largest
    ``aux["remaining"]`` / ``aux["gain"]`` and then match them optimally.
    """
    covered = np.flatnonzero(inst.covered)
    k = min(inst.n_rbs, covered.size)
    if k == 0:
        return _result(inst, {})
    if kind == "random":
        rng = rng if rng is not None else np.random.default_rng()
        devs = rng.choice(covered, size=k, replace=False)
        rbs = rng.permutation(inst.n_rbs)[:k]
        return _result(inst, {int(d): int(m) for d, m in zip(devs, rbs)})
    if kind == "data_aware":
        key = np.asarray(aux["remaining"], dtype=float)
    elif kind == "gain_aware":
        key = np.asarray(aux["gain"], dtype=float)
    else:
        raise ValueError(f"unknown baseline kind {kind!r}")
    order = covered[np.argsort(-key[covered], kind="stable")]
    chosen = np.sort(order[:k])
    mask = np.zeros(inst.n_devices, dtype=bool)
    mask[chosen] = True
    restricted = np.where(mask[:, None], inst.weights, 0.0)
    res = solve_optimal(AllocationInstance(restricted, inst.covered & mask))
    pairs = {int(n): int(res.rb_of_device[n]) for n in np.flatnonzero(res.selected)}
    return _result(inst, pairs)
