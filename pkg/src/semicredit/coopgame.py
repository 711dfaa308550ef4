"""Coalitions, semivalue weight families, and semivalue estimation.

A semivalue scores agent i as

    psi_i = sum_c p_c * mean_{C subset of N minus {i}, |C| = c} [v(C + i) - v(C)]

where p is a probability vector over coalition sizes c in {0, ..., n-1}.
Shapley (uniform p), Banzhaf (binomial p), leave-one-out (point mass at
n-1), and fixed-size specs are all instances. Values v come from a
``CoalitionEvaluator``, which owns the per-agent default actions used to
mask out non-members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, EnumerationLimitError

ENUMERATION_LIMIT = 20


@dataclass(frozen=True)
class Coalition:
    """A subset of agents 0..n-1 packed into the low n bits of a mask."""

    mask: int
    n: int

    def __post_init__(self):
        if not 0 < self.n <= 64:
            raise ContractError(f"coalition over {self.n} agents is out of range")
        if self.mask < 0 or self.mask >> self.n:
            raise ContractError(f"mask {self.mask:#x} has bits above agent {self.n - 1}")

    @classmethod
    def empty(cls, n: int) -> "Coalition":
        return cls(0, n)

    @classmethod
    def full(cls, n: int) -> "Coalition":
        return cls((1 << n) - 1, n)

    @classmethod
    def of(cls, members, n: int) -> "Coalition":
        mask = 0
        for i in members:
            if not 0 <= i < n:
                raise ContractError(f"agent {i} outside 0..{n - 1}")
            mask |= 1 << i
        return cls(mask, n)

    def size(self) -> int:
        return bin(self.mask).count("1")

    def contains(self, i: int) -> bool:
        return bool((self.mask >> i) & 1)

    def add(self, i: int) -> "Coalition":
        return Coalition(self.mask | (1 << i), self.n)

    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.contains(i))

    def member_row(self) -> np.ndarray:
        """Boolean membership vector of length n."""
        return np.array([(self.mask >> i) & 1 for i in range(self.n)], dtype=bool)


@dataclass(frozen=True)
class SemivalueSpec:
    """Size distribution p over coalition sizes 0..n-1, summing to one."""

    n: int
    p: tuple[float, ...]

    def __post_init__(self):
        if len(self.p) != self.n:
            raise ContractError(f"need {self.n} size weights, got {len(self.p)}")
        arr = np.asarray(self.p, dtype=np.float64)
        if np.any(arr < 0):
            raise ContractError("size weights must be nonnegative")
        if abs(float(arr.sum()) - 1.0) > 1e-12:
            raise ContractError(f"size weights sum to {arr.sum()!r}, not 1")

    def weights(self) -> np.ndarray:
        return np.asarray(self.p, dtype=np.float64)


def shapley_spec(n: int) -> SemivalueSpec:
    return SemivalueSpec(n, tuple(1.0 / n for _ in range(n)))


def banzhaf_spec(n: int) -> SemivalueSpec:
    denom = float(2 ** (n - 1))
    return SemivalueSpec(n, tuple(math.comb(n - 1, c) / denom for c in range(n)))


def loo_spec(n: int) -> SemivalueSpec:
    return SemivalueSpec(n, tuple(0.0 if c < n - 1 else 1.0 for c in range(n)))


def fixed_size_spec(n: int, c: int) -> SemivalueSpec:
    if not 0 <= c <= n - 1:
        raise ContractError(f"fixed coalition size {c} outside 0..{n - 1}")
    return SemivalueSpec(n, tuple(1.0 if k == c else 0.0 for k in range(n)))


def semivalue_spec(name: str, n: int) -> SemivalueSpec:
    """Resolve a spec id: shapley, banzhaf, loo, or fixed:<c>."""
    if name == "shapley":
        return shapley_spec(n)
    if name == "banzhaf":
        return banzhaf_spec(n)
    if name == "loo":
        return loo_spec(n)
    if name.startswith("fixed:"):
        return fixed_size_spec(n, int(name.split(":", 1)[1]))
    raise ContractError(f"unknown semivalue spec {name!r}")


class CoalitionEvaluator:
    """Characteristic-function source: values of masked joint actions.

    Subclasses fill in ``values``. ``member_masks`` is a (B, n) boolean
    matrix; row b asks for the value when exactly the marked agents play
    their chosen action and everyone else plays their default. ``state``
    and ``joint_action`` describe the single decision point shared by all
    rows (evaluators over abstract games may ignore them). The value of the
    empty coalition is whatever the evaluator returns for all defaults; it
    is not forced to zero.
    """

    n_agents: int
    defaults: np.ndarray | None

    def values(self, state, joint_action, member_masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, state, joint_action, coalition: Coalition) -> float:
        if coalition.n != self.n_agents:
            raise ContractError(f"coalition over {coalition.n} agents, evaluator has {self.n_agents}")
        return float(self.values(state, joint_action, coalition.member_row()[None, :])[0])


class TabularGame(CoalitionEvaluator):
    """An explicit characteristic function v: 2^n -> R, indexed by mask."""

    def __init__(self, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        n = int(table.size).bit_length() - 1
        if table.size != 1 << n:
            raise ContractError(f"table length {table.size} is not a power of two")
        self.table = table
        self.n_agents = n
        self.defaults = None

    def values(self, state, joint_action, member_masks: np.ndarray) -> np.ndarray:
        codes = member_masks.astype(np.int64) @ (1 << np.arange(self.n_agents, dtype=np.int64))
        return self.table[codes]


def mask_action(joint_action: np.ndarray, coalition: Coalition, defaults: np.ndarray) -> np.ndarray:
    """Replace the rows of non-members with their default actions."""
    joint_action = np.asarray(joint_action, dtype=np.float64)
    defaults = np.asarray(defaults, dtype=np.float64)
    if joint_action.shape != defaults.shape:
        raise ContractError(f"action shape {joint_action.shape} differs from defaults {defaults.shape}")
    if coalition.n != joint_action.shape[0]:
        raise ContractError(f"coalition over {coalition.n} agents, actions have {joint_action.shape[0]} rows")
    keep = coalition.member_row()
    return np.where(keep[:, None], joint_action, defaults)


def marginal_contribution(
    i: int, coalition: Coalition, state, joint_action, evaluator: CoalitionEvaluator
) -> float:
    """v(C + i) - v(C); requires i not already in C."""
    if coalition.contains(i):
        raise ContractError(f"agent {i} is already in the coalition")
    rows = np.stack([coalition.add(i).member_row(), coalition.member_row()])
    with_i, without_i = evaluator.values(state, joint_action, rows)
    return float(with_i - without_i)


def _others(i: int, n: int) -> list[int]:
    return [j for j in range(n) if j != i]


def enumerate_coalition_rows(i: int, n: int, spec: SemivalueSpec) -> tuple[np.ndarray, np.ndarray]:
    """All subsets of the other agents, with their semivalue weights.

    Returns (masks, weights): masks is (2^(n-1), n) membership without i,
    weights[k] = p_|C_k| / binom(n-1, |C_k|), so the exact semivalue is
    sum_k weights[k] * (v(C_k + i) - v(C_k)).
    """
    others = _others(i, n)
    count = 1 << (n - 1)
    masks = np.zeros((count, n), dtype=bool)
    sizes = np.zeros(count, dtype=np.int64)
    for k in range(count):
        c = 0
        for bit, j in enumerate(others):
            if (k >> bit) & 1:
                masks[k, j] = True
                c += 1
        sizes[k] = c
    p = spec.weights()
    weights = np.array([p[c] / math.comb(n - 1, c) for c in sizes])
    return masks, weights


def semivalue_exact(
    i: int, state, joint_action, evaluator: CoalitionEvaluator, spec: SemivalueSpec
) -> float:
    """Exact semivalue of agent i by enumerating all 2^(n-1) coalitions."""
    n = spec.n
    if n != evaluator.n_agents:
        raise ContractError(f"spec over {n} agents, evaluator has {evaluator.n_agents}")
    if n > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"exact enumeration over {n} agents exceeds the {ENUMERATION_LIMIT}-agent limit; "
            "use semivalue_mc"
        )
    masks, weights = enumerate_coalition_rows(i, n, spec)
    with_i = masks.copy()
    with_i[:, i] = True
    v_with = evaluator.values(state, joint_action, with_i)
    v_without = evaluator.values(state, joint_action, masks)
    return float(np.dot(weights, v_with - v_without))


def sample_coalitions(
    i: int, spec: SemivalueSpec, num_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw coalitions of the other agents as a (num_samples, n) mask matrix.

    A size c is drawn from spec.p, then a uniform size-c subset of the other
    agents via a partial Fisher-Yates shuffle. Draw order is fixed so a
    given generator state always yields the same coalition sequence.
    """
    n = spec.n
    if num_samples < 1:
        raise ContractError("num_samples must be at least 1")
    p = spec.weights()
    sizes = rng.choice(n, size=num_samples, p=p)
    width = n - 1
    masks = np.zeros((num_samples, n), dtype=bool)
    max_c = int(sizes.max())
    if max_c == 0:
        return masks
    # One batched draw in sample-major order; element bounds make it consume
    # the generator exactly like per-sample scalar draws would.
    live = np.arange(max_c) < sizes[:, None]
    highs = np.broadcast_to(width - np.arange(max_c), live.shape)
    swap = np.zeros(live.shape, dtype=np.int64)
    swap[live] = rng.integers(0, highs[live])
    pools = np.broadcast_to(np.array(_others(i, n)), (num_samples, width)).copy()
    rows = np.arange(num_samples)
    for k in range(max_c):
        r = rows[live[:, k]]
        j = k + swap[r, k]
        left = pools[r, k].copy()
        pools[r, k] = pools[r, j]
        pools[r, j] = left
    masks[np.repeat(rows, sizes), pools[:, :max_c][live]] = True
    return masks


def semivalue_mc(
    i: int,
    state,
    joint_action,
    evaluator: CoalitionEvaluator,
    spec: SemivalueSpec,
    num_samples: int,
    rng: np.random.Generator,
) -> float:
    """Unbiased Monte Carlo semivalue: mean marginal over sampled coalitions."""
    n = spec.n
    if n != evaluator.n_agents:
        raise ContractError(f"spec over {n} agents, evaluator has {evaluator.n_agents}")
    masks = sample_coalitions(i, spec, num_samples, rng)
    with_i = masks.copy()
    with_i[:, i] = True
    v_with = evaluator.values(state, joint_action, with_i)
    v_without = evaluator.values(state, joint_action, masks)
    return float(np.mean(v_with - v_without))
