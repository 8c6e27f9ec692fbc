"""Partially ordered sample space of (process subset, time bin) states.

Subsets are stored as bitmasks: process ``j`` (1-based) is bit ``j - 1``.
Besides the flat state list, every space exposes a dense ``(2**D, M)`` grid
layout so that up-set and down-set sums can be done with prefix sums along
each bit axis and the bin axis instead of explicit relation matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np


def mask_of(subset) -> int:
    m = 0
    for j in subset:
        m |= 1 << (int(j) - 1)
    return m


def members_of(mask: int) -> tuple[int, ...]:
    out = []
    j = 1
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return tuple(out)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass(frozen=True, order=True)
class PosetState:
    """One element ``(J, tau)`` of the sample space, or the bottom element."""

    subset: tuple[int, ...]
    bin: int
    is_bottom: bool = False

    @classmethod
    def bottom(cls) -> "PosetState":
        return cls((), 1, True)

    @property
    def mask(self) -> int:
        return mask_of(self.subset)

    @property
    def key(self) -> str:
        """Canonical ``"1,3:7"`` key; the bottom element is ``"bottom"``."""
        if self.is_bottom:
            return "bottom"
        return ",".join(str(j) for j in self.subset) + f":{self.bin}"

    @classmethod
    def from_key(cls, key: str) -> "PosetState":
        if key == "bottom":
            return cls.bottom()
        subset, _, tau = key.partition(":")
        members = tuple(sorted(int(j) for j in subset.split(",")))
        if not members or not tau:
            raise ValueError(f"malformed state key {key!r}")
        return cls(members, int(tau))

    def __repr__(self):
        return "⊥" if self.is_bottom else f"({set(self.subset)}, {self.bin})"


def leq(a: PosetState, b: PosetState) -> bool:
    """Order test: ``a <= b`` iff ``a`` is bottom or subset and bin are both dominated."""
    if a.is_bottom:
        return True
    if b.is_bottom:
        return False
    am, bm = a.mask, b.mask
    return (am & bm) == am and a.bin <= b.bin


def join(a: PosetState, b: PosetState) -> PosetState:
    """Least upper bound of two non-bottom states."""
    if a.is_bottom or b.is_bottom:
        raise ValueError("join is only defined for non-bottom states")
    return PosetState(members_of(a.mask | b.mask), max(a.bin, b.bin))


def _subsets_in_order(D: int):
    for size in range(1, D + 1):
        for combo in combinations(range(1, D + 1), size):
            yield combo


@dataclass(frozen=True, eq=False)
class SampleSpace:
    """All nonempty subsets of ``{1..D}`` times bins ``1..M``, plus bottom.

    States are ordered by ``(|J|, lexicographic J, tau)`` with bottom first.
    """

    D: int
    M: int
    T: float
    states: tuple[PosetState, ...] = field(repr=False)
    masks: np.ndarray = field(repr=False)
    bins: np.ndarray = field(repr=False)
    _index: dict = field(repr=False)

    def __len__(self):
        return len(self.states)

    @property
    def bottom(self) -> PosetState:
        return self.states[0]

    @property
    def top(self) -> PosetState:
        return PosetState(tuple(range(1, self.D + 1)), self.M)

    def index(self, state: PosetState) -> int:
        return self._index[state]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (1 << self.D, self.M)

    @property
    def flat_grid_index(self) -> np.ndarray:
        """Position of each state in the raveled ``(2**D, M)`` grid."""
        return self.masks * self.M + (self.bins - 1)

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        grid = np.zeros(self.grid_shape, dtype=float)
        grid.ravel()[self.flat_grid_index] = values
        return grid

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        return grid.ravel()[self.flat_grid_index]

    def bin_centers(self) -> np.ndarray:
        return (np.arange(1, self.M + 1) - 0.5) * self.T / self.M

    def bin_of(self, t) -> np.ndarray:
        """1-based bin index of times in ``[0, T]``; ``t == T`` lands in bin ``M``."""
        idx = np.floor(np.asarray(t, dtype=float) * self.M / self.T).astype(int) + 1
        return np.clip(idx, 1, self.M)


def build_space(D: int, M: int, T: float) -> SampleSpace:
    if int(D) != D or D < 1:
        raise ValueError(f"D must be a positive integer, got {D!r}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    D, M = int(D), int(M)
    states = [PosetState.bottom()]
    for subset in _subsets_in_order(D):
        states.extend(PosetState(subset, tau) for tau in range(1, M + 1))
    masks = np.array([s.mask for s in states], dtype=np.int64)
    bins = np.array([s.bin for s in states], dtype=np.int64)
    index = {s: i for i, s in enumerate(states)}
    return SampleSpace(D, M, float(T), tuple(states), masks, bins, index)


def upset_indices(s: PosetState, space: SampleSpace) -> list[int]:
    """Indices of all states ``w`` with ``s <= w``, in space order."""
    if s.is_bottom:
        return list(range(len(space)))
    m = s.mask
    sel = ((space.masks & m) == m) & (space.bins >= s.bin) & (space.masks != 0)
    return np.flatnonzero(sel).tolist()


# Prefix sums over the (2**D, M) grid. The mask axis is reshaped into D binary
# axes; a cumulative sum along bit axis i adds the "bit i clear" entry into the
# "bit i set" entry (subset sums) or the reverse (superset sums).

def _bit_view(grid: np.ndarray, D: int) -> np.ndarray:
    return grid.reshape((2,) * D + grid.shape[1:])


def downset_sum(grid: np.ndarray, D: int) -> np.ndarray:
    """``out[J, tau] = sum_{I <= J, t <= tau} grid[I, t]``."""
    out = _bit_view(grid.copy(), D)
    for axis in range(D):
        np.cumsum(out, axis=axis, out=out)
    out = out.reshape(grid.shape)
    np.cumsum(out, axis=1, out=out)
    return out


def upset_sum(grid: np.ndarray, D: int) -> np.ndarray:
    """``out[J, tau] = sum_{I >= J, t >= tau} grid[I, t]``."""
    rev = grid[::-1, ::-1]
    return downset_sum(rev, D)[::-1, ::-1]


def subset_sum(grid: np.ndarray, D: int) -> np.ndarray:
    """Sum over subsets only (no bin accumulation)."""
    out = _bit_view(grid.copy(), D)
    for axis in range(D):
        np.cumsum(out, axis=axis, out=out)
    return out.reshape(grid.shape)


@dataclass(frozen=True, eq=False)
class ParamDomain:
    """Parameter domain: states with ``1 <= |J| <= k``, minus any pruned states."""

    k: int
    M: int
    members: tuple[PosetState, ...]
    masks: np.ndarray = field(repr=False)
    bins: np.ndarray = field(repr=False)
    pruned: tuple[PosetState, ...] = ()

    def __len__(self):
        return len(self.members)

    @cached_property
    def _lookup(self) -> dict:
        return {s: i for i, s in enumerate(self.members)}

    def index_of(self, state: PosetState) -> int:
        return self._lookup[state]

    @property
    def flat_grid_index(self) -> np.ndarray:
        return self.masks * self.M + (self.bins - 1)

    def restrict(self, keep: np.ndarray) -> "ParamDomain":
        keep = np.asarray(keep, dtype=bool)
        members = tuple(s for s, kp in zip(self.members, keep) if kp)
        dropped = tuple(s for s, kp in zip(self.members, keep) if not kp)
        return ParamDomain(self.k, self.M, members, self.masks[keep], self.bins[keep],
                           self.pruned + dropped)


def build_domain(space: SampleSpace, k: int) -> ParamDomain:
    if int(k) != k or not 1 <= k <= space.D:
        raise ValueError(f"order k must satisfy 1 <= k <= D={space.D}, got {k!r}")
    members = tuple(s for s in space.states if not s.is_bottom and len(s.subset) <= k)
    masks = np.array([s.mask for s in members], dtype=np.int64)
    bins = np.array([s.bin for s in members], dtype=np.int64)
    return ParamDomain(int(k), space.M, members, masks, bins)


def domain_size(D: int, M: int, k: int) -> int:
    return M * sum(comb(D, c) for c in range(1, k + 1))
