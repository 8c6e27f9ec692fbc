"""Event data, coincidence extraction and the kernel-smoothed empirical distribution."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .poset import ParamDomain, SampleSpace, mask_of, members_of, subset_sum, upset_sum

# Unnormalized bottom mass relative to the largest cell; keeps bottom in the
# support without visibly moving the other cells.
BOTTOM_EPS = 1e-9

# Events per chunk when evaluating kernel sums (bounds memory at M * chunk).
_CHUNK = 8192

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass
class Distribution:
    """Probability mass over the states of a sample space, in space order."""

    mass: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def __len__(self):
        return len(self.mass)


@dataclass
class EventData:
    """Per-process timestamps plus joint-event vectors keyed by subset mask.

    ``per_process[j - 1]`` holds the sorted stream of process ``j``.
    ``joint[mask]`` is an ``(N_I, |I|)`` array; singleton masks mirror the
    per-process streams.
    """

    D: int
    T: float
    per_process: list[np.ndarray]
    joint: dict[int, np.ndarray] = field(default_factory=dict)
    window: float = 0.0

    def events(self, subset) -> np.ndarray:
        """Joint-event vectors for a subset given as mask or iterable of ids."""
        mask = subset if isinstance(subset, (int, np.integer)) else mask_of(subset)
        mask = int(mask)
        ids = members_of(mask)
        if len(ids) == 1:
            return self.per_process[ids[0] - 1][:, None]
        return self.joint.get(mask, np.empty((0, len(ids))))

    def count(self, subset) -> int:
        return len(self.events(subset))

    def representative_times(self, subset) -> np.ndarray:
        """Coordinate mean of each joint vector, used for binning."""
        return self.events(subset).mean(axis=1)


def _as_streams(per_process) -> list[np.ndarray]:
    if isinstance(per_process, Mapping):
        D = max(per_process) if per_process else 0
        raw = [per_process.get(j, ()) for j in range(1, D + 1)]
    else:
        raw = list(per_process)
    return [np.sort(np.asarray(s, dtype=float).ravel()) for s in raw]


def _greedy_match(streams: Sequence[np.ndarray], delta: float) -> np.ndarray:
    """Left-to-right greedy coincidence matching across sorted streams.

    When the current heads span at most ``delta`` they form a group and all
    advance; otherwise the earliest head can never be matched and is dropped.
    """
    n = len(streams)
    lists = [s.tolist() for s in streams]
    lens = [len(s) for s in lists]
    pos = [0] * n
    out = []
    while all(p < L for p, L in zip(pos, lens)):
        heads = [lists[i][pos[i]] for i in range(n)]
        lo = min(heads)
        if max(heads) - lo <= delta:
            out.append(heads)
            for i in range(n):
                pos[i] += 1
        else:
            pos[heads.index(lo)] += 1
    return np.array(out, dtype=float).reshape(len(out), n)


def extract_joint_events(per_process, delta: float, max_order: int | None = None,
                         T: float | None = None) -> EventData:
    """Build ``EventData`` with coincidence events for every subset of size 2..max_order."""
    if delta < 0:
        raise ValueError(f"coincidence window must be non-negative, got {delta}")
    streams = _as_streams(per_process)
    D = len(streams)
    if D == 0:
        raise ValueError("need at least one process")
    max_order = D if max_order is None else int(max_order)
    if max_order > D:
        raise ValueError(f"max_order {max_order} exceeds number of processes {D}")
    if T is None:
        T = max((float(s[-1]) for s in streams if len(s)), default=1.0)
    for j, s in enumerate(streams, 1):
        if len(s) and (s[0] < 0 or s[-1] > T):
            raise ValueError(f"process {j} has timestamps outside [0, {T}]")
    joint = {}
    for size in range(2, max_order + 1):
        for combo in combinations(range(1, D + 1), size):
            joint[mask_of(combo)] = _greedy_match([streams[j - 1] for j in combo], delta)
    return EventData(D, float(T), streams, joint, float(delta))


@dataclass
class SmootherConfig:
    """Gaussian-kernel smoother settings; ``bandwidth`` maps subset mask to seconds."""

    bandwidth: dict[int, float]
    bins: int
    duration: float

    def __post_init__(self):
        for mask, h in self.bandwidth.items():
            if not h > 0:
                raise ValueError(f"bandwidth for subset {members_of(mask)} must be > 0, got {h}")

    @classmethod
    def uniform(cls, h: float, D: int, bins: int, duration: float) -> "SmootherConfig":
        return cls({m: float(h) for m in range(1, 1 << D)}, bins, duration)

    @classmethod
    def scott(cls, data: EventData, bins: int) -> "SmootherConfig":
        """Scott's rule per projection, falling back to one bin width when undefined."""
        fallback = data.T / bins
        bw = {}
        for mask in range(1, 1 << data.D):
            ev = data.events(mask)
            n, d = ev.shape
            sd = float(ev.std(axis=0, ddof=1).mean()) if n > 1 else 0.0
            bw[mask] = n ** (-1.0 / (d + 4)) * sd if sd > 0 else fallback
        return cls(bw, bins, data.T)

    def h(self, mask: int) -> float:
        return self.bandwidth[mask]

    def bin_centers(self) -> np.ndarray:
        return (np.arange(1, self.bins + 1) - 0.5) * self.duration / self.bins


def _kernel_sums(points: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    """Unnormalized sum over points of the product kernel at diagonal centers.

    Uses sum_j (c - t_j)^2 = n (c - mean)^2 + sum_j (t_j - mean)^2, so each
    point reduces to a weighted 1-D Gaussian at its coordinate mean.
    """
    n_pts, d = points.shape
    out = np.zeros(len(centers))
    for start in range(0, n_pts, _CHUNK):
        chunk = points[start:start + _CHUNK]
        mean = chunk.mean(axis=1)
        spread = ((chunk - mean[:, None]) ** 2).sum(axis=1)
        logw = -spread / (2 * h * h)
        z = centers[:, None] - mean[None, :]
        out += np.exp(logw[None, :] - d * z * z / (2 * h * h)).sum(axis=1)
    return out * _INV_SQRT_2PI ** d


def smoother_values(subset, data: EventData, cfg: SmootherConfig) -> np.ndarray:
    """Kernel smoother for one subset at every bin center."""
    mask = subset if isinstance(subset, (int, np.integer)) else mask_of(subset)
    mask = int(mask)
    if mask <= 0:
        raise ValueError("subset must be nonempty")
    points = data.events(mask)
    n, d = points.shape
    if n == 0:
        return np.zeros(cfg.bins)
    h = cfg.h(mask)
    return _kernel_sums(points, cfg.bin_centers(), h) / (n * h ** d)


def smoother_value(subset, tau: int, data: EventData, cfg: SmootherConfig) -> float:
    if int(tau) != tau or not 1 <= tau <= cfg.bins:
        raise ValueError(f"bin index must lie in 1..{cfg.bins}, got {tau!r}")
    return float(smoother_values(subset, data, cfg)[int(tau) - 1])


def smoother_grid(data: EventData, cfg: SmootherConfig) -> np.ndarray:
    """``(2**D, M)`` array of smoother values; row 0 (empty subset) is zero."""
    grid = np.zeros((1 << data.D, cfg.bins))
    for mask in range(1, 1 << data.D):
        grid[mask] = smoother_values(mask, data, cfg)
    return grid


def empirical_distribution(data: EventData, cfg: SmootherConfig,
                           space: SampleSpace) -> Distribution:
    if space.D != data.D or space.M != cfg.bins or not np.isclose(space.T, cfg.duration):
        raise ValueError("sample space does not match data/smoother configuration")
    sums = subset_sum(smoother_grid(data, cfg), data.D)
    unnorm = space.from_grid(sums)
    top = unnorm.max()
    if not top > 0:
        raise ValueError("all smoother values are zero; no events to estimate from")
    unnorm[0] = BOTTOM_EPS * top
    return Distribution(unnorm / unnorm.sum())


def eta_grid(dist: Distribution, space: SampleSpace) -> np.ndarray:
    """Up-set sums of a distribution for every cell of the ``(2**D, M)`` grid."""
    return upset_sum(space.to_grid(dist.mass), space.D)


def empirical_eta(phat: Distribution, domain: ParamDomain, space: SampleSpace) -> np.ndarray:
    return eta_grid(phat, space).ravel()[domain.flat_grid_index]
