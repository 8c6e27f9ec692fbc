"""Metrics and (h, M) model selection."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np

from .empirical import EventData, _as_streams, extract_joint_events
from .optimizer import FitConfig, NumericalError

log = logging.getLogger(__name__)

NLL_FLOOR = 1e-12


def kl_to_truth(estimated, truth) -> float:
    """KL(truth || estimate) after normalising both per-bin vectors to sum to one."""
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"bin grids differ: {est.shape} vs {tru.shape}")
    if np.any(est < 0) or np.any(tru < 0) or not est.sum() > 0 or not tru.sum() > 0:
        raise ValueError("intensities must be non-negative with positive totals")
    p, q = tru / tru.sum(), est / est.sum()
    pos = p > 0
    if np.any(q[pos] == 0):
        raise ValueError("estimate is zero on a bin where the truth is positive")
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def negative_test_loglik(intensity, test_events, T: float, M: int) -> float:
    """``sum_bins lam * T/M - sum_events log lam(bin(t))`` with zero bins floored at 1e-12.

    ``test_events`` is a 1-D array of times or an ``(N, |J|)`` array of joint
    vectors, binned by coordinate mean.
    """
    lam = np.asarray(intensity, dtype=float)
    if lam.shape != (M,):
        raise ValueError(f"expected {M} bins, got shape {lam.shape}")
    if np.any(lam < 0):
        raise ValueError("intensity must be non-negative")
    ev = np.asarray(test_events, dtype=float)
    times = ev.mean(axis=1) if ev.ndim == 2 else ev.ravel()
    idx = np.clip(np.floor(times * M / T).astype(int), 0, M - 1)
    return float(lam.sum() * T / M - np.log(np.maximum(lam[idx], NLL_FLOOR)).sum())


# ------------------------------------------------------------ data splitting

def holdout_split(per_process, fraction: float, seed, delta: float, T: float,
                  max_order: int | None = None) -> tuple[EventData, EventData]:
    """Randomly assign each event to validation with probability ``fraction``."""
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    streams = _as_streams(per_process)
    train, valid = [], []
    for s in streams:
        mask = rng.random(len(s)) < fraction
        train.append(s[~mask])
        valid.append(s[mask])
    return (extract_joint_events(train, delta, max_order, T),
            extract_joint_events(valid, delta, max_order, T))


def kfold_splits(per_process, folds: int, seed, delta: float, T: float,
                 max_order: int | None = None) -> list[tuple[EventData, EventData]]:
    if folds < 2:
        raise ValueError("need at least two folds")
    rng = np.random.default_rng(seed)
    streams = _as_streams(per_process)
    labels = [rng.integers(0, folds, len(s)) for s in streams]
    out = []
    for f in range(folds):
        train = [s[lab != f] for s, lab in zip(streams, labels)]
        valid = [s[lab == f] for s, lab in zip(streams, labels)]
        out.append((extract_joint_events(train, delta, max_order, T),
                    extract_joint_events(valid, delta, max_order, T)))
    return out


# --------------------------------------------------------------- grid search

@dataclass
class GridResult:
    best_h: float
    best_M: int
    table: list[tuple[float, int, float]]

    @property
    def best_score(self) -> float:
        return min(s for _, _, s in self.table)


def worker_count(n_tasks: int) -> int:
    cap = os.environ.get("APP_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def validation_score(model, valid: EventData, subsets) -> float:
    score = 0.0
    for mask in subsets:
        lam, _ = model.intensity(mask)
        score += negative_test_loglik(lam, valid.events(mask), model.space.T, model.space.M)
    return score


def grid_search(train, validation, h_grid, M_grid, k: int,
                method: str = "natural_gradient", subsets=None,
                cfg: FitConfig | None = None) -> GridResult:
    """Fit on ``train`` for every ``(h, M)`` and score negative validation log-likelihood.

    ``train``/``validation`` are ``EventData`` or equal-length lists of folds
    (scores are averaged). Ties go to the smaller ``h``, then the smaller ``M``.
    """
    from .model import fit_app

    folds = list(zip(train, validation)) if isinstance(train, (list, tuple)) else [(train, validation)]
    h_grid, M_grid = list(h_grid), list(M_grid)
    if not h_grid or not M_grid:
        raise ValueError("grids must be nonempty")
    D = folds[0][0].D
    subsets = list(range(1, 1 << D)) if subsets is None else list(subsets)
    cfg = cfg or FitConfig(method=method)
    cells = list(product(h_grid, M_grid))

    def score(cell):
        h, M = cell
        total = 0.0
        try:
            for tr, va in folds:
                model, _, _ = fit_app(tr, k, M, h, cfg)
                total += validation_score(model, va, subsets)
        except (ValueError, NumericalError, FloatingPointError) as exc:
            log.warning("grid cell h=%s M=%s failed: %s", h, M, exc)
            return float("inf")
        return total / len(folds)

    with ThreadPoolExecutor(max_workers=worker_count(len(cells))) as pool:
        scores = list(pool.map(score, cells))
    table = [(float(h), int(M), float(s)) for (h, M), s in zip(cells, scores)]
    finite = [row for row in table if np.isfinite(row[2])]
    if not finite:
        raise RuntimeError("every grid cell failed to fit")
    best = min(finite, key=lambda r: (r[2], r[0], r[1]))
    return GridResult(best[0], best[1], table)
