"""Log-linear model on the (subset x bin) poset.

``log p(w) = sum_{s in S, s <= w} theta(s) - psi``. Down-set sums of theta and
up-set sums of p are both prefix sums on the grid layout, so one evaluation
costs O(|Omega| * D) regardless of the size of the parameter domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .empirical import Distribution, EventData, eta_grid
from .poset import ParamDomain, SampleSpace, downset_sum, mask_of


@dataclass
class ParamVector:
    theta: np.ndarray
    psi: float
    domain: ParamDomain

    @property
    def theta_bottom(self) -> float:
        return -self.psi


@dataclass
class FisherMatrix:
    entries: np.ndarray
    jitter_applied: float = 0.0


def log_unnormalized(theta: np.ndarray, space: SampleSpace, domain: ParamDomain) -> np.ndarray:
    """``sum_{s <= w} theta(s)`` for every state ``w`` in space order."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(domain),):
        raise ValueError(f"theta has shape {theta.shape}, domain has {len(domain)} members")
    grid = np.zeros(space.grid_shape)
    grid.ravel()[domain.flat_grid_index] = theta
    return space.from_grid(downset_sum(grid, space.D))


def log_model(theta: np.ndarray, space: SampleSpace, domain: ParamDomain) -> tuple[np.ndarray, float]:
    """Return ``(log p, psi)``; log-sum-exp keeps this finite for any finite theta."""
    logq = log_unnormalized(theta, space, domain)
    psi = float(logsumexp(logq))
    return logq - psi, psi


def parameters(theta: np.ndarray, space: SampleSpace, domain: ParamDomain) -> ParamVector:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta must be finite")
    _, psi = log_model(theta, space, domain)
    return ParamVector(theta.copy(), psi, domain)


def model_distribution(theta, space: SampleSpace, domain: ParamDomain) -> Distribution:
    if isinstance(theta, ParamVector):
        theta = theta.theta
    logp, _ = log_model(theta, space, domain)
    return Distribution(np.exp(logp))


def expectation_params(p: Distribution, domain: ParamDomain, space: SampleSpace) -> np.ndarray:
    """``eta(s) = sum_{w >= s} p(w)`` for each member of the domain."""
    return eta_grid(p, space).ravel()[domain.flat_grid_index]


def kl_divergence(phat, p) -> float:
    """``sum phat log(phat / p)`` with ``0 log 0 = 0``."""
    a = phat.mass if isinstance(phat, Distribution) else np.asarray(phat, dtype=float)
    b = p.mass if isinstance(p, Distribution) else np.asarray(p, dtype=float)
    if a.shape != b.shape:
        raise ValueError("distributions live on different spaces")
    pos = a > 0
    if np.any(b[pos] <= 0):
        raise ValueError("KL divergence is infinite: p vanishes where phat is positive")
    return float(np.sum(a[pos] * (np.log(a[pos]) - np.log(b[pos]))))


def kl_from_log(phat: Distribution, logp: np.ndarray) -> float:
    """KL against a model given by its log-probabilities (avoids exp/log round trip)."""
    a = phat.mass
    pos = a > 0
    return float(np.sum(a[pos] * (np.log(a[pos]) - logp[pos])))


def fisher_matrix(p: Distribution, eta: np.ndarray, domain: ParamDomain,
                  space: SampleSpace, jitter: float = 0.0) -> FisherMatrix:
    """``g_ij = eta(join(s_i, s_j)) - eta_i eta_j`` plus ``jitter`` on the diagonal.

    The up-set of a join is the intersection of the two up-sets, so the joint
    sum over ``w >= s_i, w >= s_j`` is the expectation parameter at the join.
    """
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    eta = np.asarray(eta, dtype=float)
    full = eta_grid(p, space).ravel()
    jm = domain.masks[:, None] | domain.masks[None, :]
    jb = np.maximum(domain.bins[:, None], domain.bins[None, :])
    G = full[jm * space.M + (jb - 1)] - np.outer(eta, eta)
    G = 0.5 * (G + G.T)
    if jitter:
        G[np.diag_indices_from(G)] += jitter
    return FisherMatrix(G, float(jitter))


def intensity_estimate(p: Distribution, subset, data, space: SampleSpace) -> tuple[np.ndarray, bool]:
    """Per-bin intensity (events/second) of subset ``J`` recovered from ``p``.

    ``data`` is either ``EventData`` or the event count ``N_J`` directly.
    Returns ``(intensity, empty)``; ``empty`` flags ``N_J == 0``.
    """
    mask = mask_of(subset) if not isinstance(subset, (int, np.integer)) else int(subset)
    if mask <= 0 or mask >= 1 << space.D:
        raise ValueError(f"subset {subset!r} is not a nonempty subset of 1..{space.D}")
    n = data.count(mask) if isinstance(data, EventData) else int(data)
    if n == 0:
        return np.zeros(space.M), True
    row = p.mass[space.masks == mask]
    shape = row / row.sum()
    return shape * n * space.M / space.T, False
