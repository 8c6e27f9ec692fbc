"""KL minimisation (e-projection) of the log-linear model onto an empirical distribution."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .empirical import Distribution, empirical_eta
from .loglinear import (ParamVector, expectation_params, fisher_matrix, kl_from_log,
                        log_model)
from .poset import ParamDomain, PosetState, SampleSpace

log = logging.getLogger(__name__)

NATURAL = "natural_gradient"
PLAIN = "gradient_descent"

JITTER_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
STEP_FLOOR = 1e-8
# Plain gradient descent restarts each line search from twice the last
# accepted step, capped here.
PLAIN_STEP_CAP = 1e6


class NumericalError(RuntimeError):
    """Raised when the Fisher matrix stays singular after jitter escalation."""


@dataclass
class FitConfig:
    method: str = NATURAL
    max_iters: int = 1000
    tol: float = 1e-6
    step: float | None = None
    backtracking: bool = True
    jitter: float = 0.0
    seed: int | None = None
    init: str = "zeros"

    def __post_init__(self):
        if self.method not in (NATURAL, PLAIN):
            raise ValueError(f"unknown method {self.method!r}")
        if self.step is None:
            self.step = 1.0 if self.method == NATURAL else 0.1
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.init not in ("zeros", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


@dataclass
class TraceEntry:
    """State at the start of an iteration and the step then taken (0 if none)."""

    kl: float
    residual: float
    step: float


@dataclass
class FitReport:
    iterations_run: int
    trace: list[TraceEntry]
    pruned: list[PosetState]
    converged: bool
    final_theta: ParamVector
    wall_time: float
    method: str = NATURAL
    jitter_used: float = 0.0
    message: str = ""

    @property
    def final_kl(self) -> float:
        return self.trace[-1].kl

    @property
    def final_residual(self) -> float:
        return self.trace[-1].residual

    @property
    def domain(self) -> ParamDomain:
        return self.final_theta.domain


def prune_domain(domain: ParamDomain, eta_hat: np.ndarray) -> ParamDomain:
    """Drop parameters whose empirical expectation is exactly zero."""
    eta_hat = np.asarray(eta_hat)
    keep = eta_hat > 0
    if not keep.any():
        raise ValueError("every parameter has zero empirical expectation; nothing to fit")
    if keep.all():
        return domain
    return domain.restrict(keep)


def _natural_direction(p: Distribution, eta: np.ndarray, delta: np.ndarray,
                       domain: ParamDomain, space: SampleSpace, jitter: float):
    G = fisher_matrix(p, eta, domain, space, 0.0).entries
    eye = np.eye(len(G))
    ladder = (jitter,) + tuple(j for j in JITTER_LADDER if j > jitter)
    for j in ladder:
        try:
            factor = cho_factor(G + j * eye if j else G, lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            continue
        d = cho_solve(factor, delta)
        if np.all(np.isfinite(d)):
            return d, j
    raise NumericalError("Fisher information matrix is singular even with jitter 1e-2")


def fit(phat: Distribution, domain: ParamDomain, space: SampleSpace,
        cfg: FitConfig | None = None) -> FitReport:
    cfg = cfg or FitConfig()
    t0 = time.perf_counter()
    eta_hat_full = empirical_eta(phat, domain, space)
    active = prune_domain(domain, eta_hat_full)
    eta_hat = eta_hat_full[eta_hat_full > 0] if len(active) < len(domain) else eta_hat_full

    if cfg.init == "random":
        theta = np.random.default_rng(cfg.seed).normal(size=len(active))
    else:
        theta = np.zeros(len(active))

    logp, psi = log_model(theta, space, active)
    kl = kl_from_log(phat, logp)
    trace: list[TraceEntry] = []
    converged = False
    message = "max_iters reached"
    alpha_prev = cfg.step
    jitter_used = cfg.jitter

    for _ in range(cfg.max_iters):
        p = Distribution(np.exp(logp))
        eta = expectation_params(p, active, space)
        delta = eta - eta_hat
        residual = float(np.max(np.abs(delta)))
        if residual < cfg.tol:
            trace.append(TraceEntry(kl, residual, 0.0))
            converged = True
            message = "converged"
            break

        if cfg.method == NATURAL:
            direction, j = _natural_direction(p, eta, delta, active, space, cfg.jitter)
            jitter_used = max(jitter_used, j)
            alpha = cfg.step
        else:
            direction = delta
            alpha = min(2 * alpha_prev, PLAIN_STEP_CAP) if cfg.backtracking else cfg.step

        while True:
            cand = theta - alpha * direction
            logp_c, psi_c = log_model(cand, space, active)
            kl_c = kl_from_log(phat, logp_c)
            if not cfg.backtracking or kl_c <= kl:
                break
            alpha *= 0.5
            if alpha < STEP_FLOOR:
                alpha = 0.0
                break

        if alpha == 0.0:
            trace.append(TraceEntry(kl, residual, 0.0))
            message = "line search stalled"
            break
        trace.append(TraceEntry(kl, residual, alpha))
        alpha_prev = alpha
        theta, logp, psi, kl = cand, logp_c, psi_c, kl_c
    else:
        p = Distribution(np.exp(logp))
        residual = float(np.max(np.abs(expectation_params(p, active, space) - eta_hat)))
        converged = residual < cfg.tol
        if converged:
            message = "converged"
        trace.append(TraceEntry(kl, residual, 0.0))

    if not converged:
        log.info("fit did not converge (%s), residual %.3g", message, trace[-1].residual)
    return FitReport(
        iterations_run=sum(1 for e in trace if e.step > 0),
        trace=trace,
        pruned=list(active.pruned),
        converged=converged,
        final_theta=ParamVector(theta, psi, active),
        wall_time=time.perf_counter() - t0,
        method=cfg.method,
        jitter_used=jitter_used,
        message=message,
    )
