"""Fitted additive Poisson process model and its on-disk representation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .empirical import Distribution, EventData, SmootherConfig, empirical_distribution
from .loglinear import intensity_estimate, log_model
from .optimizer import FitConfig, FitReport, fit
from .poset import (ParamDomain, PosetState, SampleSpace, build_domain, build_space, mask_of,
                    members_of)

SCHEMA_VERSION = 1


def subset_label(mask: int) -> str:
    return ",".join(str(j) for j in members_of(mask))


def parse_subset(text: str) -> tuple[int, ...]:
    ids = tuple(sorted(int(x) for x in text.replace("[", "").replace("]", "").split(",") if x.strip()))
    if not ids:
        raise ValueError(f"empty subset {text!r}")
    return ids


@dataclass
class AppModel:
    """A fitted model: parameters on a domain plus what is needed to recover intensities."""

    space: SampleSpace
    domain: ParamDomain
    theta: np.ndarray
    psi: float
    bandwidths: dict[int, float]
    window: float
    counts: dict[int, int]
    method: str = "natural_gradient"
    iterations: int = 0
    final_residual: float = float("nan")
    converged: bool = True
    k: int = field(init=False)

    def __post_init__(self):
        self.k = self.domain.k

    def log_prob(self) -> np.ndarray:
        logp, _ = log_model(self.theta, self.space, self.domain)
        return logp

    def distribution(self) -> Distribution:
        return Distribution(np.exp(self.log_prob()))

    def intensity(self, subset, counts=None) -> tuple[np.ndarray, bool]:
        mask = subset if isinstance(subset, (int, np.integer)) else mask_of(subset)
        mask = int(mask)
        if not 0 < mask < 1 << self.space.D:
            raise ValueError(f"subset {subset!r} not within 1..{self.space.D}")
        counts = self.counts if counts is None else counts
        n = counts.count(mask) if isinstance(counts, EventData) else counts.get(mask, 0)
        return intensity_estimate(self.distribution(), mask, n, self.space)


def fit_app(data: EventData, k: int, M: int, h=None, cfg: FitConfig | None = None):
    """Build the space and empirical distribution, then fit an order-``k`` model.

    ``h`` is a scalar bandwidth, a ``SmootherConfig``, or ``None`` for Scott's rule.
    Returns ``(model, report, phat)``.
    """
    space = build_space(data.D, M, data.T)
    if isinstance(h, SmootherConfig):
        smoother = h
    elif h is None:
        smoother = SmootherConfig.scott(data, M)
    else:
        smoother = SmootherConfig.uniform(h, data.D, M, data.T)
    phat = empirical_distribution(data, smoother, space)
    domain = build_domain(space, k)
    report: FitReport = fit(phat, domain, space, cfg)
    counts = {m: data.count(m) for m in range(1, 1 << data.D)}
    model = AppModel(space, report.domain, report.final_theta.theta, report.final_theta.psi,
                     dict(smoother.bandwidth), data.window, counts, report.method,
                     report.iterations_run, report.final_residual, report.converged)
    return model, report, phat


# ---------------------------------------------------------------- ModelFile

def _payload(model: AppModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "D": model.space.D,
        "M": model.space.M,
        "T": model.space.T,
        "k": model.k,
        "window": model.window,
        "bandwidths": {subset_label(m): h for m, h in sorted(model.bandwidths.items())},
        "counts": {subset_label(m): n for m, n in sorted(model.counts.items())},
        "pruned": [s.key for s in model.domain.pruned],
        "psi": model.psi,
        "theta": {s.key: float(v) for s, v in zip(model.domain.members, model.theta)},
        "fit": {
            "method": model.method,
            "iterations": model.iterations,
            "final_residual": model.final_residual,
            "converged": model.converged,
        },
    }


def dumps(model: AppModel, fmt: str = "text") -> str:
    """Serialize a model. Floats are written with ``repr`` so they round-trip exactly."""
    data = _payload(model)
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown model format {fmt!r}")
    lines = ["# additive poisson process model"]
    for key in ("schema_version", "D", "M", "T", "k", "window", "psi"):
        lines.append(f"{key} {data[key]!r}")
    fitmeta = data["fit"]
    lines.append(f"method {fitmeta['method']}")
    lines.append(f"iterations {fitmeta['iterations']}")
    lines.append(f"final_residual {fitmeta['final_residual']!r}")
    lines.append(f"converged {int(fitmeta['converged'])}")
    for label, h in data["bandwidths"].items():
        lines.append(f"bandwidth {label} {h!r}")
    for label, n in data["counts"].items():
        lines.append(f"count {label} {n}")
    for key in data["pruned"]:
        lines.append(f"pruned {key}")
    for key, v in data["theta"].items():
        lines.append(f"theta {key} {v!r}")
    return "\n".join(lines) + "\n"


def _parse_text(text: str) -> dict:
    data = {"bandwidths": {}, "counts": {}, "pruned": [], "theta": {}, "fit": {}}
    scalars = {"schema_version": int, "D": int, "M": int, "T": float, "k": int,
               "window": float, "psi": float}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, *rest = line.split()
        if head in scalars:
            data[head] = scalars[head](rest[0])
        elif head == "method":
            data["fit"]["method"] = rest[0]
        elif head == "iterations":
            data["fit"]["iterations"] = int(rest[0])
        elif head == "final_residual":
            data["fit"]["final_residual"] = float(rest[0])
        elif head == "converged":
            data["fit"]["converged"] = bool(int(rest[0]))
        elif head == "bandwidth":
            data["bandwidths"][rest[0]] = float(rest[1])
        elif head == "count":
            data["counts"][rest[0]] = int(rest[1])
        elif head == "pruned":
            data["pruned"].append(rest[0])
        elif head == "theta":
            data["theta"][rest[0]] = float(rest[1])
        else:
            raise ValueError(f"unrecognised model file line: {raw!r}")
    return data


def loads(text: str) -> AppModel:
    data = json.loads(text) if text.lstrip().startswith("{") else _parse_text(text)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {data.get('schema_version')!r}")
    space = build_space(data["D"], data["M"], data["T"])
    full = build_domain(space, data["k"])
    pruned = {PosetState.from_key(key) for key in data["pruned"]}
    keep = np.array([s not in pruned for s in full.members])
    domain = full.restrict(keep) if not keep.all() else full
    theta = np.array([data["theta"][s.key] for s in domain.members], dtype=float)
    fitmeta = data.get("fit", {})
    return AppModel(
        space, domain, theta, float(data["psi"]),
        {mask_of(parse_subset(l)): float(h) for l, h in data["bandwidths"].items()},
        float(data["window"]),
        {mask_of(parse_subset(l)): int(n) for l, n in data["counts"].items()},
        fitmeta.get("method", "natural_gradient"), int(fitmeta.get("iterations", 0)),
        float(fitmeta.get("final_residual", float("nan"))), bool(fitmeta.get("converged", True)),
    )


def save(model: AppModel, path, fmt: str = "text") -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(dumps(model, fmt))


def load(path) -> AppModel:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
