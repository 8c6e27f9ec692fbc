"""Ground-truth intensities and event samplers."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats

from .empirical import EventData
from .poset import mask_of, members_of

CONSTANT = "constant"
SINUSOIDAL = "sinusoidal"
MIXTURE = "gaussian_mixture"

_PROBE_POINTS = 4097
_MAX_COV_RETRIES = 100


@dataclass
class IntensitySpec:
    """Intensity description.

    ``params`` holds ``level`` for constant, ``amplitude``/``frequency``
    (angular, rad/s) for sinusoidal ``(A/2)(1 + sin(w t))``, or
    ``weights``/``means``/``covs``/``total_count`` for a Gaussian mixture.
    """

    kind: str
    params: dict
    T: float
    D: int = 1

    def __post_init__(self):
        if self.kind not in (CONSTANT, SINUSOIDAL, MIXTURE):
            raise ValueError(f"unknown intensity kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError("duration must be positive")
        if self.kind == CONSTANT and self.params["level"] < 0:
            raise ValueError("constant level must be non-negative")
        if self.kind == SINUSOIDAL and self.params["amplitude"] < 0:
            raise ValueError("amplitude must be non-negative")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(t, float(self.params["level"]))
        if self.kind == SINUSOIDAL:
            A, w = self.params["amplitude"], self.params["frequency"]
            return 0.5 * A * (1.0 + np.sin(w * t))
        raise TypeError("mixture intensities are evaluated through GroundTruth.binned")

    @property
    def upper_bound(self) -> float:
        if self.kind == CONSTANT:
            return float(self.params["level"])
        if self.kind == SINUSOIDAL:
            return float(self.params["amplitude"])
        raise TypeError("no scalar bound for mixture intensities")

    def binned(self, M: int) -> np.ndarray:
        """Midpoint-rule per-bin intensity."""
        return self((np.arange(1, M + 1) - 0.5) * self.T / M)

    def expected_count(self, n_grid: int = 200_001) -> float:
        t = np.linspace(0.0, self.T, n_grid)
        return float(np.trapezoid(self(t), t))


def sinusoidal(amplitude: float, frequency: float, T: float) -> IntensitySpec:
    return IntensitySpec(SINUSOIDAL, {"amplitude": float(amplitude),
                                      "frequency": float(frequency)}, T)


def constant(level: float, T: float) -> IntensitySpec:
    return IntensitySpec(CONSTANT, {"level": float(level)}, T)


def _vectorized(lam, t: np.ndarray) -> np.ndarray:
    out = np.asarray(lam(t), dtype=float)
    if out.shape != t.shape:
        out = np.array([float(lam(x)) for x in t])
    return out


def thinning_sample(lam, lambda_bar: float, T: float, seed=None) -> np.ndarray:
    """Sample an inhomogeneous Poisson process on ``[0, T]`` by thinning.

    Candidates come from a homogeneous process of rate ``lambda_bar`` and each
    is kept with probability ``lam(s) / lambda_bar``.
    """
    if not lambda_bar > 0:
        raise ValueError("lambda_bar must be positive")
    if not T > 0:
        raise ValueError("T must be positive")
    probe = np.linspace(0.0, T, _PROBE_POINTS)
    if np.any(_vectorized(lam, probe) > lambda_bar * (1 + 1e-12)):
        raise ValueError("lambda_bar is not an upper bound of the intensity on [0, T]")
    rng = np.random.default_rng(seed)
    accepted = []
    s = 0.0
    batch = int(lambda_bar * T + 5 * np.sqrt(lambda_bar * T) + 16)
    while s <= T:
        gaps = -np.log(1.0 - rng.random(batch)) / lambda_bar
        cand = s + np.cumsum(gaps)
        u = rng.random(batch)
        s = cand[-1]
        cand_in = cand <= T
        keep = cand_in & (u * lambda_bar < _vectorized(lam, cand))
        accepted.append(cand[keep])
    return np.concatenate(accepted) if accepted else np.empty(0)


def bernoulli_toy(p: float, step: float, T: float, seed=None) -> np.ndarray:
    """One candidate every ``step`` seconds at ``step, 2 step, ...``, kept with probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    n = int(round(T / step))
    times = step * np.arange(1, n + 1)
    keep = np.random.default_rng(seed).random(n) < p
    return times[keep]


@dataclass
class GaussianMixture:
    """Gaussian mixture restricted to the box ``[0, T]^D`` and renormalised."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    T: float

    @property
    def D(self) -> int:
        return self.means.shape[1]

    def _box_mass(self, k: int, idx) -> float:
        idx = list(idx)
        if not idx:
            return 1.0
        mu = self.means[k, idx]
        cov = self.covs[k][np.ix_(idx, idx)]
        if len(idx) == 1:
            sd = np.sqrt(cov[0, 0])
            return float(stats.norm.cdf(self.T, mu[0], sd) - stats.norm.cdf(0.0, mu[0], sd))
        dist = stats.multivariate_normal(mu, cov)
        return float(dist.cdf(np.full(len(idx), self.T), lower_limit=np.zeros(len(idx))))

    @property
    def box_mass(self) -> float:
        return float(sum(w * self._box_mass(k, range(self.D)) for k, w in enumerate(self.weights)))

    def diagonal_density(self, subset, t) -> np.ndarray:
        """Marginal density of coordinates ``J`` at ``(t, ..., t)``, truncated to the box."""
        J = [j - 1 for j in subset]
        rest = [i for i in range(self.D) if i not in J]
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for k, w in enumerate(self.weights):
            mu, cov = self.means[k], self.covs[k]
            cJJ = cov[np.ix_(J, J)]
            pts = np.repeat(t[:, None], len(J), axis=1)
            dens = stats.multivariate_normal(mu[J], cJJ).pdf(pts).reshape(t.shape)
            if rest:
                gain = np.linalg.solve(cJJ, cov[np.ix_(J, rest)]).T
                c_cov = cov[np.ix_(rest, rest)] - gain @ cov[np.ix_(J, rest)]
                c_means = mu[rest][None, :] + (pts - mu[J][None, :]) @ gain.T
                if len(rest) == 1:
                    sd = np.sqrt(c_cov[0, 0])
                    m = c_means[:, 0]
                    cond = stats.norm.cdf(self.T, m, sd) - stats.norm.cdf(0.0, m, sd)
                else:
                    lo, hi = np.zeros(len(rest)), np.full(len(rest), self.T)
                    cond = np.array([stats.multivariate_normal(cm, c_cov).cdf(hi, lower_limit=lo)
                                     for cm in c_means])
                dens = dens * cond
            out += w * dens
        return out / self.box_mass

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.covs)
        out = np.empty((0, self.D))
        while len(out) < n:
            need = n - len(out)
            batch = max(64, int(need * 1.5))
            comp = rng.choice(len(self.weights), size=batch, p=self.weights)
            z = rng.standard_normal((batch, self.D))
            x = self.means[comp] + np.einsum("nij,nj->ni", chol[comp], z)
            inside = np.all((x >= 0) & (x <= self.T), axis=1)
            out = np.vstack([out, x[inside]])
        return out[:n]


def coincidence_volume(n: int, delta: float) -> float:
    """Volume of the deviation set ``max - min <= delta`` for ``n`` coordinates at fixed mean."""
    return n * delta ** (n - 1) if n > 1 else 1.0


@dataclass
class GroundTruth:
    spec: IntensitySpec
    sample: EventData
    observations: np.ndarray = field(repr=False)
    mixture: GaussianMixture | None = field(default=None, repr=False)
    truth: dict = field(default_factory=dict, repr=False)

    def binned(self, subset, M: int, delta: float | None = None) -> np.ndarray:
        """Per-bin true intensity of subset ``J`` (midpoint rule).

        Singletons: count times the truncated marginal density. Larger subsets:
        intensity of observations whose ``J`` coordinates span at most
        ``delta``, to first order ``N * |J| delta^(|J|-1) * f_J(t, ..., t)``.
        """
        subset = members_of(subset) if isinstance(subset, (int, np.integer)) else tuple(sorted(subset))
        delta = self.sample.window if delta is None else float(delta)
        key = (subset, M, delta)
        if key not in self.truth:
            centers = (np.arange(1, M + 1) - 0.5) * self.spec.T / M
            n = self.spec.params["total_count"]
            dens = self.mixture.diagonal_density(subset, centers)
            self.truth[key] = n * coincidence_volume(len(subset), delta) * dens
        return self.truth[key]


def paired_joint_events(observations: np.ndarray, delta: float, max_order: int | None = None) -> dict:
    """Joint events from known observation vectors: rows whose ``J`` coordinates span <= delta."""
    D = observations.shape[1]
    max_order = D if max_order is None else max_order
    joint = {}
    for size in range(2, max_order + 1):
        for combo in combinations(range(1, D + 1), size):
            cols = observations[:, [j - 1 for j in combo]]
            ok = cols.max(axis=1) - cols.min(axis=1) <= delta
            sel = cols[ok]
            joint[mask_of(combo)] = sel[np.argsort(sel.mean(axis=1), kind="stable")]
    return joint


def mixture_generator(D: int, components: int, total_count: int, T: float, seed=None,
                      wishart_df: float | None = None, cov_scale: float | None = None,
                      delta: float = 0.1, pairing: str = "observations") -> GroundTruth:
    """Draw a random truncated Gaussian mixture on ``[0, T]^D`` and sample from it.

    Covariances are inverse-Wishart with ``wishart_df`` degrees of freedom
    (default ``D + 4``) and a scale chosen so the mean covariance is
    ``(cov_scale)^2 I`` (default ``cov_scale = T / 20``).

    ``pairing`` selects how joint events are derived: ``"streams"`` runs greedy
    coincidence matching on the projected streams, ``"observations"`` keeps
    the coordinates of each drawn point together.
    """
    if components < 1:
        raise ValueError("need at least one mixture component")
    if total_count < 0:
        raise ValueError("total_count must be non-negative")
    if pairing not in ("streams", "observations"):
        raise ValueError(f"unknown pairing {pairing!r}")
    rng = np.random.default_rng(seed)
    df = D + 4 if wishart_df is None else float(wishart_df)
    if df <= D - 1:
        raise ValueError(f"wishart_df must exceed D - 1 = {D - 1}")
    width = T / 20 if cov_scale is None else float(cov_scale)
    mean_factor = df - D - 1 if df - D - 1 > 0 else 1.0
    scale = np.eye(D) * width ** 2 * mean_factor
    weights = rng.dirichlet(np.ones(components))
    means = rng.uniform(0.0, T, size=(components, D))
    covs = np.empty((components, D, D))
    iw = stats.invwishart(df=df, scale=scale)
    for k in range(components):
        for _ in range(_MAX_COV_RETRIES):
            c = np.atleast_2d(iw.rvs(random_state=rng))
            c = 0.5 * (c + c.T)
            try:
                np.linalg.cholesky(c)
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise RuntimeError("could not draw a positive-definite covariance")
        covs[k] = c
    mixture = GaussianMixture(weights, means, covs, float(T))
    return sample_mixture(mixture, total_count, rng, delta=delta, pairing=pairing)


def sample_mixture(mixture: GaussianMixture, total_count: int, seed=None, delta: float = 0.1,
                   pairing: str = "streams") -> GroundTruth:
    """Draw ``total_count`` points from a fixed mixture and project them onto streams."""
    from .empirical import extract_joint_events

    rng = np.random.default_rng(seed)
    D, T = mixture.D, mixture.T
    obs = mixture.sample(int(total_count), rng)
    streams = [np.sort(obs[:, j]) for j in range(D)]
    if pairing == "observations":
        data = EventData(D, T, streams, paired_joint_events(obs, delta), float(delta))
    elif pairing == "streams":
        data = extract_joint_events(streams, delta, T=T)
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    spec = IntensitySpec(MIXTURE, {"weights": mixture.weights, "means": mixture.means,
                                   "covs": mixture.covs, "total_count": int(total_count)}, T, D)
    return GroundTruth(spec, data, obs, mixture)
