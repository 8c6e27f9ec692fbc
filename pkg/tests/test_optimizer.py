import numpy as np
import pytest
from scipy.optimize import minimize

import oracles
from conftest import random_distribution
from addpoisson.empirical import (Distribution, SmootherConfig, empirical_distribution, empirical_eta,
                                  extract_joint_events)
from addpoisson.loglinear import expectation_params, kl_divergence, model_distribution
from addpoisson.optimizer import NATURAL, PLAIN, FitConfig, fit, prune_domain
from addpoisson.poset import PosetState, build_domain, build_space


def generic_optimum(phat, D, M, k):
    """Minimise KL over theta with L-BFGS on the brute-force model (independent path)."""
    dom = oracles.domain(D, M, k)
    eta_hat = oracles.eta(phat, dom, D, M)

    def f(theta):
        p = oracles.model_p(theta, D, M, k)
        return oracles.kl(phat, p), oracles.eta(p, dom, D, M) - eta_hat

    res = minimize(f, np.zeros(len(dom)), jac=True, method="L-BFGS-B",
                   options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 5000})
    return res.fun


def correlated_phat(D, M, rng):
    """Random positive distribution with extra mass on the higher-order states."""
    sp = build_space(D, M, 1.0)
    m = rng.random(len(sp)) + 0.05
    m[[len(s.subset) > 1 for s in sp.states]] *= 3.0
    return sp, Distribution(m / m.sum())


class TestPrune:
    def test_noop(self):
        dom = build_domain(build_space(2, 2, 1.0), 2)
        assert prune_domain(dom, np.full(len(dom), 0.2)) is dom

    def test_single_removal(self):
        dom = build_domain(build_space(2, 2, 1.0), 2)
        eta = np.full(len(dom), 0.2)
        eta[3] = 0.0
        out = prune_domain(dom, eta)
        assert len(out) == len(dom) - 1 and out.pruned == (dom.members[3],)

    def test_all_pruned_fails(self):
        dom = build_domain(build_space(1, 2, 1.0), 1)
        with pytest.raises(ValueError):
            prune_domain(dom, np.zeros(len(dom)))

    def test_no_pruning_on_simulated_data(self, rng):
        T, M = 10.0, 20
        data = extract_joint_events([rng.uniform(0, T, 30), rng.uniform(0, T, 30)], 0.2, T=T)
        sp = build_space(2, M, T)
        ph = empirical_distribution(data, SmootherConfig.uniform(0.5, 2, M, T), sp)
        dom = build_domain(sp, 2)
        assert prune_domain(dom, empirical_eta(ph, dom, sp)) is dom
        assert fit(ph, dom, sp).pruned == []

    def test_fit_with_pruned_parameters(self):
        sp = build_space(1, 3, 1.0)
        ph = Distribution(np.array([0.5, 0.5, 0.0, 0.0]))
        rep = fit(ph, build_domain(sp, 1), sp)
        assert [s.key for s in rep.pruned] == ["1:2", "1:3"]
        assert rep.converged


class TestFitConfig:
    def test_defaults(self):
        assert FitConfig().step == 1.0
        assert FitConfig(method=PLAIN).step == 0.1
        assert FitConfig().tol == 1e-6 and FitConfig().max_iters == 1000

    @pytest.mark.parametrize("kw", [{"tol": 0}, {"max_iters": 0}, {"step": -1.0},
                                    {"method": "newton"}, {"init": "ones"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FitConfig(**kw)


class TestFit:
    def test_exact_recovery_full_model(self, rng):
        sp = build_space(2, 6, 1.0)
        ph = random_distribution(len(sp), rng)
        rep = fit(ph, build_domain(sp, 2), sp, FitConfig(tol=1e-10))
        p = model_distribution(rep.final_theta, sp, rep.domain)
        assert rep.converged and kl_divergence(ph, p) < 1e-10

    def test_uniform_from_random_init(self):
        sp = build_space(2, 3, 1.0)
        ph = Distribution(np.full(len(sp), 1 / len(sp)))
        rep = fit(ph, build_domain(sp, 1), sp, FitConfig(init="random", seed=3))
        p = model_distribution(rep.final_theta, sp, rep.domain)
        np.testing.assert_allclose(p.mass, 1 / len(sp), atol=1e-7)
        assert np.max(np.abs(rep.final_theta.theta)) < 1e-5

    def test_matches_generic_minimiser(self, rng):
        sp, ph = correlated_phat(2, 2, rng)
        rep = fit(ph, build_domain(sp, 1), sp)
        assert abs(rep.final_kl - generic_optimum(ph.mass, 2, 2, 1)) < 1e-5

    @pytest.mark.parametrize("method", [NATURAL, PLAIN])
    def test_descent_and_fixed_point(self, rng, method):
        sp, ph = correlated_phat(3, 3, rng)
        rep = fit(ph, build_domain(sp, 2), sp, FitConfig(method=method, max_iters=20000))
        kls = [e.kl for e in rep.trace]
        assert all(b <= a for a, b in zip(kls, kls[1:]))
        assert np.all(np.isfinite(kls))
        assert rep.converged and rep.final_residual < 1e-6
        p = model_distribution(rep.final_theta, sp, rep.domain)
        eta = expectation_params(p, rep.domain, sp)
        assert np.max(np.abs(eta - empirical_eta(ph, rep.domain, sp))) < 1e-6

    def test_optimizer_equivalence_and_init_independence(self, rng):
        sp, ph = correlated_phat(2, 4, rng)
        dom = build_domain(sp, 1)
        nat = fit(ph, dom, sp)
        plain = fit(ph, dom, sp, FitConfig(method=PLAIN, max_iters=20000))
        rand = fit(ph, dom, sp, FitConfig(init="random", seed=11))
        assert abs(nat.final_kl - plain.final_kl) < 1e-5
        assert abs(nat.final_kl - rand.final_kl) < 1e-5

    def test_hierarchy(self, rng):
        sp, ph = correlated_phat(3, 3, rng)
        kls = [fit(ph, build_domain(sp, k), sp, FitConfig(tol=1e-9)).final_kl for k in (1, 2, 3)]
        assert kls[0] >= kls[1] >= kls[2] - 1e-9
        assert kls[2] < 1e-10

    def test_nonconvergence_is_reported(self, rng):
        sp, ph = correlated_phat(2, 3, rng)
        rep = fit(ph, build_domain(sp, 2), sp, FitConfig(method=PLAIN, max_iters=3))
        assert not rep.converged and rep.iterations_run == 3
        assert rep.message == "max_iters reached"

    def test_without_backtracking_runs_fixed_steps(self, rng):
        sp, ph = correlated_phat(2, 3, rng)
        rep = fit(ph, build_domain(sp, 1), sp, FitConfig(backtracking=False))
        assert rep.converged
        assert all(e.step in (1.0, 0.0) for e in rep.trace)

    def test_report_fields(self, rng):
        sp, ph = correlated_phat(2, 2, rng)
        rep = fit(ph, build_domain(sp, 2), sp)
        assert rep.iterations_run == len(rep.trace) - 1
        assert rep.wall_time >= 0 and rep.method == NATURAL
        assert rep.final_theta.domain is rep.domain
        assert isinstance(rep.domain.members[0], PosetState)
