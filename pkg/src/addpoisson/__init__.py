"""Additive Poisson process: higher-order intensity estimation from low-order projections."""
from .empirical import (Distribution, EventData, SmootherConfig, empirical_distribution,
                        empirical_eta, extract_joint_events, smoother_value)
from .loglinear import (ParamVector, expectation_params, fisher_matrix, intensity_estimate,
                        kl_divergence, model_distribution)
from .model import AppModel, fit_app
from .optimizer import FitConfig, FitReport, NumericalError, fit, prune_domain
from .poset import (ParamDomain, PosetState, SampleSpace, build_domain, build_space, join, leq,
                    upset_indices)

__version__ = "0.1.0"
