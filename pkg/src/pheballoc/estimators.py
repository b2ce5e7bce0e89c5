"""Scikit-learn style wrappers.

``UtilityBuilder`` turns routes into utility functions; the allocators take
a list of utilities in ``fit`` and expose the allocation through
``predict``. Hyper-parameters live in ``__init__`` so ``get_params`` /
``set_params`` / ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .aimd import AimdConfig, comms_bits
from .baselines import AdmmConfig, central_solve
from .models import EnergyModel, synthetic_emission_model
from .problem import AllocationProblem
from .solvers import solve
from .utility import build_utility, section_values
from .validation import check_e_av, check_routes, check_utilities


class UtilityBuilder(TransformerMixin, BaseEstimator):
    """Routes -> list of :class:`~pheballoc.utility.UtilityFunction`.

    Stateless: ``fit`` only validates the models.
    """

    def __init__(self, energy_model=None, emission_model=None, objective_mode="per_km_rate"):
        self.energy_model = energy_model
        self.emission_model = emission_model
        self.objective_mode = objective_mode

    def fit(self, X=None, y=None):
        self.energy_model_ = self.energy_model if self.energy_model is not None else EnergyModel()
        self.emission_model_ = (
            self.emission_model if self.emission_model is not None else synthetic_emission_model()
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "energy_model_")
        return [
            build_utility(section_values(r, self.energy_model_, self.emission_model_, self.objective_mode))
            for r in check_routes(X)
        ]


class _Allocator(BaseEstimator):
    """Shared fit/predict/score logic; subclasses set ``solver_name`` and ``_config``."""

    solver_name = ""

    def _config(self):
        return None

    def fit(self, X, y=None):
        utilities = check_utilities(X)
        self.problem_ = AllocationProblem(utilities, check_e_av(self.e_av))
        self.oracle_ = central_solve(self.problem_)
        self.trace_ = solve(self.problem_, self.solver_name, self._config(), self.oracle_)
        self.allocation_ = self.trace_.final.d.copy()
        self.savings_ = self.trace_.final.savings
        self.bus_ids_ = self.problem_.bus_ids
        self.n_features_in_ = self.problem_.n
        return self

    def predict(self, X=None):
        """Allocated kWh per bus, in the order of the fitted utilities."""
        check_is_fitted(self, "allocation_")
        if X is not None and [u.bus_id for u in check_utilities(X)] != self.bus_ids_:
            raise ValueError("predict received a different fleet than fit")
        return self.allocation_.copy()

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

    def score(self, X=None, y=None):
        """Savings as a fraction of the optimal savings (1.0 is optimal)."""
        check_is_fitted(self, "allocation_")
        best = self.oracle_.savings
        return 1.0 if best == 0 else self.savings_ / best


class OracleAllocator(_Allocator):
    """Exact water-filling allocation."""

    solver_name = "oracle"

    def __init__(self, e_av=0.0):
        self.e_av = e_av


class AdmmAllocator(_Allocator):
    """Sharing ADMM allocation; ``n_iter_`` and ``bits_`` after fitting."""

    solver_name = "admm"

    def __init__(self, e_av=0.0, rho=1.0, abs_tol=1e-6, rel_tol=1e-6, max_iter=50_000):
        self.e_av = e_av
        self.rho = rho
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.max_iter = max_iter

    def _config(self):
        return AdmmConfig(rho=self.rho, abs_tol=self.abs_tol, rel_tol=self.rel_tol, max_iter=self.max_iter)

    def fit(self, X, y=None):
        super().fit(X, y)
        self.n_iter_ = self.trace_.iterations
        self.bits_ = self.trace_.n_broadcasts * self.trace_.bits_per_broadcast
        return self


class AimdAllocator(_Allocator):
    """Stochastic AIMD allocation; ``n_congestions_`` and ``bits_`` after fitting."""

    solver_name = "aimd"

    def __init__(self, e_av=0.0, alpha=None, beta=0.5, gamma_gain=None, k_max=200_000, seed=0,
                 mask="identity", record_every=1000):
        self.e_av = e_av
        self.alpha = alpha
        self.beta = beta
        self.gamma_gain = gamma_gain
        self.k_max = k_max
        self.seed = seed
        self.mask = mask
        self.record_every = record_every

    def _config(self):
        return AimdConfig(alpha=self.alpha, beta=self.beta, gamma_gain=self.gamma_gain, k_max=self.k_max,
                          seed=self.seed, mask=self.mask, record_every=self.record_every)

    def fit(self, X, y=None):
        super().fit(X, y)
        self.n_congestions_ = self.trace_.n_congestions
        self.bits_ = comms_bits(self.trace_)[0]
        self.d_bar_ = np.asarray(self.trace_.raw_final).copy()
        return self
