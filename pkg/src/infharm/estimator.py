"""Estimator-style facade over the solver and the phase analysis."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .analysis import angle_field, rank_classify
from .fespace import evaluate
from .mesh import make_structured_mesh
from .solver import DEFAULT_SCHEDULE, SolverConfig, continue_in_p
from .validation import check_field, check_points, check_problem, check_schedule


class PLaplaceSolver(BaseEstimator):
    """Continuation in p on the structured mesh of (-1, 1)^2.

    ``fit(problem)`` takes an experiment name or a ProblemSpec and stores
    ``mesh_``, ``field_`` (solution at the last p) and ``state_``.
    ``predict(X)`` evaluates the solution at points of shape (n, 2).
    """

    def __init__(self, mesh_m=64, p_schedule=DEFAULT_SCHEDULE, newton_tol=1e-8,
                 newton_max_iter=50, linear_solver="direct", epsilon=1e-10,
                 projection="boundary", quad_tol=1e-12):
        self.mesh_m = mesh_m
        self.p_schedule = p_schedule
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter
        self.linear_solver = linear_solver
        self.epsilon = epsilon
        self.projection = projection
        self.quad_tol = quad_tol

    def _config(self):
        return SolverConfig(
            p_schedule=check_schedule(self.p_schedule), newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter, linear_solver=self.linear_solver,
            epsilon=self.epsilon, projection=self.projection,
        )

    def fit(self, problem, y=None):
        self.problem_ = check_problem(problem, self.quad_tol)
        self.mesh_ = make_structured_mesh(self.mesh_m)
        self.state_ = continue_in_p(self.problem_, self.mesh_, self._config())
        self.field_ = self.state_.solution
        self.p_ = self.state_.p_current
        return self

    def predict(self, X):
        check_is_fitted(self, "field_")
        return evaluate(self.field_, check_points(X))


class PhaseAnalyzer(TransformerMixin, BaseEstimator):
    """Per-element diagnostics of a VectorField.

    ``transform(field)`` returns an (E, 5) array with columns
    |DU|, sigma_1, sigma_2, rank and the column angle.
    """

    columns = ("norm", "sigma1", "sigma2", "rank", "angle")

    def __init__(self, tau=0.05):
        self.tau = tau

    def fit(self, field, y=None):
        check_field(field)
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        self.n_components_ = field.n_components
        return self

    def transform(self, field):
        check_is_fitted(self, "n_components_")
        field = check_field(field)
        phase = rank_classify(field, self.tau, levels=())
        s = phase.singular_values
        return np.column_stack([phase.norm, s[:, 0], s[:, 1], phase.rank, angle_field(field)])
