"""Input checks shared by the estimator facade."""

import numpy as np
from sklearn.utils import check_array

from .fespace import VectorField
from .problems import ProblemSpec, make_problem


def check_points(X) -> np.ndarray:
    """(n, 2) finite float array of points in the closed square [-1, 1]^2."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"expected points of shape (n, 2), got {X.shape}")
    if np.any(np.abs(X) > 1.0 + 1e-12):
        raise ValueError("points must lie in [-1, 1]^2")
    return X


def check_problem(problem, quad_tol=1e-12) -> ProblemSpec:
    if isinstance(problem, str):
        return make_problem(problem, quad_tol)
    if not isinstance(problem, ProblemSpec):
        raise TypeError(f"expected an experiment name or ProblemSpec, got {type(problem).__name__}")
    return problem


def check_field(field) -> VectorField:
    if not isinstance(field, VectorField):
        raise TypeError(f"expected a VectorField, got {type(field).__name__}")
    return field


def check_schedule(p_schedule) -> tuple:
    sched = tuple(float(p) for p in np.atleast_1d(p_schedule))
    return tuple(int(p) if p.is_integer() else p for p in sched)
