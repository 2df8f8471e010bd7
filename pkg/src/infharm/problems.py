"""Boundary data of the five experiments and the explicit infinity-harmonic map.

The explicit map is u(x, y) = int_y^x (cos K(t), sin K(t)) dt for a
parametrisation K with sup|K| < pi/2. It has |Du| = sqrt(2) everywhere and
det Du = sin(K(x) - K(y)).
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import adaptive_gauss

EXPERIMENTS = ("mixed2d", "mixed3d", "rank1", "triple", "box", "custom")


def K_triple(t):
    """Parametrisation with K = 0 on (-inf, 0] and K' > 0 after."""
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, 1.0 - 1.0 / (1.0 + t * t), 0.0)


def K_triple_deriv(t):
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, 2.0 * t / (1.0 + t * t) ** 2, 0.0)


def K_box(t, smooth=False):
    """Parametrisation vanishing on [-1, 1], odd, increasing outside.

    By default the outer branches carry an extra ``+1`` in the denominator,
    so K jumps from 0 to +-1/2 at |t| = 1. ``smooth=True`` drops it, which
    makes K continuous.
    """
    t = np.asarray(t, dtype=float)
    c = 0.0 if smooth else 1.0
    right = 1.0 - 1.0 / (1.0 + (t - 1.0) ** 2 + c)
    left = 1.0 / (1.0 + (t + 1.0) ** 2 + c) - 1.0
    return np.where(t > 1, right, np.where(t < -1, left, 0.0))


def K_box_deriv(t, smooth=False):
    t = np.asarray(t, dtype=float)
    c = 0.0 if smooth else 1.0
    right = 2.0 * (t - 1.0) / (1.0 + (t - 1.0) ** 2 + c) ** 2
    left = -2.0 * (t + 1.0) / (1.0 + (t + 1.0) ** 2 + c) ** 2
    return np.where(t > 1, right, np.where(t < -1, left, 0.0))


@dataclass(frozen=True, eq=False)
class Parametrisation:
    """A scalar function K with its derivative and the points where it is not smooth."""

    value: Callable
    deriv: Callable
    breakpoints: tuple = ()
    name: str = "K"

    def __call__(self, t):
        return self.value(t)


TRIPLE = Parametrisation(K_triple, K_triple_deriv, (0.0,), "triple")
BOX = Parametrisation(K_box, K_box_deriv, (-1.0, 1.0), "box")
BOX_SMOOTH = Parametrisation(
    lambda t: K_box(t, smooth=True), lambda t: K_box_deriv(t, smooth=True), (-1.0, 1.0), "box-smooth"
)
ZERO = Parametrisation(lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                       lambda t: np.zeros_like(np.asarray(t, dtype=float)), (), "zero")


def _unit_circle(K):
    def integrand(t):
        k = K(t)
        return np.stack([np.cos(k), np.sin(k)], axis=-1)
    return integrand


def exact_map(x, y, K=TRIPLE, quad_tol=1e-12):
    """(int_y^x cos K, int_y^x sin K) with absolute error <= quad_tol per component."""
    return adaptive_gauss(_unit_circle(K), y, x, tol=quad_tol, breakpoints=K.breakpoints)


class ExactMap:
    """Vectorised, memoising evaluator of ``scale * exact_map``.

    The map is F(x) - F(y) with F(t) = int_0^t e^{iK}; each primitive value
    is computed once to quad_tol / 2 and cached, so grids cost O(#distinct
    coordinates) quadratures and antisymmetry holds exactly.
    """

    def __init__(self, K=TRIPLE, quad_tol=1e-12, scale=1.0):
        self.K = K
        self.quad_tol = quad_tol
        self.scale = scale
        self._prim = {}

    def primitive(self, t: float) -> np.ndarray:
        t = float(t)
        if t not in self._prim:
            self._prim[t] = exact_map(t, 0.0, self.K, 0.5 * self.quad_tol)
        return self._prim[t]

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bx, by = np.broadcast_arrays(x, y)
        out = np.empty(bx.shape + (2,))
        for idx in np.ndindex(bx.shape):
            out[idx] = self.primitive(bx[idx]) - self.primitive(by[idx])
        return self.scale * out

    def gradient(self, x, y):
        """Analytic Du: columns e^{iK(x)} and -e^{iK(y)}; shape (..., 2, 2)."""
        kx, ky = self.K(np.asarray(x, float)), self.K(np.asarray(y, float))
        col_x = np.stack([np.cos(kx), np.sin(kx)], axis=-1)
        col_y = -np.stack([np.cos(ky), np.sin(ky)], axis=-1)
        return self.scale * np.stack([col_x, col_y], axis=-1)

    def det(self, x, y):
        return self.scale ** 2 * np.sin(self.K(np.asarray(x, float)) - self.K(np.asarray(y, float)))


def _mixed(x, y, third):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    full = (x >= 0) | (y <= 0)
    a = np.where(full, 0.5 * x, 0.25 * (x + y - 1.0))
    b = np.where(full, 0.5 * y, 0.25 * (x + y + 1.0))
    comps = [a, b, a] if third else [a, b]
    return np.stack(comps, axis=-1)


def g_mixed2d(x, y):
    """Rank-two affine data except on the open quadrant {x < 0, y > 0}."""
    return _mixed(x, y, third=False)


def g_mixed3d(x, y):
    return _mixed(x, y, third=True)


def g_rank1(x, y):
    """x e_x for x < 0 and x e_y for x >= 0."""
    x = np.asarray(x, dtype=float)
    x, y = np.broadcast_arrays(x, np.asarray(y, dtype=float))
    neg = x < 0
    return np.stack([np.where(neg, x, 0.0), np.where(neg, 0.0, x)], axis=-1)


class TabulatedBoundary:
    """Boundary datum given as samples along the boundary arc length.

    The arc length s runs counterclockwise from (-1, -1), so s in [0, 8).
    Values are interpolated linearly in s (periodically). Interior points
    are mapped radially, max-norm wise, onto the boundary; this only
    serves as an initial guess.
    """

    def __init__(self, s, values):
        s = np.asarray(s, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or len(s) != len(values):
            raise ValueError("need one row of values per arc-length sample")
        order = np.argsort(s)
        self.s = s[order]
        self.values = values[order]
        self.N = values.shape[1]

    @classmethod
    def from_file(cls, path):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(data[:, 0], data[:, 1:])

    @staticmethod
    def arclength(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-300)
        x, y = x / r, y / r
        return np.select(
            [np.isclose(y, -1.0) & (x < 1.0), np.isclose(x, 1.0) & (y < 1.0), np.isclose(y, 1.0) & (x > -1.0)],
            [x + 1.0, 2.0 + (y + 1.0), 4.0 + (1.0 - x)],
            default=6.0 + (1.0 - y),
        )

    def __call__(self, x, y):
        s = self.arclength(x, y)
        sp = np.concatenate([self.s - 8.0, self.s, self.s + 8.0])
        cols = [np.interp(s, sp, np.tile(self.values[:, a], 3)) for a in range(self.N)]
        return np.stack(cols, axis=-1)


@dataclass(eq=False)
class ProblemSpec:
    """Experiment identity: target dimension, boundary datum, optional K."""

    id: str
    N: int
    g: Callable
    K: Parametrisation | None = None
    scale: float = 1.0

    def __call__(self, x, y):
        return self.g(x, y)


def make_problem(name, quad_tol=1e-12, smooth_box=False, boundary_file=None) -> ProblemSpec:
    """Build the ProblemSpec for one of the experiment names in EXPERIMENTS."""
    if name == "mixed2d":
        return ProblemSpec(name, 2, g_mixed2d)
    if name == "mixed3d":
        return ProblemSpec(name, 3, g_mixed3d)
    if name == "rank1":
        return ProblemSpec(name, 2, g_rank1)
    if name in ("triple", "box"):
        K = TRIPLE if name == "triple" else (BOX_SMOOTH if smooth_box else BOX)
        return ProblemSpec(name, 2, ExactMap(K, quad_tol, scale=0.75), K=K, scale=0.75)
    if name == "custom":
        if boundary_file is None:
            raise ValueError("the custom experiment needs a boundary file")
        tab = TabulatedBoundary.from_file(boundary_file)
        return ProblemSpec(name, tab.N, tab)
    raise ValueError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")


def boundary_datum(problem: ProblemSpec, x, y):
    return problem.g(x, y)


def affine_problem(A, b) -> ProblemSpec:
    """Affine datum x -> A x + b; the discrete solution is its interpolant for every p."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def g(x, y):
        pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
        return pts @ A.T + b

    return ProblemSpec("custom", A.shape[0], g)


def sup_abs_K(K: Parametrisation, n=20001) -> float:
    t = np.linspace(-50, 50, n)
    return float(np.max(np.abs(K(t))))


__all__ = [
    "EXPERIMENTS", "K_triple", "K_triple_deriv", "K_box", "K_box_deriv", "Parametrisation",
    "TRIPLE", "BOX", "BOX_SMOOTH", "ZERO", "exact_map", "ExactMap", "g_mixed2d", "g_mixed3d",
    "g_rank1", "TabulatedBoundary", "ProblemSpec", "make_problem", "boundary_datum",
    "affine_problem", "sup_abs_K",
]
