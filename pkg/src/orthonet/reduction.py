"""Rewriting relu-teacher labels into absolute-value-teacher form.

For a relu teacher with orthonormal directions over a sign-symmetric input
distribution, the best linear predictor is z* = W*^T a / 2, and the residuals
satisfy 2(y - <z*, x>) = sum_l a_l |<w*_l, x>| pointwise — the identity
2 relu(u) - u = |u| summed across neurons. Fitting z by least squares and
doubling the residuals therefore converts a relu-teacher dataset into an
absolute-value-teacher dataset with the same (a, W*), which is the form the
rest of the package analyzes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Activation, Dataset, TeacherNetwork
from .spectrum import NumericsError

__all__ = [
    "LinearRegressor",
    "closed_form_regressor",
    "fit_least_squares",
    "residual_labels",
]

CONDITION_LIMIT = 1e8
CERT_TOL = 1e-8


@dataclass(frozen=True)
class LinearRegressor:
    """Weights of the linear predictor x -> <z, x>."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim != 1:
            raise ValueError(f"z must be a vector, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("z must be finite")
        object.__setattr__(self, "z", z)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.z


def closed_form_regressor(teacher: TeacherNetwork) -> LinearRegressor:
    """The population-optimal linear predictor for a relu teacher: W*^T a / 2.

    relu(u) = u/2 + |u|/2 and the absolute-value part is uncorrelated with
    every linear function under a sign-symmetric input law, so only the u/2
    part projects onto linear predictors.
    """
    if teacher.activation is not Activation.RELU:
        raise ValueError(
            "the closed-form linear component exists for relu teachers; "
            "absolute-value teachers have none (their labels are even in x)"
        )
    return LinearRegressor(z=teacher.w_star.T @ teacher.a / 2.0)


def fit_least_squares(dataset: Dataset) -> LinearRegressor:
    """argmin_z sum_j (<z, x_j> - y_j)^2 with a certified solution.

    Solves the normal equations; if the Gram matrix's condition number
    exceeds 1e8 the solve falls back to an orthogonal factorization. The
    returned z always satisfies the stationarity certificate
    ||X^T X z - X^T y|| <= 1e-8 * ||X^T y||.
    """
    X = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.float64)
    n, d = X.shape
    if n < d:
        raise ValueError(f"need at least d={d} samples to fit, got {n}")
    gram = X.T @ X
    rhs = X.T @ y
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT**2:
        # cond(X)^2 = cond(gram); beyond the limit, factorize X directly.
        if np.linalg.matrix_rank(X) < d:
            raise ValueError(
                f"inputs are rank deficient (rank < {d}); the linear fit "
                "is not identified"
            )
        z = np.linalg.lstsq(X, y, rcond=None)[0]
    else:
        z = np.linalg.solve(gram, rhs)
    resid = np.linalg.norm(gram @ z - rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if resid > CERT_TOL * scale:
        raise NumericsError(
            f"least-squares certificate failed: ||X'Xz - X'y|| = {resid:.3e} "
            f"exceeds {CERT_TOL:.0e} * ||X'y|| = {CERT_TOL * scale:.3e}"
        )
    return LinearRegressor(z=z)


def residual_labels(dataset: Dataset, regressor: LinearRegressor) -> Dataset:
    """Twice the linear-fit residuals: 2(y - <z, x>), inputs unchanged.

    With the exact closed-form z of a relu teacher this reproduces the
    absolute-value teacher's labels pointwise.
    """
    X = np.asarray(dataset.inputs, dtype=np.float64)
    z = regressor.z
    if X.shape[1] != z.shape[0]:
        raise ValueError(
            f"input dimension {X.shape[1]} != regressor dimension {z.shape[0]}"
        )
    return Dataset(
        inputs=dataset.inputs,
        labels=2.0 * (dataset.labels - X @ z),
        seed=dataset.seed,
    )
