"""Teacher and student network models over Gaussian inputs.

The teacher is a width-d two-layer network with row-orthonormal first layer
W* and positive second-layer weights a summing to one:

    f*(x) = sum_i a_i * act(<w*_i, x>)        act in {abs, relu}

The student is a width-m ensemble whose second layer is reparametrized as the
first-layer norm:

    f_W(x) = (1/m) * sum_i ||w_i|| * act(<w_i, x>)

so each neuron contributes mass beta_i = ||w_i||^2 / m along its direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Activation",
    "TeacherNetwork",
    "StudentEnsemble",
    "Dataset",
    "make_rng",
    "sample_teacher",
    "teacher_label",
    "student_predict",
    "sample_dataset",
    "init_student",
]

ORTHO_TOL = 1e-10
SUM_TOL = 1e-12
BAND_SLACK = 1e-12


class Activation(Enum):
    ABS = "abs"
    RELU = "relu"

    @classmethod
    def parse(cls, value) -> "Activation":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown activation {value!r}: expected 'abs' or 'relu'"
            ) from None


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator; all randomness in the package flows through here.

    ``stream`` derives an independent generator from the same seed, for
    operations that need several uncorrelated draws per seed.
    """
    if stream:
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,)))
        )
    return np.random.Generator(np.random.PCG64(seed))


def _as_float_matrix(arr, name: str) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def apply_activation(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.ABS:
        return np.abs(pre)
    return np.maximum(pre, 0.0)  # relu, with relu(0) = 0


@dataclass
class TeacherNetwork:
    """Ground-truth network: dimension d, weights a (length d), rows W* (d x d)."""

    d: int
    a: np.ndarray
    w_star: np.ndarray
    activation: Activation = Activation.ABS
    kappa: float = 1.0

    def __post_init__(self):
        self.activation = Activation.parse(self.activation)
        self.a = _as_float_matrix(self.a, "a").reshape(-1)
        self.w_star = _as_float_matrix(self.w_star, "w_star")
        if self.w_star.shape != (self.d, self.d):
            raise ValueError(
                f"w_star must be {self.d}x{self.d}, got {self.w_star.shape}"
            )
        if self.a.shape != (self.d,):
            raise ValueError(f"a must have length {self.d}, got {self.a.shape}")
        gram = self.w_star @ self.w_star.T
        err = np.max(np.abs(gram - np.eye(self.d)))
        if err > ORTHO_TOL:
            raise ValueError(
                f"teacher rows are not orthonormal: max Gram deviation {err:.3e}"
            )
        s = float(self.a.sum())
        if abs(s - 1.0) > SUM_TOL:
            raise ValueError(f"teacher weights must sum to 1, got {s!r}")
        if self.kappa < 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        lo = 1.0 / (self.kappa * self.d) - BAND_SLACK
        hi = self.kappa / self.d + BAND_SLACK
        if self.a.min() < lo or self.a.max() > hi:
            raise ValueError(
                "teacher weights leave the band "
                f"[1/(kappa*d), kappa/d] = [{lo:.3e}, {hi:.3e}]: "
                f"min {self.a.min():.3e}, max {self.a.max():.3e}"
            )


@dataclass
class StudentEnsemble:
    """Learner ensemble: weight rows w_i, prediction coefficient ||w_i||."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = _as_float_matrix(self.weights, "weights")
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-d, got shape {self.weights.shape}")

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.weights, axis=1)

    def directions(self) -> np.ndarray:
        """Unit rows; zero-norm neurons map to the zero vector."""
        n = self.norms()
        out = np.zeros_like(self.weights)
        nz = n > 0.0
        out[nz] = self.weights[nz] / n[nz, None]
        return out


@dataclass
class Dataset:
    """Inputs (n x d), labels (n), and the seed that produced them."""

    inputs: np.ndarray
    labels: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.inputs = _as_float_matrix(self.inputs, "inputs")
        self.labels = _as_float_matrix(self.labels, "labels").reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"inputs/labels length mismatch: {self.inputs.shape[0]} vs "
                f"{self.labels.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def sample_teacher(
    d: int,
    kappa: float = 1.0,
    seed: int = 0,
    mode: str = "identity",
    activation: Activation = Activation.ABS,
    max_retries: int = 100,
) -> TeacherNetwork:
    """Draw a teacher with weights uniform in [1/(kappa d), kappa/d], normalized.

    mode 'identity' sets W* = I; mode 'random' uses the QR factor of a Gaussian
    matrix with the sign of diag(R) fixed so the draw is unique. Normalization
    can push a weight out of the band; in that case the draw is retried, and a
    ValueError is raised after ``max_retries`` failures.
    """
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    if kappa < 1.0:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    rng = make_rng(seed)
    lo, hi = 1.0 / (kappa * d), kappa / d
    a = None
    for _ in range(max_retries):
        raw = rng.uniform(lo, hi, size=d)
        cand = raw / raw.sum()
        if cand.min() >= lo - BAND_SLACK and cand.max() <= hi + BAND_SLACK:
            a = cand
            break
    if a is None:
        raise ValueError(
            f"could not sample weights inside the band after {max_retries} tries "
            f"(d={d}, kappa={kappa})"
        )
    if mode == "identity":
        w_star = np.eye(d)
    elif mode == "random":
        g = rng.standard_normal((d, d))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))[None, :]
        w_star = q.T
    else:
        raise ValueError(f"unknown teacher mode {mode!r}: expected 'identity' or 'random'")
    return TeacherNetwork(d=d, a=a, w_star=w_star, activation=activation, kappa=kappa)


def teacher_label(teacher: TeacherNetwork, X: np.ndarray) -> np.ndarray:
    """f*(x) for each row of X."""
    X = np.asarray(X, dtype=np.float64)
    pre = X @ teacher.w_star.T
    return apply_activation(pre, teacher.activation) @ teacher.a


def student_predict(
    ensemble: StudentEnsemble,
    X: np.ndarray,
    activation: Activation = Activation.RELU,
    backend: str | None = None,
) -> np.ndarray:
    """f_W(x) for each row of X under the requested learner activation."""
    from . import _kernels

    activation = Activation.parse(activation)
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    return _kernels.predict_parts(
        X, ensemble.weights, ensemble.norms(), activation is Activation.ABS,
        backend=backend,
    )


def sample_dataset(teacher: TeacherNetwork, n: int, seed: int = 0) -> Dataset:
    """n standard-Gaussian inputs with teacher labels; bitwise reproducible."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = make_rng(seed)
    X = rng.standard_normal((n, teacher.d))
    y = teacher_label(teacher, X)
    return Dataset(inputs=X, labels=y, seed=seed)


def init_student(m: int, d: int, seed: int = 0) -> StudentEnsemble:
    """Gaussian init w_i ~ N(0, I_d / d), so E||w_i||^2 = 1."""
    if m < 1 or d < 1:
        raise ValueError(f"m and d must be positive, got m={m}, d={d}")
    rng = make_rng(seed)
    w = rng.standard_normal((m, d)) / np.sqrt(d)
    return StudentEnsemble(weights=w)
