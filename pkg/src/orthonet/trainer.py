"""Two-stage truncated gradient descent on the student ensemble.

Full-batch gradient descent where a step only updates neurons whose pre-step
squared norm is at or below a threshold set by the active truncation
parameter: stage 1 runs ``t1_iters`` steps at ``lambda0``, stage 2 runs
``t2_iters`` steps at the weaker ``lambda1``. Gradients come either from a
fixed Gaussian sample (empirical mode) or from the exact per-order population
decomposition (population mode — the infinite-sample limit). Every logged
iteration snapshots the per-order losses of the live ensemble into an
immutable trace record.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (
    Activation,
    Dataset,
    StudentEnsemble,
    TeacherNetwork,
    init_student,
    sample_dataset,
    sample_teacher,
)
from .spectrum import (
    HermiteTable,
    NumericsError,
    decompose_loss,
    default_table,
    population_gradient,
)

__all__ = [
    "GradientMode",
    "TrainConfig",
    "TraceRecord",
    "TrainResult",
    "DivergenceError",
    "empirical_loss",
    "empirical_gradient",
    "truncated_step",
    "run_two_stage",
    "default_schedule",
]


class GradientMode(enum.Enum):
    EMPIRICAL = "empirical"
    POPULATION = "population"

    @classmethod
    def parse(cls, value) -> "GradientMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown gradient mode {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a run; two configs equal => bitwise-equal traces."""

    d: int
    m: int
    eta: float
    lambda0: float
    lambda1: float
    t1_iters: int
    t2_iters: int
    n_samples: int = 10_000
    j_max: int = 12
    log_every: int = 100
    seed_teacher: int = 0
    seed_data: int = 1
    seed_init: int = 2
    gradient_mode: GradientMode = GradientMode.EMPIRICAL
    learner_activation: Activation = Activation.ABS
    kappa: float = 2.0
    teacher_mode: str = "random"
    threshold_factor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gradient_mode", GradientMode.parse(self.gradient_mode))
        object.__setattr__(
            self, "learner_activation", Activation.parse(self.learner_activation)
        )
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lambda0 <= 0 or self.lambda1 <= 0:
            raise ValueError("truncation parameters must be positive")
        if self.lambda1 > self.lambda0:
            raise ValueError(
                f"lambda1 ({self.lambda1}) must not exceed lambda0 ({self.lambda0}): "
                "stage 2 relaxes the truncation"
            )
        if self.t1_iters < 0 or self.t2_iters < 0:
            raise ValueError("stage lengths must be nonnegative")
        if self.j_max < 6:
            raise ValueError("j_max must be >= 6 (trace logs orders up to 6)")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.threshold_factor <= 0:
            raise ValueError("threshold_factor must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    """One logged snapshot; per-order fields are decompose_loss of the live ensemble."""

    iter: int
    stage: int
    emp_loss: float
    L0: float
    L1: float
    L2: float
    L4: float
    L6: float
    tail: float
    max_norm_sq: float
    frac_truncated: float


@dataclass(frozen=True)
class TrainResult:
    trace: list
    ensemble: StudentEnsemble
    teacher: TeacherNetwork
    config: TrainConfig


class DivergenceError(NumericsError):
    """Training hit a non-finite value; carries the trace up to the abort."""

    def __init__(self, message: str, trace: list, ensemble: StudentEnsemble):
        super().__init__(message)
        self.trace = trace
        self.ensemble = ensemble


def empirical_loss(
    ensemble: StudentEnsemble,
    dataset: Dataset,
    activation: Activation = Activation.ABS,
    backend: str | None = None,
) -> float:
    """(1/N) sum_j (f_W(x_j) - y_j)^2."""
    activation = Activation.parse(activation)
    sse, _, _ = _kernels.empirical_loss_grad_parts(
        dataset.inputs,
        dataset.labels,
        ensemble.weights,
        ensemble.norms(),
        activation is Activation.ABS,
        backend=backend,
    )
    return sse / dataset.inputs.shape[0]


def _empirical_grad_and_loss(
    ensemble: StudentEnsemble,
    dataset: Dataset,
    activation: Activation,
    backend: str | None = None,
) -> tuple[np.ndarray, float]:
    X, y = dataset.inputs, dataset.labels
    if X.shape[1] != ensemble.d:
        raise ValueError(
            f"dataset dimension {X.shape[1]} != ensemble dimension {ensemble.d}"
        )
    norms = ensemble.norms()
    sse, gA, gB = _kernels.empirical_loss_grad_parts(
        X, y, ensemble.weights, norms, activation is Activation.ABS, backend=backend
    )
    n = X.shape[0]
    # d/dw_i of (1/n) sum_j r_j^2 with f = (1/m) sum_i ||w_i|| act(<w_i, x>):
    # (2/(n m)) [ u_i * sum_j act(p_ij) r_j + ||w_i|| * sum_j act'(p_ij) r_j x_j ].
    scale = 2.0 / (n * ensemble.m)
    grads = scale * (ensemble.directions() * gA[:, None] + norms[:, None] * gB)
    return grads, sse / n


def empirical_gradient(
    ensemble: StudentEnsemble,
    dataset: Dataset,
    activation: Activation = Activation.ABS,
    backend: str | None = None,
) -> np.ndarray:
    """Full-batch gradient of the empirical square loss, one row per neuron.

    The norm factor makes the per-neuron map positively homogeneous of degree
    two; at a zero neuron both the direction and the norm factor vanish, so
    the subgradient there is taken to be 0 (as is act'(0) for both learners).
    """
    grads, _ = _empirical_grad_and_loss(
        ensemble, dataset, Activation.parse(activation), backend
    )
    return grads


def truncated_step(
    ensemble: StudentEnsemble,
    grads: np.ndarray,
    eta: float,
    lam: float,
    threshold_factor: float = 1.0,
) -> StudentEnsemble:
    """One step that skips any neuron whose pre-step ||w||^2 exceeds the threshold.

    Neurons at or below threshold_factor / lam move by -eta * grad; the rest
    are carried over bitwise unchanged.
    """
    if lam <= 0:
        raise ValueError(f"truncation parameter must be positive, got {lam}")
    if grads.shape != ensemble.weights.shape:
        raise ValueError(
            f"gradient shape {grads.shape} != weight shape {ensemble.weights.shape}"
        )
    if eta == 0.0:
        return StudentEnsemble(weights=ensemble.weights.copy())
    active = ensemble.norms() ** 2 <= threshold_factor / lam
    stepped = np.where(
        active[:, None], ensemble.weights - eta * grads, ensemble.weights
    )
    return StudentEnsemble(weights=stepped)


def default_schedule(
    d: int, kappa: float = 2.0, eta: float = 0.1, c: float = 1.0
) -> tuple[int, int, float, float]:
    """Desk-scale stage lengths and truncation strengths for dimension d.

    t1 = ceil(d^2 / (eta * c * ln d)) and t2 = ceil(d^1.1 / eta); the constant
    c absorbs the kappa-dependent factor and defaults to 1. The truncation
    pair (d^-4, d^-8) keeps thresholds far above unit-scale norms, so at these
    sizes truncation is a safety net rather than an active constraint.
    """
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    if kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    t1 = math.ceil(d**2 / (eta * c * math.log(d)))
    t2 = math.ceil(d**1.1 / eta)
    return t1, t2, float(d) ** -4, float(d) ** -8


def _snapshot(
    it: int,
    stage: int,
    emp: float,
    ensemble: StudentEnsemble,
    teacher: TeacherNetwork,
    table: HermiteTable,
    j_max: int,
    threshold: float,
    learner: Activation,
    backend: str | None = None,
) -> TraceRecord:
    bd = decompose_loss(
        ensemble, teacher, table=table, j_max=j_max, learner=learner, backend=backend
    )
    norms_sq = ensemble.norms() ** 2
    return TraceRecord(
        iter=it,
        stage=stage,
        emp_loss=emp,
        L0=bd.per_order[0],
        L1=bd.per_order[1],
        L2=bd.per_order[2],
        L4=bd.per_order[4],
        L6=bd.per_order[6],
        tail=bd.tail_bound,
        max_norm_sq=float(norms_sq.max()),
        frac_truncated=float(np.mean(norms_sq > threshold)),
    )


def run_two_stage(
    config: TrainConfig,
    teacher: TeacherNetwork | None = None,
    backend: str | None = None,
) -> TrainResult:
    """Run both stages, logging every ``log_every`` iterations and at boundaries.

    A non-finite loss or iterate aborts with DivergenceError carrying the
    trace collected so far plus a final diagnostic record.
    """
    table = default_table()
    if teacher is None:
        teacher = sample_teacher(
            config.d, kappa=config.kappa, seed=config.seed_teacher,
            mode=config.teacher_mode,
        )
    elif teacher.d != config.d:
        raise ValueError(f"teacher dimension {teacher.d} != config d {config.d}")
    ensemble = init_student(config.m, config.d, seed=config.seed_init)
    empirical = config.gradient_mode is GradientMode.EMPIRICAL
    dataset = (
        sample_dataset(teacher, config.n_samples, seed=config.seed_data)
        if empirical
        else None
    )

    total = config.t1_iters + config.t2_iters
    trace: list[TraceRecord] = []

    def stage_of(it: int) -> int:
        return 1 if it < config.t1_iters else 2

    def lam_of(it: int) -> float:
        return config.lambda0 if it < config.t1_iters else config.lambda1

    def log_due(it: int) -> bool:
        return (
            it == 0
            or it == config.t1_iters
            or it == total
            or it % config.log_every == 0
        )

    it = 0
    while True:
        stage = stage_of(it)
        lam = lam_of(it)
        threshold = config.threshold_factor / lam
        if empirical:
            grads, emp = _empirical_grad_and_loss(
                ensemble, dataset, config.learner_activation, backend
            )
        else:
            grads = population_gradient(
                ensemble, teacher, table=table, j_max=config.j_max,
                learner=config.learner_activation, backend=backend,
            )
            emp = decompose_loss(
                ensemble, teacher, table=table, j_max=config.j_max,
                learner=config.learner_activation, backend=backend,
            ).total
        if not (math.isfinite(emp) and np.all(np.isfinite(grads))):
            diag = TraceRecord(
                iter=it, stage=stage, emp_loss=emp,
                L0=float("nan"), L1=float("nan"), L2=float("nan"),
                L4=float("nan"), L6=float("nan"), tail=float("nan"),
                max_norm_sq=float((ensemble.norms() ** 2).max()),
                frac_truncated=float("nan"),
            )
            trace.append(diag)
            raise DivergenceError(
                f"non-finite loss or gradient at iteration {it}; "
                "the learning rate is likely too large",
                trace, ensemble,
            )
        if log_due(it):
            trace.append(
                _snapshot(
                    it, stage, emp, ensemble, teacher, table,
                    config.j_max, threshold, config.learner_activation, backend,
                )
            )
        if it == total:
            break
        ensemble = truncated_step(
            ensemble, grads, config.eta, lam, config.threshold_factor
        )
        it += 1
    return TrainResult(trace=trace, ensemble=ensemble, teacher=teacher, config=config)
