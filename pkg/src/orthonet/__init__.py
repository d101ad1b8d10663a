"""Two-layer networks with orthonormal first-layer teachers over Gaussian inputs.

The package studies when gradient descent on a student ensemble recovers an
orthonormal-direction teacher: per-Hermite-order loss decomposition and exact
population gradients (`spectrum`), truncated two-stage gradient descent
(`trainer`), a finite-vs-infinite-width particle view (`meanfield`), a
closed-form rewrite of relu teachers to absolute-value form (`reduction`),
structured hard instances probed with random-feature regression (`hardness`),
and a reproducible experiment harness with a CLI (`harness`).
"""

from .backend import resolve_backend
from .model import (
    Activation,
    Dataset,
    StudentEnsemble,
    TeacherNetwork,
    init_student,
    make_rng,
    sample_dataset,
    sample_teacher,
    student_predict,
    teacher_label,
)
from .spectrum import (
    HermiteTable,
    LossBreakdown,
    NumericsError,
    decompose_loss,
    hermite_coeffs,
    mc_population_loss,
    order_loss,
    population_gradient,
    zero_ensemble_breakdown,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "Dataset",
    "HermiteTable",
    "LossBreakdown",
    "NumericsError",
    "StudentEnsemble",
    "TeacherNetwork",
    "decompose_loss",
    "hermite_coeffs",
    "init_student",
    "make_rng",
    "mc_population_loss",
    "order_loss",
    "population_gradient",
    "resolve_backend",
    "sample_dataset",
    "sample_teacher",
    "student_predict",
    "teacher_label",
    "zero_ensemble_breakdown",
    "__version__",
]
