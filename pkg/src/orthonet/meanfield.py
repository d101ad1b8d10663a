"""Finite particle clouds as a stand-in for the infinite-width neuron measure.

A cloud of ``count`` equal-mass particles plays the role of the neuron
distribution: plugging it into the ensemble convention (beta_i =
||v_i||^2 / count) makes the exact per-order population gradient the cloud's
mean-field update. The module provides the truncated-Gaussian initialization
set (an ell-infinity cap, a two-sided norm window, and a cap on the number of
large coordinates), sign-flip symmetrization for building coordinate-symmetric
test clouds, and the closed-form order-0/order-2 gradient predictions that
hold on such clouds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import Activation, StudentEnsemble, TeacherNetwork, make_rng
from .spectrum import (
    HermiteTable,
    NumericsError,
    decompose_loss,
    default_table,
    population_gradient,
)

__all__ = [
    "SgParams",
    "ParticleCloud",
    "CloudDiagnostics",
    "is_in_Sg",
    "sample_truncated_init",
    "particle_step",
    "symmetrize",
    "first_order_tensor",
    "predicted_order_gradient",
    "exact_fit_cloud",
    "cloud_diagnostics",
    "finite_gap_curve",
]

MAX_CLOSURE = 1 << 20
MIN_ACCEPT_RATE = 0.01
WARMUP_DRAWS = 1000


@dataclass(frozen=True)
class SgParams:
    """Coefficients of the three membership clauses of the initialization set.

    c_inf scales the per-coordinate cap (log d)^2 / sqrt(d); c_norm the
    half-width of the norm windows; c_big the allowed count of coordinates
    with w_i^2 >= log(d)/d, via ceil(c_big * (log d)^0.01).
    """

    c_inf: float = 0.3
    c_norm: float = 0.3
    c_big: float = 6.0

    def __post_init__(self):
        if self.c_inf <= 0 or self.c_norm <= 0 or self.c_big <= 0:
            raise ValueError("all SgParams coefficients must be positive")


@dataclass(frozen=True)
class ParticleCloud:
    """Equal-mass particles (rows) with a step counter; immutable between steps."""

    particles: np.ndarray
    step_count: int = 0
    acceptance_rate: float | None = None

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError(f"particles must be a nonempty 2-D array, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("particles must have finite entries")
        object.__setattr__(self, "particles", p)

    @property
    def count(self) -> int:
        return self.particles.shape[0]

    @property
    def d(self) -> int:
        return self.particles.shape[1]

    def as_ensemble(self) -> StudentEnsemble:
        """The cloud under the ensemble convention: beta_i = ||v_i||^2 / count."""
        return StudentEnsemble(weights=self.particles)


@dataclass(frozen=True)
class CloudDiagnostics:
    """Read-only gap measurements of a cloud against a target weight vector.

    norm_gap       E||w||^2 - 1
    coord_gap_pos  max_i (E w_i^2 - a_i), clipped at 0
    coord_gap_neg  max_i (a_i - E w_i^2), clipped at 0
    big_coord_mass fraction of particles with some w_i^2 >= log(d)/d
    """

    norm_gap: float
    coord_gap_pos: float
    coord_gap_neg: float
    big_coord_mass: float


def _window_halfwidth(d: int, c: float) -> float:
    return c * math.log(d) ** 2 / math.sqrt(d)


def is_in_Sg(w: np.ndarray, a: np.ndarray, d: int, params: SgParams | None = None) -> bool:
    """Membership in the truncated initialization set.

    (i) every |w_i| <= c_inf (log d)^2 / sqrt(d);
    (ii) both ||w||^2 and sum_i a_i d w_i^2 lie within c_norm (log d)^2/sqrt(d)
         of 1;
    (iii) at most ceil(c_big (log d)^0.01) coordinates have w_i^2 >= log(d)/d.
    """
    params = params or SgParams()
    w = np.asarray(w, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    if w.shape != (d,) or a.shape != (d,):
        raise ValueError(
            f"dimension mismatch: w {w.shape}, a {a.shape}, expected ({d},)"
        )
    if np.abs(w).max() > _window_halfwidth(d, params.c_inf):
        return False
    half = _window_halfwidth(d, params.c_norm)
    nsq = float(w @ w)
    if not (1.0 - half <= nsq <= 1.0 + half):
        return False
    weighted = float(a @ (d * w**2))
    if not (1.0 - half <= weighted <= 1.0 + half):
        return False
    logd = math.log(d)
    n_big = int(np.count_nonzero(w**2 >= logd / d))
    return n_big <= math.ceil(params.c_big * logd**0.01)


def sample_truncated_init(
    d: int,
    a: np.ndarray,
    count: int,
    params: SgParams | None = None,
    seed: int = 0,
) -> ParticleCloud:
    """Rejection-sample N(0, I/d) onto the truncated set; deterministic per seed.

    Raises if, after a warmup of at least 1000 draws, the running acceptance
    rate is below 1% — the parameters are too strict for this dimension.
    """
    params = params or SgParams()
    a = np.asarray(a, dtype=np.float64)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = make_rng(seed)
    kept: list[np.ndarray] = []
    drawn = 0
    batch = max(count, 256)
    while len(kept) < count:
        W = rng.standard_normal((batch, d)) / math.sqrt(d)
        for row in W:
            drawn += 1
            if is_in_Sg(row, a, d, params):
                kept.append(row)
                if len(kept) == count:
                    break
        rate = len(kept) / drawn
        if drawn >= WARMUP_DRAWS and rate < MIN_ACCEPT_RATE:
            raise ValueError(
                f"acceptance rate {rate:.4f} after {drawn} draws is below "
                f"{MIN_ACCEPT_RATE}; the truncation parameters are too strict "
                f"for d={d}"
            )
    return ParticleCloud(
        particles=np.array(kept),
        step_count=0,
        acceptance_rate=len(kept) / drawn,
    )


def particle_step(
    cloud: ParticleCloud,
    teacher: TeacherNetwork,
    eta: float,
    lam: float,
    j_max: int = 12,
    table: HermiteTable | None = None,
    learner: Activation = Activation.RELU,
    threshold_factor: float = 1.0,
    backend: str | None = None,
) -> ParticleCloud:
    """One mean-field update: v <- v - eta * grad for particles below threshold.

    The gradient is the exact truncated per-order population gradient with the
    cloud as the ensemble; the norm threshold convention (threshold_factor/lam,
    pre-step norms) matches the trainer's truncated step.
    """
    if lam <= 0:
        raise ValueError(f"truncation parameter must be positive, got {lam}")
    table = table or default_table()
    ens = cloud.as_ensemble()
    if eta == 0.0:
        return replace(cloud, step_count=cloud.step_count + 1)
    grads = population_gradient(
        ens, teacher, table=table, j_max=j_max,
        learner=Activation.parse(learner), backend=backend,
    )
    active = ens.norms() ** 2 <= threshold_factor / lam
    stepped = np.where(active[:, None], cloud.particles - eta * grads, cloud.particles)
    if not np.all(np.isfinite(stepped)):
        raise NumericsError(
            f"non-finite particle update at step {cloud.step_count}; "
            "the step size is likely too large"
        )
    return ParticleCloud(
        particles=stepped,
        step_count=cloud.step_count + 1,
        acceptance_rate=cloud.acceptance_rate,
    )


def symmetrize(
    cloud: ParticleCloud, axis_set, max_closure: int = MAX_CLOSURE
) -> ParticleCloud:
    """Close the particle set under sign flips of each listed axis (0-based).

    The closure is deduplicated exactly and returned in lexicographic row
    order, so applying it twice is a no-op. Generic clouds grow by a factor
    2^|axis_set|; particles with zeros on flipped axes grow less.
    """
    axes = sorted(set(int(ax) for ax in axis_set))
    if any(ax < 0 or ax >= cloud.d for ax in axes):
        raise ValueError(f"axis set {axes} out of range for d={cloud.d}")
    current = cloud.particles
    for ax in axes:
        if 2 * current.shape[0] > max_closure:
            raise ValueError(
                f"sign-flip closure would exceed {max_closure} particles"
            )
        flipped = current.copy()
        flipped[:, ax] = -flipped[:, ax]
        current = np.vstack([current, flipped])
    current = np.unique(current, axis=0)
    return replace(cloud, particles=current)


def first_order_tensor(cloud: ParticleCloud) -> np.ndarray:
    """(1/count) sum_p ||v_p|| v_p — the cloud's first-moment vector.

    Zero (exactly, by pairwise cancellation) on clouds closed under sign flips
    of every axis, which is why odd orders drop out of symmetric dynamics.
    """
    norms = np.linalg.norm(cloud.particles, axis=1)
    return (norms[:, None] * cloud.particles).sum(axis=0) / cloud.count


def predicted_order_gradient(
    cloud: ParticleCloud,
    teacher: TeacherNetwork,
    order: int,
    learner: Activation = Activation.RELU,
    table: HermiteTable | None = None,
) -> np.ndarray:
    """Closed-form order-0/order-2 gradients for coordinate-aligned clouds.

    With c_k the squared activation coefficients of |z| and moments taken over
    the cloud (E||w||^2 = mean squared norm, E w_i^2 = mean squared coordinate),
    the exact per-particle gradients reduce to

        abs learner : order 0   (4 c0 / count) (E||w||^2 - 1) v
                      order 2   (4 c2 / count) (E w_i^2 - a_i) v_i
        relu learner: order 0   (2 c0 / count) (E||w||^2 / 2 - 1) v
                      order 2   (c2 / count)  (E w_i^2 - 2 a_i) v_i

    The abs forms are b0 and b2 from the coefficient table divided by count.
    Order 0 holds for every cloud; order 2 additionally needs the cloud's
    second-moment matrix diagonal (e.g. sign-flip closed clouds) and a
    coordinate-basis teacher.
    """
    table = table or default_table()
    learner = Activation.parse(learner)
    if order not in (0, 2):
        raise ValueError(f"closed forms exist for orders 0 and 2 only, got {order}")
    if cloud.d != teacher.d:
        raise ValueError(f"cloud dimension {cloud.d} != teacher dimension {teacher.d}")
    if order == 2 and np.abs(teacher.w_star - np.eye(teacher.d)).max() > 1e-12:
        raise ValueError(
            "the order-2 closed form requires a coordinate-basis teacher"
        )
    V = cloud.particles
    n = cloud.count
    c0 = table.closed_form_sq[0]
    c2 = table.closed_form_sq[2]
    mean_nsq = float(np.mean(np.sum(V**2, axis=1)))
    if order == 0:
        if learner is Activation.ABS:
            return (4.0 * c0 / n) * (mean_nsq - 1.0) * V
        return (2.0 * c0 / n) * (mean_nsq / 2.0 - 1.0) * V
    coord_msq = np.mean(V**2, axis=0)
    if learner is Activation.ABS:
        return (4.0 * c2 / n) * (coord_msq - teacher.a)[None, :] * V
    return (c2 / n) * (coord_msq - 2.0 * teacher.a)[None, :] * V


def exact_fit_cloud(
    teacher: TeacherNetwork, learner: Activation = Activation.RELU
) -> ParticleCloud:
    """A cloud whose induced network equals the teacher function exactly.

    relu learner: the +/- pair (+-sqrt(count * a_l) v_l) per teacher direction
    (count = 2d), since relu(u) + relu(-u) = |u|. abs learner: one particle
    sqrt(count * a_l) v_l per direction (count = d). Both sit at the global
    minimum: every per-order loss, hence the exact gradient, is zero.
    """
    learner = Activation.parse(learner)
    V = teacher.w_star
    if learner is Activation.RELU:
        count = 2 * teacher.d
        scaled = np.sqrt(count * teacher.a)[:, None] * V
        particles = np.vstack([scaled, -scaled])
    else:
        count = teacher.d
        particles = np.sqrt(count * teacher.a)[:, None] * V
    return ParticleCloud(particles=particles)


def cloud_diagnostics(cloud: ParticleCloud, a: np.ndarray) -> CloudDiagnostics:
    """Norm and per-coordinate second-moment gaps against the target weights."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (cloud.d,):
        raise ValueError(f"target weights shape {a.shape} != ({cloud.d},)")
    V = cloud.particles
    sq = V**2
    gaps = sq.mean(axis=0) - a
    big = sq.max(axis=1) >= math.log(cloud.d) / cloud.d
    return CloudDiagnostics(
        norm_gap=float(sq.sum(axis=1).mean() - 1.0),
        coord_gap_pos=float(max(gaps.max(), 0.0)),
        coord_gap_neg=float(max((-gaps).max(), 0.0)),
        big_coord_mass=float(big.mean()),
    )


def finite_gap_curve(
    cloud: ParticleCloud,
    teacher: TeacherNetwork,
    sizes=(100, 1000, 10_000),
    n_resamples: int = 20,
    seed: int = 0,
    learner: Activation = Activation.RELU,
    j_max: int = 12,
) -> dict[int, float]:
    """Median |L(subsample) - L(cloud)| for each subsample size.

    Resamples n particles with replacement (an equal-mass draw from the cloud
    measure) and compares truncated decomposition totals; the medians shrink
    as n grows, measuring how fast finite clouds approach their mean field.
    """
    learner = Activation.parse(learner)
    table = default_table()
    ref = decompose_loss(
        cloud.as_ensemble(), teacher, table=table, j_max=j_max, learner=learner
    ).total
    rng = make_rng(seed)
    out: dict[int, float] = {}
    for n in sizes:
        gaps = []
        for _ in range(n_resamples):
            idx = rng.integers(0, cloud.count, size=n)
            sub = StudentEnsemble(weights=cloud.particles[idx])
            val = decompose_loss(
                sub, teacher, table=table, j_max=j_max, learner=learner
            ).total
            gaps.append(abs(val - ref))
        out[int(n)] = float(np.median(gaps))
    return out
