"""Per-order decomposition of the population square loss over Gaussian inputs.

For unit vectors u, v and x ~ N(0, I), E[he_j(<u,x>) he_k(<v,x>)] =
delta_jk <u,v>^k (normalized probabilists' Hermite polynomials). Expanding
both networks in that basis splits the population loss into one nonnegative
term per Hermite order:

    order_j = || sig_j * sum_i beta_i u_i^{(j)} - tau_j * sum_l a_l v_l^{(j)} ||^2

where u^{(j)} denotes the j-fold symmetric tensor power, beta_i = ||w_i||^2/m,
sig_j / tau_j are the learner's / teacher's j-th activation coefficients, and
every Frobenius inner product collapses to a scalar power <u,v>^j — so nothing
tensor-shaped is ever materialized.

The absolute-value teacher has coefficients only at even orders; the squared
even coefficients admit the closed form 2*[(k-3)!!]^2 / (pi * k!), which is
kept as an independent cross-check of the quadrature route. relu coefficients
follow from relu(z) = (z + |z|)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Activation, StudentEnsemble, TeacherNetwork, make_rng, teacher_label

__all__ = [
    "HermiteTable",
    "LossBreakdown",
    "NumericsError",
    "hermite_coeffs",
    "order_loss",
    "decompose_loss",
    "decomposition_orders",
    "population_gradient",
    "mc_population_loss",
    "zero_ensemble_breakdown",
]

DEFAULT_K_MAX = 40
DEFAULT_J_MAX = 12
DEFAULT_QUAD_NODES = 40


class NumericsError(RuntimeError):
    """A numeric computation left its validated regime."""


@dataclass(frozen=True)
class HermiteTable:
    """Activation coefficients in the normalized probabilists' Hermite basis.

    abs_coeff[k]   signed k-th coefficient of |z| (odd entries exactly 0)
    relu_coeff[k]  coefficients of relu: abs/2 at even k, 1/2 at k=1
    closed_form_sq[k]  exact value of abs_coeff[k]^2 at even k (NaN at odd k)
    b_coeff / b_prime_coeff  gradient multipliers of the order-k moment
        residual (4c0 at k=0, 2*(1/4) at k=1 from the relu coefficient,
        2k*c_k and (2k-4)*c_k at even k); diagnostic, cross-checked in tests
    """

    k_max: int
    quad_nodes: int
    abs_coeff: np.ndarray
    relu_coeff: np.ndarray
    closed_form_sq: np.ndarray
    b_coeff: np.ndarray
    b_prime_coeff: np.ndarray

    def coeffs(self, activation: Activation) -> np.ndarray:
        return self.abs_coeff if activation is Activation.ABS else self.relu_coeff


@dataclass(frozen=True)
class LossBreakdown:
    """Per-order losses {j: value}, their sum, and a truncation tail bound."""

    per_order: dict[int, float]
    total: float
    tail_bound: float
    j_max: int


def _closed_form_sq(k: int) -> float:
    """2*[(k-3)!!]^2/(pi*k!) for even k, with (-1)!! = 1 and the k=0 factor 1."""
    if k % 2:
        return float("nan")
    if k == 0:
        return 2.0 / math.pi
    dfac = 1.0
    j = k - 3
    while j >= 2:
        dfac *= j
        j -= 2
    return 2.0 * dfac * dfac / (math.pi * math.factorial(k))


def hermite_coeffs(
    k_max: int = DEFAULT_K_MAX, nodes: int = DEFAULT_QUAD_NODES
) -> HermiteTable:
    """Build the coefficient table by quadrature and validate it in place.

    E[|g| he_k(g)] vanishes at odd k by symmetry; at even k the substitution
    t = z^2/2 turns the integrand into a degree-(k/2) polynomial against
    e^{-t}, so Gauss-Laguerre with ``nodes`` points is exact for
    k <= 4*nodes - 2. The result is checked against the closed form and a
    NumericsError is raised if the quadrature failed to converge.
    """
    if k_max < 2:
        raise ValueError(f"k_max must be >= 2, got {k_max}")
    if 4 * nodes - 2 < k_max:
        raise NumericsError(
            f"quadrature with {nodes} nodes is not exact through order {k_max}; "
            f"need at least {(k_max + 2 + 3) // 4} nodes"
        )
    t, w = np.polynomial.laguerre.laggauss(nodes)
    z = np.sqrt(2.0 * t)
    # he_k(z) by the stable normalized recurrence.
    he_prev = np.ones_like(z)
    he = z.copy()
    abs_coeff = np.zeros(k_max + 1)
    abs_coeff[0] = math.sqrt(2.0 / math.pi) * float(w @ he_prev)
    for k in range(1, k_max):
        he_next = (z * he - math.sqrt(k) * he_prev) / math.sqrt(k + 1.0)
        he_prev, he = he, he_next
        if (k + 1) % 2 == 0:
            abs_coeff[k + 1] = math.sqrt(2.0 / math.pi) * float(w @ he)

    relu_coeff = abs_coeff / 2.0
    relu_coeff[1] = 0.5

    closed = np.full(k_max + 1, float("nan"))
    closed[0::2] = [_closed_form_sq(k) for k in range(0, k_max + 1, 2)]

    b = np.zeros(k_max + 1)
    b_prime = np.zeros(k_max + 1)
    b[0] = 4.0 * closed[0]
    b[1] = 2.0 * relu_coeff[1] ** 2
    for k in range(2, k_max + 1, 2):
        b[k] = 2.0 * k * closed[k]
        b_prime[k] = (2.0 * k - 4.0) * closed[k]

    # Convergence check: quadrature vs closed form, odd orders identically 0.
    even = np.arange(0, k_max + 1, 2)
    rel = np.abs(abs_coeff[even] ** 2 - closed[even]) / closed[even]
    if rel.max() > 1e-10 or abs(abs_coeff[0] - math.sqrt(2.0 / math.pi)) > 1e-12:
        raise NumericsError(
            f"quadrature failed to converge: max squared-coefficient rel err "
            f"{rel.max():.3e} with {nodes} nodes through order {k_max}"
        )
    return HermiteTable(
        k_max=k_max,
        quad_nodes=nodes,
        abs_coeff=abs_coeff,
        relu_coeff=relu_coeff,
        closed_form_sq=closed,
        b_coeff=b,
        b_prime_coeff=b_prime,
    )


_DEFAULT_TABLE: HermiteTable | None = None


def default_table() -> HermiteTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = hermite_coeffs()
    return _DEFAULT_TABLE


def decomposition_orders(j_max: int) -> tuple[int, ...]:
    """Orders carried by the decomposition: 0, 1, and the even orders to j_max."""
    if j_max < 2:
        raise ValueError(f"j_max must be >= 2, got {j_max}")
    return (0, 1) + tuple(range(2, j_max + 1, 2))


def _require_abs_teacher(teacher: TeacherNetwork, op: str):
    if teacher.activation is not Activation.ABS:
        raise ValueError(
            f"{op} requires an absolute-value teacher; rewrite a relu teacher "
            "through the reduction module first"
        )


def _check_dims(ensemble: StudentEnsemble, teacher: TeacherNetwork):
    if ensemble.d != teacher.d:
        raise ValueError(
            f"student dimension {ensemble.d} != teacher dimension {teacher.d}"
        )


def _check_orders(table: HermiteTable, orders) -> np.ndarray:
    arr = np.asarray(orders, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("orders must be non-empty")
    if np.any(arr < 0):
        raise ValueError(f"orders must be nonnegative, got {orders}")
    if np.any(arr[1:] <= arr[:-1]):
        raise ValueError(f"orders must be strictly ascending, got {orders}")
    if arr.max() > table.k_max:
        raise ValueError(
            f"order {int(arr.max())} exceeds the coefficient table (k_max="
            f"{table.k_max}); rebuild the table with a larger k_max"
        )
    return arr


def _teacher_pair_sums(teacher: TeacherNetwork, orders: np.ndarray) -> np.ndarray:
    """tt[t] = sum_{l,l'} a_l a_l' <v_l, v_l'>^j; exact pairwise form."""
    gram = teacher.w_star @ teacher.w_star.T
    out = np.empty(len(orders))
    power = np.ones_like(gram)
    cur = 0
    for t, j in enumerate(orders):
        while cur < j:
            power *= gram
            cur += 1
        out[t] = float(teacher.a @ power @ teacher.a)
    return out


def _per_order_values(
    ensemble: StudentEnsemble,
    teacher: TeacherNetwork,
    table: HermiteTable,
    orders: np.ndarray,
    learner: Activation,
    backend: str | None = None,
) -> np.ndarray:
    sig = table.coeffs(learner)[orders]
    tau = table.abs_coeff[orders]
    norms = ensemble.norms()
    beta = norms**2 / ensemble.m
    U = ensemble.directions()
    live = (sig != 0.0) | (tau != 0.0)
    values = np.zeros(len(orders))
    if np.any(live):
        live_orders = orders[live]
        ss, st = _kernels.pairwise_power_sums(
            U, beta, teacher.w_star, teacher.a, live_orders, backend=backend
        )
        tt = _teacher_pair_sums(teacher, live_orders)
        s, t_ = sig[live], tau[live]
        values[live] = s * s * ss - 2.0 * s * t_ * st + t_ * t_ * tt
    return values


def order_loss(
    ensemble: StudentEnsemble,
    teacher: TeacherNetwork,
    j: int,
    table: HermiteTable | None = None,
    learner: Activation = Activation.ABS,
    backend: str | None = None,
) -> float:
    """The order-j term of the population loss (exactly 0 when both coefficients vanish)."""
    table = table or default_table()
    learner = Activation.parse(learner)
    _require_abs_teacher(teacher, "order_loss")
    _check_dims(ensemble, teacher)
    orders = _check_orders(table, [j])
    if table.coeffs(learner)[j] == 0.0 and table.abs_coeff[j] == 0.0:
        return 0.0
    return float(
        _per_order_values(ensemble, teacher, table, orders, learner, backend)[0]
    )


def _tail_factor(table: HermiteTable, j_max: int) -> float:
    """sum_{k > j_max} abs_coeff[k]^2, extended past k_max by the fitted power law."""
    even = np.arange(j_max + 2, table.k_max + 1, 2)
    known = float(np.sum(table.abs_coeff[even] ** 2)) if even.size else 0.0
    # Fit log c_k ~ -p log k on the last few even orders and integrate the
    # remainder: sum_{even k > k_max} c k^-p ~ c_kmax * k_max / (2 (p - 1)).
    ks = np.arange(max(2, table.k_max - 8), table.k_max + 1, 2)
    cs = table.abs_coeff[ks] ** 2
    slope = np.polyfit(np.log(ks), np.log(cs), 1)[0]
    p = max(-slope, 1.5)
    extra = float(table.abs_coeff[table.k_max] ** 2) * table.k_max / (2.0 * (p - 1.0))
    return known + extra


def decompose_loss(
    ensemble: StudentEnsemble,
    teacher: TeacherNetwork,
    table: HermiteTable | None = None,
    j_max: int = DEFAULT_J_MAX,
    learner: Activation = Activation.ABS,
    backend: str | None = None,
) -> LossBreakdown:
    """Split the population loss into per-order terms plus a tail bound.

    The tail bound multiplies the truncated coefficient mass by
    (sum beta + sum a)^2, a Cauchy-Schwarz bound on every discarded order
    (learner coefficients never exceed the teacher's in magnitude beyond
    order 1, and odd orders beyond 1 vanish for both activations).
    """
    table = table or default_table()
    learner = Activation.parse(learner)
    _require_abs_teacher(teacher, "decompose_loss")
    _check_dims(ensemble, teacher)
    orders = _check_orders(table, decomposition_orders(j_max))
    values = _per_order_values(ensemble, teacher, table, orders, learner, backend)
    per_order = {int(j): float(v) for j, v in zip(orders, values)}
    total = math.fsum(per_order.values())
    mass = float(np.sum(ensemble.norms() ** 2) / ensemble.m + teacher.a.sum())
    tail = _tail_factor(table, j_max) * mass**2
    return LossBreakdown(per_order=per_order, total=total, tail_bound=tail, j_max=j_max)


def zero_ensemble_breakdown(
    teacher: TeacherNetwork,
    table: HermiteTable | None = None,
    j_max: int = DEFAULT_J_MAX,
) -> LossBreakdown:
    """Per-order losses of the zero predictor: the teacher's own order masses.

    Used as the normalization scale when comparing per-order trajectories
    across orders (each order measured relative to predicting zero).
    """
    zero = StudentEnsemble(weights=np.zeros((1, teacher.d)))
    return decompose_loss(zero, teacher, table=table, j_max=j_max)


def population_gradient(
    ensemble: StudentEnsemble,
    teacher: TeacherNetwork,
    table: HermiteTable | None = None,
    j_max: int = DEFAULT_J_MAX,
    learner: Activation = Activation.ABS,
    orders=None,
    backend: str | None = None,
) -> np.ndarray:
    """Exact gradient of the truncated decomposition w.r.t. each neuron.

    Differentiating order_j through beta_p = ||w_p||^2/m and the unit
    direction u_p yields, per neuron,

        grad_p = (4 w_p / m) * A_p + (2 ||w_p|| / m) * (I - u_p u_p^T) B_p

    with A_p / B_p the order-weighted pairwise sums accumulated by the
    kernels. Zero-norm neurons get a zero gradient (their contribution is
    O(||w||^2), so the derivative vanishes at the origin).
    """
    table = table or default_table()
    learner = Activation.parse(learner)
    _require_abs_teacher(teacher, "population_gradient")
    _check_dims(ensemble, teacher)
    if orders is None:
        orders = decomposition_orders(j_max)
    orders = _check_orders(table, orders)
    sig = table.coeffs(learner)[orders]
    tau = table.abs_coeff[orders]
    cA_s = sig * sig
    cA_t = sig * tau
    cB_s = orders * cA_s
    cB_t = orders * cA_t
    norms = ensemble.norms()
    beta = norms**2 / ensemble.m
    U = ensemble.directions()
    A, B = _kernels.pairwise_grad_accum(
        U, beta, teacher.w_star, teacher.a, orders,
        cA_s, cA_t, cB_s.astype(np.float64), cB_t.astype(np.float64),
        backend=backend,
    )
    radial = (4.0 / ensemble.m) * ensemble.weights * A[:, None]
    tangent = B - np.sum(B * U, axis=1)[:, None] * U
    return radial + (2.0 / ensemble.m) * norms[:, None] * tangent


def mc_population_loss(
    ensemble: StudentEnsemble,
    teacher: TeacherNetwork,
    n_samples: int = 1_000_000,
    seed: int = 0,
    learner: Activation = Activation.ABS,
    batch_size: int = 65536,
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, stderr) of E[(f_W(x) - f*(x))^2].

    Streaming, fixed batch order, plain numpy throughout — this is the oracle
    the decomposition is validated against, so it shares no kernel code.
    """
    learner = Activation.parse(learner)
    _check_dims(ensemble, teacher)
    rng = make_rng(seed)
    norms = ensemble.norms()
    scale = norms / ensemble.m
    W = ensemble.weights
    total = 0.0
    total_sq = 0.0
    seen = 0
    while seen < n_samples:
        b = min(batch_size, n_samples - seen)
        X = rng.standard_normal((b, teacher.d))
        pre = X @ W.T
        act = np.abs(pre) if learner is Activation.ABS else np.maximum(pre, 0.0)
        r = act @ scale - teacher_label(teacher, X)
        sq = r * r
        total += float(sq.sum())
        total_sq += float(sq @ sq)
        seen += b
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0)
    stderr = math.sqrt(var / n_samples)
    return mean, stderr
