"""Block-Hadamard teachers and the boolean-Fourier tools that make them hard.

A hard instance hides the teacher's directions as Hadamard columns embedded in
disjoint coordinate blocks drawn from a random partition of [d]. On sign
vectors, such a teacher concentrates Fourier mass on the full parities of its
own blocks — quantities a degree-limited or random feature map cannot pick up.
The module constructs instances, sampling partition collections with no
repeated block, computes the relevant Fourier coefficients exactly by
enumeration (with a full fast Walsh-Hadamard oracle at small d), and fits
relu random-feature and degree-2 polynomial ridge baselines for the
network-vs-kernel comparison.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Activation, Dataset, TeacherNetwork, make_rng, teacher_label

__all__ = [
    "SubsetFamily",
    "HardnessInstance",
    "FeatureKind",
    "FeaturePredictor",
    "FitResult",
    "hadamard",
    "sample_subset_families",
    "build_instance",
    "lambda_mu",
    "lambda_star",
    "block_fourier_mass",
    "full_fourier_coefficients",
    "random_feature_fit",
]

ENUM_MAX_R = 24
FULL_ENUM_MAX_D = 12
MAX_FAMILY_RETRIES = 200


@dataclass(frozen=True)
class SubsetFamily:
    """Collections of disjoint r-subsets partitioning [d], no subset repeated.

    Each collection is a full partition of {0, ..., d-1} into d/r blocks of
    size r (canonical: blocks sorted internally and by first element); across
    all collections every block is distinct. n_rejections counts collections
    that were resampled due to a duplicate block.
    """

    d: int
    r: int
    families: tuple
    n_rejections: int = 0

    def __post_init__(self):
        seen = set()
        for coll in self.families:
            covered = set()
            for block in coll:
                if len(block) != self.r:
                    raise ValueError(f"block {block} does not have size {self.r}")
                if tuple(block) != tuple(sorted(block)):
                    raise ValueError(f"block {block} is not sorted")
                if covered & set(block):
                    raise ValueError(f"block {block} overlaps another in {coll}")
                covered |= set(block)
                if block in seen:
                    raise ValueError(f"block {block} appears in two collections")
                seen.add(block)
            if covered != set(range(self.d)):
                raise ValueError("collection does not partition [d]")


@dataclass(frozen=True)
class HardnessInstance:
    """An absolute-value teacher whose directions are block-embedded Hadamard columns."""

    teacher: TeacherNetwork
    blocks: tuple
    r: int

    @property
    def d(self) -> int:
        return self.teacher.d


class FeatureKind(enum.Enum):
    RELU = "relu"
    POLY = "poly"

    @classmethod
    def parse(cls, value) -> "FeatureKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown feature kind {value!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None


def hadamard(r: int) -> np.ndarray:
    """The r x r Sylvester Hadamard matrix with unit-norm columns (entries ±1/sqrt r)."""
    if r < 1 or r & (r - 1):
        raise ValueError(f"r must be a power of 2, got {r}")
    H = np.array([[1.0]])
    while H.shape[0] < r:
        H = np.block([[H, H], [H, -H]])
    return H / math.sqrt(r)


def sample_subset_families(d: int, r: int, Q: int, seed: int = 0) -> SubsetFamily:
    """Q uniformly random partitions of [d] into r-blocks, all blocks distinct.

    Each collection is drawn by shuffling [d] and chunking; a collection that
    repeats any previously seen block is rejected and redrawn (bounded
    retries). Requires r | d and r^2 <= d — except the degenerate one-block
    case d == r, where the only partition exists and Q must be 1.
    """
    if Q < 1:
        raise ValueError(f"Q must be >= 1, got {Q}")
    if r < 1 or d < 1 or d % r:
        raise ValueError(f"r must divide d, got d={d}, r={r}")
    if r * r > d and not (d == r and Q == 1):
        raise ValueError(
            f"need r^2 <= d for distinct random blocks (got d={d}, r={r}); "
            "the single-partition case d == r is allowed only with Q=1"
        )
    rng = make_rng(seed)
    seen: set[tuple] = set()
    families = []
    rejections = 0
    for _ in range(Q):
        for attempt in range(MAX_FAMILY_RETRIES + 1):
            perm = rng.permutation(d)
            blocks = tuple(
                sorted(
                    tuple(sorted(int(x) for x in perm[lo : lo + r]))
                    for lo in range(0, d, r)
                )
            )
            if all(b not in seen for b in blocks):
                seen.update(blocks)
                families.append(blocks)
                break
            rejections += 1
        else:
            raise ValueError(
                f"could not draw {Q} collections with distinct blocks at "
                f"d={d}, r={r} within {MAX_FAMILY_RETRIES} retries per "
                "collection; Q is too large for this dimension"
            )
    return SubsetFamily(
        d=d, r=r, families=tuple(families), n_rejections=rejections
    )


def build_instance(d: int, r: int, seed: int = 0) -> HardnessInstance:
    """A hard teacher: one random partition, Hadamard columns per block, b ~ U[1,2].

    Neuron p*r + q carries the q-th Hadamard column on the coordinates of
    block p (so W* is exactly orthonormal), and a = b / sum(b) puts every
    weight in [1/(2d), 2/d].
    """
    family = sample_subset_families(d, r, 1, seed=seed)
    blocks = family.families[0]
    H = hadamard(r)
    W = np.zeros((d, d))
    for p, block in enumerate(blocks):
        idx = np.array(block)
        for q in range(r):
            W[p * r + q, idx] = H[:, q]
    b = make_rng(seed, stream=1).uniform(1.0, 2.0, size=d)
    a = b / b.sum()
    teacher = TeacherNetwork(
        d=d, a=a, w_star=W, activation=Activation.ABS, kappa=2.0
    )
    return HardnessInstance(teacher=teacher, blocks=blocks, r=r)


def _check_enum_r(r: int):
    if r > ENUM_MAX_R:
        raise ValueError(
            f"exact enumeration is capped at r={ENUM_MAX_R} (2^r terms); got {r}"
        )
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")


def _signed_parity_mean(P: np.ndarray, q: np.ndarray, backend: str | None = None) -> float:
    """E over sign vectors tau of (prod_i tau_i) * sum_k q_k |<P_k, tau>|."""
    return _kernels.parity_weighted_mean(
        np.ascontiguousarray(P, dtype=np.float64),
        np.ascontiguousarray(q, dtype=np.float64),
        backend=backend,
    )


def lambda_mu(mu, backend: str | None = None) -> float:
    """|E_tau[ |<mu, tau>| * prod_i tau_i ]| over tau uniform on {-1,1}^r, exactly."""
    mu = np.asarray(mu, dtype=np.float64).ravel()
    _check_enum_r(mu.shape[0])
    return abs(_signed_parity_mean(mu[None, :], np.ones(1), backend))


def lambda_star(
    p_list, q_list, mu, signed: bool = False, backend: str | None = None
) -> float:
    """Fourier coefficient of F(tau) = sum_k q_k |<p_k ∘ mu, tau>| on the full parity.

    Exact 2^r enumeration; returns the absolute value unless ``signed``.
    """
    P = np.atleast_2d(np.asarray(p_list, dtype=np.float64))
    q = np.asarray(q_list, dtype=np.float64).ravel()
    mu = np.asarray(mu, dtype=np.float64).ravel()
    r = mu.shape[0]
    _check_enum_r(r)
    if P.shape != (q.shape[0], r):
        raise ValueError(
            f"need {q.shape[0]} direction vectors of length {r}, got {P.shape}"
        )
    val = _signed_parity_mean(P * mu[None, :], q, backend)
    return val if signed else abs(val)


def block_fourier_mass(
    instance: HardnessInstance, xbar, backend: str | None = None
) -> tuple[dict[tuple, float], float]:
    """Signed full-parity Fourier coefficients per block of f*(xbar ∘ tau), and their mass.

    The teacher factorizes across blocks: each block's coefficient sees only
    its own r neurons, so a 2^r enumeration per block is exact. Returns
    ({block: coefficient}, sum of squared coefficients).
    """
    xbar = np.asarray(xbar, dtype=np.float64).ravel()
    if xbar.shape[0] != instance.d:
        raise ValueError(f"xbar has dimension {xbar.shape[0]}, expected {instance.d}")
    _check_enum_r(instance.r)
    teacher = instance.teacher
    r = instance.r
    coeffs: dict[tuple, float] = {}
    for p, block in enumerate(instance.blocks):
        idx = np.array(block)
        rows = slice(p * r, (p + 1) * r)
        P = teacher.w_star[rows][:, idx] * xbar[idx][None, :]
        q = teacher.a[rows]
        coeffs[block] = _signed_parity_mean(P, q, backend)
    mass = float(np.sum(np.fromiter((v * v for v in coeffs.values()), dtype=np.float64)))
    return coeffs, mass


def full_fourier_coefficients(instance: HardnessInstance, xbar) -> np.ndarray:
    """All 2^d Fourier coefficients of tau -> f*(xbar ∘ tau), via a fast transform.

    Index S (bitmask over coordinates) holds the coefficient of
    prod_{j in S} tau_j, with tau_j = (-1)^{bit j}. Independent full
    enumeration used as the oracle for the per-block computation; capped at
    d <= 12.
    """
    d = instance.d
    if d > FULL_ENUM_MAX_D:
        raise ValueError(f"full enumeration is capped at d={FULL_ENUM_MAX_D}, got {d}")
    xbar = np.asarray(xbar, dtype=np.float64).ravel()
    if xbar.shape[0] != d:
        raise ValueError(f"xbar has dimension {xbar.shape[0]}, expected {d}")
    codes = np.arange(1 << d, dtype=np.uint64)
    signs = np.empty((1 << d, d))
    for j in range(d):
        signs[:, j] = 1.0 - 2.0 * ((codes >> np.uint64(j)) & np.uint64(1)).astype(np.float64)
    values = teacher_label(instance.teacher, signs * xbar[None, :])
    # In-place fast Walsh-Hadamard butterfly.
    spectrum_ = values.copy()
    h = 1
    while h < (1 << d):
        for lo in range(0, 1 << d, 2 * h):
            x = spectrum_[lo : lo + h].copy()
            y = spectrum_[lo + h : lo + 2 * h].copy()
            spectrum_[lo : lo + h] = x + y
            spectrum_[lo + h : lo + 2 * h] = x - y
        h *= 2
    return spectrum_ / (1 << d)


@dataclass(frozen=True)
class FeaturePredictor:
    """A fitted linear model over a fixed feature map."""

    kind: FeatureKind
    coef: np.ndarray
    directions: np.ndarray | None
    d: int

    def features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"inputs must be (n, {self.d}), got {X.shape}")
        if self.kind is FeatureKind.RELU:
            return np.maximum(X @ self.directions.T, 0.0)
        n = X.shape[0]
        cols = [np.ones(n)] + [X[:, i] for i in range(self.d)]
        for i in range(self.d):
            for j in range(i, self.d):
                cols.append(X[:, i] * X[:, j])
        return np.column_stack(cols)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.features(X) @ self.coef


@dataclass(frozen=True)
class FitResult:
    predictor: FeaturePredictor
    loss: float
    loss_stderr: float


def poly_feature_count(d: int) -> int:
    """Number of monomials of degree <= 2 in d variables."""
    return 1 + d + d * (d + 1) // 2


def random_feature_fit(
    dataset: Dataset,
    teacher: TeacherNetwork,
    n_features: int,
    kind: FeatureKind | str = FeatureKind.RELU,
    ridge: float = 0.0,
    seed: int = 0,
    n_mc: int = 200_000,
    mc_seed: int = 0,
) -> FitResult:
    """Ridge-fit a feature-map predictor and Monte-Carlo its population loss.

    Relu features phi_k(x) = relu(<g_k, x>) with g_k ~ N(0, I/d); polynomial
    features are every monomial of degree <= 2 (n_features is ignored there —
    the basis is complete). The reported loss is E[(pred(x) - f*(x))^2] over
    fresh Gaussian inputs, with its standard error.
    """
    kind = FeatureKind.parse(kind)
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    X = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.float64)
    d = X.shape[1]
    if d != teacher.d:
        raise ValueError(f"dataset dimension {d} != teacher dimension {teacher.d}")
    if kind is FeatureKind.RELU:
        if n_features < 1:
            raise ValueError(f"n_features must be >= 1, got {n_features}")
        directions = make_rng(seed).standard_normal((n_features, d)) / math.sqrt(d)
    else:
        directions = None
    proto = FeaturePredictor(
        kind=kind, coef=np.zeros(0), directions=directions, d=d
    )
    Phi = proto.features(X)
    gram = Phi.T @ Phi
    if ridge > 0.0:
        gram = gram + ridge * np.eye(gram.shape[0])
    rhs = Phi.T @ y
    try:
        chol = np.linalg.cholesky(gram)
        coef = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    except np.linalg.LinAlgError:
        raise ValueError(
            "feature Gram matrix is singular; pass ridge > 0 to regularize"
        ) from None
    predictor = FeaturePredictor(
        kind=kind, coef=coef, directions=directions, d=d
    )
    rng = make_rng(mc_seed, stream=2)
    total = 0.0
    total_sq = 0.0
    seen = 0
    batch = 65536
    while seen < n_mc:
        b = min(batch, n_mc - seen)
        Xb = rng.standard_normal((b, d))
        res = predictor.predict(Xb) - teacher_label(teacher, Xb)
        sq = res * res
        total += float(sq.sum())
        total_sq += float(sq @ sq)
        seen += b
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0)
    return FitResult(
        predictor=predictor, loss=mean, loss_stderr=math.sqrt(var / n_mc)
    )
