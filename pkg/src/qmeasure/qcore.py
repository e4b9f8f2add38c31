"""Dense complex linear algebra and measure primitives for measurement models.

Everything in this package works with plain ``numpy`` arrays of dtype
``complex128``.  Composite spaces use a system-major Kronecker convention:
for an operator on ``H_S (x) K`` the row index is ``i_s * dim_k + i_k``,
which is exactly what :func:`tensor_product` (``numpy.kron``) produces.

Outcome sets are finite and ordered.  A measure is just a weight table over
the atoms of an :class:`OutcomeSpace`; the ordering is load-bearing because
sampling and serialization both walk atoms in declared order.

All values are immutable after construction and all operations are pure
functions, so anything here may be shared across threads freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

__all__ = [
    "DEFAULT_TOL",
    "CLUSTER_TOL",
    "PSD_FLOOR",
    "ZERO_PROBABILITY",
    "DimensionMismatch",
    "NotHermitian",
    "NotIsometric",
    "NotUnitaryMatrix",
    "NotAbsolutelyContinuous",
    "NotOrthonormal",
    "ZeroProbabilityEvent",
    "OutcomeSpace",
    "FiniteMeasure",
    "ComplexMeasure",
    "DensityOperator",
    "UnitaryOperator",
    "ProjectionValuedMeasure",
    "SpectralCluster",
    "tensor_product",
    "partial_expectation",
    "spectral_decompose",
    "complete_to_unitary",
    "radon_nikodym",
    "dag",
    "max_abs",
    "align_global_phase",
]

# Default numerical tolerances.  Algebraic identity checks use DEFAULT_TOL,
# eigenvalue clustering uses CLUSTER_TOL, positive semidefiniteness allows
# eigenvalues down to -PSD_FLOOR, and probabilities at or below
# ZERO_PROBABILITY are treated as zero events.  Every operation that checks
# a tolerance accepts an override.
DEFAULT_TOL = 1e-9
CLUSTER_TOL = 1e-8
PSD_FLOOR = 1e-9
ZERO_PROBABILITY = 1e-12


class DimensionMismatch(ValueError):
    """Operands live on spaces of incompatible dimensions."""


class NotHermitian(ValueError):
    """A matrix expected to be Hermitian is not, beyond tolerance."""


class NotIsometric(ValueError):
    """Columns expected to be orthonormal are not, beyond tolerance."""


class NotUnitaryMatrix(ValueError):
    """A matrix expected to be unitary is not, beyond tolerance."""


class NotAbsolutelyContinuous(ValueError):
    """A measure charges an atom where its base measure vanishes."""


class NotOrthonormal(ValueError):
    """A vector or table family violates its orthonormality relations."""


class ZeroProbabilityEvent(ValueError):
    """A conditional quantity was requested on an event of zero probability."""


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-d complex array and check entries are finite."""
    arr = np.array(a, dtype=complex)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _as_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.array(a, dtype=complex).reshape(-1)
    if arr.size < 1:
        raise DimensionMismatch(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.asarray(a).conj().T


def max_abs(a) -> float:
    """Largest entry magnitude; 0.0 for empty input."""
    arr = np.asarray(a)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


# ---------------------------------------------------------------------------
# Outcome spaces and measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutcomeSpace:
    """Finite ordered set of outcome labels.

    Labels are opaque strings.  The order fixed here is the order used by
    samplers, serializers and every per-atom table in the package.
    """

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if len(labels) < 1:
            raise ValueError("outcome space needs at least one atom")
        if len(set(labels)) != len(labels):
            raise ValueError("outcome labels must be distinct")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown outcome label {label!r}") from None

    def __contains__(self, label) -> bool:
        return label in self.labels

    def __iter__(self):
        return iter(self.labels)


@dataclass(frozen=True)
class FiniteMeasure:
    """Nonnegative weight per atom with positive total mass."""

    space: OutcomeSpace
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != self.space.size:
            raise DimensionMismatch(
                f"measure has {len(w)} weights for {self.space.size} atoms"
            )
        if any(not np.isfinite(x) for x in w):
            raise ValueError("measure weights must be finite")
        if any(x < 0 for x in w):
            raise ValueError("measure weights must be nonnegative")
        if sum(w) <= 0:
            raise ValueError("measure must have positive total mass")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_dict(cls, space: OutcomeSpace, table: dict) -> "FiniteMeasure":
        return cls(space, tuple(float(table.get(lab, 0.0)) for lab in space.labels))

    @classmethod
    def uniform(cls, space: OutcomeSpace, weight: float = 1.0) -> "FiniteMeasure":
        """Weight ``weight`` on every atom."""
        return cls(space, (float(weight),) * space.size)

    def weight(self, label: str) -> float:
        return self.weights[self.space.index(label)]

    @property
    def total(self) -> float:
        return float(sum(self.weights))

    @property
    def support(self) -> tuple[str, ...]:
        return tuple(l for l, w in zip(self.space.labels, self.weights) if w > 0)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=float)


@dataclass(frozen=True)
class ComplexMeasure:
    """Complex value per atom (finitely additive by construction)."""

    space: OutcomeSpace
    values: tuple[complex, ...]

    def __post_init__(self):
        v = tuple(complex(x) for x in self.values)
        if len(v) != self.space.size:
            raise DimensionMismatch(
                f"measure has {len(v)} values for {self.space.size} atoms"
            )
        if any(not (np.isfinite(x.real) and np.isfinite(x.imag)) for x in v):
            raise ValueError("measure values must be finite")
        object.__setattr__(self, "values", v)

    def value(self, label: str) -> complex:
        return self.values[self.space.index(label)]

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=complex)


# ---------------------------------------------------------------------------
# Operator types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive unit-trace operator (a quantum state).

    Parameters
    ----------
    matrix : array_like
        Square complex matrix.  Must be Hermitian within ``tol``, have
        eigenvalues above ``-PSD_FLOOR`` and trace 1 within ``tol``.
    """

    matrix: np.ndarray
    tol: float = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = _as_matrix(self.matrix, "density matrix")
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch("density matrix must be square")
        if max_abs(m - dag(m)) > self.tol:
            raise NotHermitian("density matrix is not Hermitian within tolerance")
        eigs = np.linalg.eigvalsh(0.5 * (m + dag(m)))
        if eigs.min() < -PSD_FLOOR:
            raise ValueError(
                f"density matrix has negative eigenvalue {eigs.min():.3e}"
            )
        if abs(np.trace(m).real - 1.0) > max(self.tol, 1e-9) or abs(np.trace(m).imag) > self.tol:
            raise ValueError(f"density matrix trace {np.trace(m):.12g} is not 1")
        object.__setattr__(self, "matrix", _freeze(m))

    @classmethod
    def pure(cls, psi) -> "DensityOperator":
        """Rank-1 state |psi><psi| from a unit vector."""
        v = _as_vector(psi, "state vector")
        n = np.linalg.norm(v)
        if abs(n - 1.0) > 1e-8:
            raise ValueError(f"state vector norm {n:.12g} is not 1")
        return cls(np.outer(v, v.conj()))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class UnitaryOperator:
    """Square matrix with U^dag U = I within tolerance."""

    matrix: np.ndarray
    tol: float = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = _as_matrix(self.matrix, "unitary matrix")
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch("unitary matrix must be square")
        dev = max_abs(dag(m) @ m - np.eye(m.shape[0]))
        if dev > self.tol:
            raise NotUnitaryMatrix(
                f"matrix is not unitary: max |U^dag U - I| = {dev:.3e}"
            )
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class ProjectionValuedMeasure:
    """One orthogonal projection per atom, resolving the identity.

    The atoms must be Hermitian idempotents, mutually orthogonal, and sum
    to the identity, each within ``tol``.  Zero atoms (rank 0) are allowed;
    they are simply outside the support.
    """

    space: OutcomeSpace
    blocks: tuple[np.ndarray, ...]
    tol: float = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(_as_matrix(b, "projection") for b in self.blocks)
        if len(blocks) != self.space.size:
            raise DimensionMismatch(
                f"{len(blocks)} projections for {self.space.size} atoms"
            )
        d = blocks[0].shape[0]
        for lab, p in zip(self.space.labels, blocks):
            if p.shape != (d, d):
                raise DimensionMismatch(f"projection at {lab!r} has shape {p.shape}")
            if max_abs(p - dag(p)) > self.tol:
                raise NotHermitian(f"projection at {lab!r} is not Hermitian")
            if max_abs(p @ p - p) > self.tol:
                raise ValueError(f"projection at {lab!r} is not idempotent")
        for a in range(len(blocks)):
            for b in range(a + 1, len(blocks)):
                if max_abs(blocks[a] @ blocks[b]) > self.tol:
                    raise ValueError(
                        f"projections at {self.space.labels[a]!r} and "
                        f"{self.space.labels[b]!r} are not orthogonal"
                    )
        total = sum(blocks)
        if max_abs(total - np.eye(d)) > self.tol:
            raise ValueError("projections do not sum to the identity")
        object.__setattr__(self, "blocks", tuple(_freeze(b) for b in blocks))

    @property
    def dim(self) -> int:
        return self.blocks[0].shape[0]

    def block(self, label: str) -> np.ndarray:
        return self.blocks[self.space.index(label)]

    def rank(self, label: str) -> int:
        return int(round(np.trace(self.block(label)).real))

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(int(round(np.trace(b).real)) for b in self.blocks)

    @property
    def support(self) -> tuple[str, ...]:
        return tuple(l for l, r in zip(self.space.labels, self.ranks) if r > 0)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product with the left factor major.

    For matrices A (on the system) and B (on the ancilla) the result acts on
    the composite space with row index ``i_a * rows(b) + i_b``.  Vectors are
    combined the same way.
    """
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_expectation(q, s, *, dim_k: int | None = None) -> np.ndarray:
    """Average an operator on system (x) ancilla over an ancilla state.

    Returns the unique system operator ``E_s[q]`` with
    ``tr[rho . E_s[q]] = tr[(rho (x) s) . q]`` for every system state rho.
    For a product input this reduces to ``E_s[A (x) B] = A . tr[s B]``.

    Parameters
    ----------
    q : array_like
        Operator on the composite space, system-major indexing.
    s : DensityOperator or array_like
        Weighting operator on the ancilla.  Normally a state; any square
        matrix of matching dimension is accepted.
    dim_k : int, optional
        Ancilla dimension.  Defaults to the dimension of ``s``.

    Raises
    ------
    DimensionMismatch
        If the composite dimension is not a multiple of the ancilla one.
    """
    s_mat = s.matrix if isinstance(s, DensityOperator) else _as_matrix(s, "ancilla operator")
    qm = _as_matrix(q, "composite operator")
    dk = dim_k if dim_k is not None else s_mat.shape[0]
    if s_mat.shape != (dk, dk):
        raise DimensionMismatch("ancilla operator does not match ancilla dimension")
    d = qm.shape[0]
    if qm.shape[0] != qm.shape[1] or d % dk != 0:
        raise DimensionMismatch(
            f"composite dimension {qm.shape} is not compatible with ancilla dim {dk}"
        )
    ds = d // dk
    q4 = qm.reshape(ds, dk, ds, dk)
    # E_s[q]_{ab} = sum_{k,l} s_{lk} q_{(a,k),(b,l)}
    return np.einsum("lk,akbl->ab", s_mat, q4)


class SpectralCluster(NamedTuple):
    """One clustered eigenvalue: representative value, multiplicity, basis."""

    value: float
    multiplicity: int
    vectors: np.ndarray  # d x multiplicity, orthonormal columns


def spectral_decompose(
    h, cluster_tol: float = CLUSTER_TOL, *, tol: float = DEFAULT_TOL
) -> list[SpectralCluster]:
    """Eigendecomposition with nearby eigenvalues merged into one cluster.

    Eigenvalues whose gap (after sorting) is at most ``cluster_tol`` are
    treated as one degenerate level; the reported value is the cluster mean
    and the eigenvector block is orthonormal.  Entries come back sorted by
    eigenvalue, descending.

    Raises
    ------
    NotHermitian
        If ``max |h - h^dag|`` exceeds ``tol``.
    """
    m = _as_matrix(h, "hermitian matrix")
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch("expected a square matrix")
    if max_abs(m - dag(m)) > tol:
        raise NotHermitian(f"matrix is not Hermitian within {tol:g}")
    vals, vecs = np.linalg.eigh(0.5 * (m + dag(m)))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    clusters: list[SpectralCluster] = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i - 1] - vals[i] > cluster_tol:
            block = vecs[:, start:i]
            clusters.append(
                SpectralCluster(float(np.mean(vals[start:i])), i - start, _freeze(block.copy()))
            )
            start = i
    return clusters


def complete_to_unitary(columns, tol: float = DEFAULT_TOL) -> UnitaryOperator:
    """Extend an isometric block of columns to a full unitary.

    The first ``r`` columns of the result are the input columns, unchanged
    bit for bit.  The remaining columns come from Gram-Schmidt against the
    standard basis scanned in index order, skipping candidates that are
    already spanned (residual norm below an internal cutoff).  The rule is
    deterministic, so repeated runs give identical completions.

    Raises
    ------
    NotIsometric
        If ``columns^dag . columns`` deviates from the identity by more
        than ``tol``.
    """
    c = _as_matrix(columns, "isometric columns")
    d, r = c.shape
    if r > d:
        raise NotIsometric(f"cannot fit {r} orthonormal columns in dimension {d}")
    dev = max_abs(dag(c) @ c - np.eye(r))
    if dev > tol:
        raise NotIsometric(f"columns are not isometric: max deviation {dev:.3e}")
    basis = [c[:, j].copy() for j in range(r)]
    for j in range(d):
        if len(basis) == d:
            break
        v = np.zeros(d, dtype=complex)
        v[j] = 1.0
        for _ in range(2):  # re-orthogonalize for stability
            for u in basis:
                v = v - u * np.vdot(u, v)
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            basis.append(v / nrm)
    if len(basis) != d:
        raise NotIsometric("completion failed: input columns too ill-conditioned")
    out = np.column_stack(basis)
    out[:, :r] = c  # keep the caller's columns exactly
    return UnitaryOperator(out, max(10 * tol, DEFAULT_TOL))


def radon_nikodym(
    mu: Union[FiniteMeasure, ComplexMeasure], base: FiniteMeasure
) -> np.ndarray:
    """Density of ``mu`` against ``base``, atom by atom.

    On atoms where the base vanishes the numerator must vanish too (up to
    ``ZERO_PROBABILITY``); the density is set to 0 there.

    Raises
    ------
    NotAbsolutelyContinuous
        If ``mu`` charges an atom outside the support of ``base``.
    DimensionMismatch
        If the two measures live on different outcome spaces.
    """
    if mu.space != base.space:
        raise DimensionMismatch("measures live on different outcome spaces")
    num = mu.as_array()
    den = base.as_array()
    out = np.zeros(len(den), dtype=num.dtype)
    for i, lab in enumerate(base.space.labels):
        if den[i] > 0:
            out[i] = num[i] / den[i]
        elif abs(num[i]) > ZERO_PROBABILITY:
            raise NotAbsolutelyContinuous(
                f"measure charges atom {lab!r} where the base measure vanishes"
            )
    return out


def align_global_phase(
    reference: Sequence[np.ndarray], other: Sequence[np.ndarray]
) -> tuple[complex, float]:
    """Best single phase factor aligning one operator table with another.

    Picks the phase from the entrywise inner product of largest magnitude
    among the paired tables (a closed form, no search), multiplies ``other``
    by it, and reports the remaining max-abs deviation.

    Returns
    -------
    (phase, deviation)
        ``phase`` is the unit complex factor applied to ``other``;
        ``deviation`` is ``max |reference - phase * other|``.
    """
    best = 0.0 + 0.0j
    for a, b in zip(reference, other):
        z = complex(np.vdot(np.asarray(b), np.asarray(a)))  # <b, a>
        if abs(z) > abs(best):
            best = z
    phase = best / abs(best) if abs(best) > 0 else 1.0 + 0.0j
    dev = 0.0
    for a, b in zip(reference, other):
        dev = max(dev, max_abs(np.asarray(a) - phase * np.asarray(b)))
    return phase, dev
