"""Shared fixtures: canonical two-outcome instruments and random generators."""

import numpy as np
import pytest

from qmeasure import (
    DensityOperator,
    KrausInstrument,
    OutcomeSpace,
    ProjectionValuedMeasure,
    StatisticalRealization,
    UnitaryOperator,
    von_neumann_instrument,
)

P_PLUS = np.array([[1, 0], [0, 0]], dtype=complex)
P_MINUS = np.array([[0, 0], [0, 1]], dtype=complex)
PSI_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
AD_0 = np.array([[1, 0], [0, np.sqrt(0.5)]], dtype=complex)
AD_1 = np.array([[0, np.sqrt(0.5)], [0, 0]], dtype=complex)


def rand_unitary(n, rng):
    """Haar-ish unitary via QR with the standard phase fix."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d)).conj()


def rand_state(n, rng):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def rand_density(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    m = a @ a.conj().T
    return DensityOperator(m / np.trace(m).real)


def rand_instrument(rng, dim=2, max_atoms=3, max_kraus=2):
    """Random valid instrument: Ginibre Kraus pieces whitened to completeness."""
    n_atoms = int(rng.integers(1, max_atoms + 1))
    labels = tuple(f"w{j}" for j in range(n_atoms))
    raw = []
    for _ in range(n_atoms):
        cnt = int(rng.integers(1, max_kraus + 1))
        raw.append([rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
                    for _ in range(cnt)])
    total = sum(a.conj().T @ a for ops in raw for a in ops)
    vals, vecs = np.linalg.eigh(total)
    whiten = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.conj().T
    table = {lab: [a @ whiten for a in ops] for lab, ops in zip(labels, raw)}
    return KrausInstrument(OutcomeSpace(labels), table, dim)


def rand_pvm(space, dim_k, rng):
    """Random PVM on C^dim_k: a Haar basis partitioned over the atoms.

    Every atom receives at least one basis vector, so supports are full.
    """
    m = space.size
    if dim_k < m:
        raise ValueError("need dim_k >= number of atoms")
    u = rand_unitary(dim_k, rng)
    cuts = np.sort(rng.choice(np.arange(1, dim_k), size=m - 1, replace=False))
    bounds = np.concatenate(([0], cuts, [dim_k]))
    blocks = []
    for j in range(m):
        cols = u[:, bounds[j]:bounds[j + 1]]
        blocks.append(cols @ cols.conj().T)
    return ProjectionValuedMeasure(space, tuple(blocks))


def rand_realization(rng, dim_s=2, dim_k=3, n_atoms=2):
    space = OutcomeSpace(tuple(f"w{j}" for j in range(n_atoms)))
    s = rand_density(dim_k, rng)
    p = rand_pvm(space, dim_k, rng)
    u = UnitaryOperator(rand_unitary(dim_s * dim_k, rng))
    return StatisticalRealization(dim_s, s, p, u)


def superop(ops):
    """Matrix of rho -> sum A rho A^dag on row-major vec; map-equality oracle."""
    d = ops[0].shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    for a in ops:
        out += np.kron(a, a.conj())
    return out


def maps_equal(t1, t2, tol=1e-9):
    """Instrument equality oracle, independent of the Choi-based code path."""
    if t1.space.labels != t2.space.labels:
        return False
    for ops1, ops2 in zip(t1.kraus, t2.kraus):
        d = t1.dim
        s1 = superop(list(ops1)) if ops1 else np.zeros((d * d, d * d), dtype=complex)
        s2 = superop(list(ops2)) if ops2 else np.zeros((d * d, d * d), dtype=complex)
        if np.max(np.abs(s1 - s2)) > tol:
            return False
    return True


@pytest.fixture
def rng():
    """Fresh deterministic generator per test."""
    return np.random.default_rng(20260825)


@pytest.fixture
def fix_z():
    """Projective Z measurement on a qubit."""
    return von_neumann_instrument([("+1", P_PLUS), ("-1", P_MINUS)])


@pytest.fixture
def fix_ad():
    """Amplitude damping with decay probability one half."""
    space = OutcomeSpace(("0", "1"))
    return KrausInstrument(space, {"0": [AD_0], "1": [AD_1]}, 2)


@pytest.fixture
def fix_iso():
    """Single-outcome Hadamard rotation."""
    return KrausInstrument(OutcomeSpace(("w0",)), {"w0": [HADAMARD]}, 2)
