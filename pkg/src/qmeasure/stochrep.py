"""Stochastic presentations of instruments and their factorized forms.

A stochastic realization carries the measurement data with the ancilla
integrated out: channel weights with multiplicities, a base measure over
outcomes, a scalar density table q and an operator table W.  The induced
instrument has Kraus operators ``sqrt(beta_i nu(w)) W[i,k,n](w)``.

Two realizations present the same measurement when they differ by the gauge
moves implemented in :func:`apply_transform`: per-atom unitary mixing of the
block index, per-channel unitary mixing of the multiplicity index, a global
phase on the operator table, and a change of equivalent base measure.  The
quantities preserved by those moves live in :class:`SRInvariants`.

A realization is *factorizable* when each channel's operator table splits as
``W[i,k,n](w) = Pi_i(w) q[i,k,n](w)`` with a single operator per channel and
atom.  :func:`factorize` detects this, extracts the phase-normalized Pi
family together with the channel densities, and verifies the result against
the instrument; the failure case is returned as a value so callers can
report which channel and atom obstructed the split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .qcore import (
    CLUSTER_TOL,
    DEFAULT_TOL,
    ZERO_PROBABILITY,
    DimensionMismatch,
    FiniteMeasure,
    NotAbsolutelyContinuous,
    NotOrthonormal,
    NotUnitaryMatrix,
    OutcomeSpace,
    _freeze,
    align_global_phase,
    dag,
    max_abs,
)
from .instrument import IncompatibleOutcomeSpaces, KrausInstrument, instruments_equal
from .realization import StatisticalRealization, WeightMismatch, canonicalize, extract_vq

__all__ = [
    "StochasticRealization",
    "ChannelDensities",
    "SRInvariants",
    "QuantumStochasticRep",
    "NotFactorizable",
    "from_realization",
    "instrument_of_sr",
    "apply_transform",
    "sr_invariants",
    "equivalent",
    "factorize",
    "qsr_instrument",
    "from_channel_operators",
]


def _masked_tables(q, w, beta, multiplicity):
    """Coerce tables to padded arrays with zeros outside the valid index ranges."""
    q = np.array(q, dtype=complex)
    w = np.array(w, dtype=complex)
    if q.ndim != 4 or w.ndim != 6 or w.shape[:4] != q.shape:
        raise DimensionMismatch(
            f"expected q (C, k, n, atoms) and matching w (..., d, d); got {q.shape} and {w.shape}"
        )
    c_count, k_max, n_max, m = q.shape
    if len(beta) != c_count:
        raise WeightMismatch(f"{len(beta)} channel weights for {c_count} table channels")
    kmask = np.zeros((c_count, k_max))
    for i, (_, ki) in enumerate(beta):
        if ki > k_max:
            raise DimensionMismatch(f"channel {i} multiplicity {ki} exceeds table axis {k_max}")
        kmask[i, :ki] = 1.0
    nmask = np.zeros((n_max, m))
    for a, n_a in enumerate(multiplicity):
        if n_a > n_max:
            raise DimensionMismatch(f"atom {a} multiplicity {n_a} exceeds table axis {n_max}")
        nmask[:n_a, a] = 1.0
    full = kmask[:, :, None, None] * nmask[None, None, :, :]
    return q * full, w * full[:, :, :, :, None, None]


@dataclass(frozen=True, eq=False)
class StochasticRealization:
    """Channel weights, base measure and the q/W tables of a measurement.

    ``beta`` is a tuple of (weight, multiplicity) pairs; the weighted
    multiplicities must sum to 1.  Table axes are (channel, multiplicity
    index, block index, atom); entries beyond a channel's multiplicity or an
    atom's block size are forced to zero at construction.  Orthonormality of
    the tables is *not* enforced here; it is checked where it matters, in
    :func:`instrument_of_sr` and friends.
    """

    space: OutcomeSpace
    nu: FiniteMeasure
    beta: tuple[tuple[float, int], ...]
    multiplicity: tuple[int, ...]
    q: np.ndarray  # (C, k_max, n_max, M)
    w: np.ndarray  # (C, k_max, n_max, M, d_s, d_s)

    def __post_init__(self):
        beta = tuple((float(b), int(k)) for b, k in self.beta)
        if any(b <= 0 or k < 1 for b, k in beta):
            raise WeightMismatch("channel weights must be positive with multiplicity >= 1")
        if abs(sum(b * k for b, k in beta) - 1.0) > 1e-8:
            raise WeightMismatch(
                f"weighted multiplicities sum to {sum(b * k for b, k in beta):.12g}, not 1"
            )
        mult = tuple(int(n) for n in self.multiplicity)
        if len(mult) != self.space.size:
            raise DimensionMismatch("multiplicity profile must cover every atom")
        if self.nu.space != self.space:
            raise DimensionMismatch("base measure lives on a different outcome space")
        q, w = _masked_tables(self.q, self.w, beta, mult)
        if q.shape[3] != self.space.size:
            raise DimensionMismatch(
                f"tables cover {q.shape[3]} atoms, space has {self.space.size}"
            )
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "multiplicity", mult)
        object.__setattr__(self, "q", _freeze(q))
        object.__setattr__(self, "w", _freeze(w))

    @property
    def channel_count(self) -> int:
        return len(self.beta)

    @property
    def dim_s(self) -> int:
        return self.w.shape[-1]

    def _index_pairs(self) -> list[tuple[int, int]]:
        return [(i, k) for i, (_, ki) in enumerate(self.beta) for k in range(ki)]

    def orthonormality_deviations(self) -> tuple[float, float]:
        """(scalar, operator) orthonormality violations of the tables."""
        wgt = self.nu.as_array()
        pairs = self._index_pairs()
        eye = np.eye(self.dim_s)
        sdev = 0.0
        odev = 0.0
        for j, p in pairs:
            for i, k in pairs:
                target = 1.0 if (j, p) == (i, k) else 0.0
                g = np.einsum("nw,nw,w->", self.q[j, p].conj(), self.q[i, k], wgt)
                sdev = max(sdev, abs(g - target))
                go = np.einsum(
                    "nwab,nwac,w->bc", self.w[j, p].conj(), self.w[i, k], wgt
                )
                odev = max(odev, max_abs(go - target * eye))
        return sdev, odev


@dataclass(frozen=True, eq=False)
class ChannelDensities:
    """Pairwise scalar densities between channels, against the base measure.

    ``kp_blocks[j, i, k, p, a]`` is the block-summed product of channel j's
    k-th scalar table with channel i's p-th at atom a; ``channel[j, i, a]``
    averages the diagonal blocks with the 1/k_i normalization.  The family
    ``channel * nu`` integrates to the identity matrix over outcomes and is
    exactly the classical pre-measurement description of the channel mix,
    available through :meth:`premeasurement_state`.
    """

    space: OutcomeSpace
    nu: FiniteMeasure
    ks: tuple[int, ...]
    kp_blocks: np.ndarray  # (C, C, k_max, k_max, M)
    channel: np.ndarray  # (C, C, M)

    def __post_init__(self):
        object.__setattr__(self, "kp_blocks", _freeze(np.array(self.kp_blocks)))
        object.__setattr__(self, "channel", _freeze(np.array(self.channel)))

    @property
    def diagonal(self) -> np.ndarray:
        """p_i(w) = channel[i, i, w]; real and nonnegative up to rounding."""
        return np.einsum("iiw->iw", self.channel).real

    def premeasurement_state(self) -> np.ndarray:
        """The weighted family channel[j, i, w] * nu(w), shape (C, C, M)."""
        return self.channel * self.nu.as_array()

    def integral_deviation(self) -> float:
        """Max deviation of the outcome-integrated densities from the identity."""
        total = np.einsum("jiw,w->ji", self.channel, self.nu.as_array())
        return max_abs(total - np.eye(self.channel.shape[0]))


@dataclass(frozen=True, eq=False)
class SRInvariants:
    """Gauge-invariant record of a stochastic realization."""

    space: OutcomeSpace
    dim_s: int
    support: tuple[str, ...]
    multiplicity: tuple[int, ...]
    beta_profile: tuple[tuple[float, int], ...]
    densities: ChannelDensities
    channel_nu: np.ndarray  # (C, M)
    total_nu: np.ndarray  # (M,)
    channel_theta: np.ndarray  # (C, M, d_s, d_s)
    total_theta: np.ndarray  # (M, d_s, d_s)

    def __post_init__(self):
        for name in ("channel_nu", "total_nu", "channel_theta", "total_theta"):
            object.__setattr__(self, name, _freeze(np.array(getattr(self, name))))

    def sorted_channels(self, cluster_tol: float = CLUSTER_TOL):
        """Channels sorted by weight descending, equal weights merged.

        Merging matters because a weight appearing twice with multiplicity 1
        presents the same ancilla spectrum as once with multiplicity 2; the
        per-channel tables combine with multiplicity weighting.  Returns
        (profile, nu tables, theta tables).
        """
        order = sorted(
            range(len(self.beta_profile)),
            key=lambda i: -self.beta_profile[i][0],
        )
        merged: list[tuple[float, int, np.ndarray, np.ndarray]] = []
        for idx in order:
            b, k = self.beta_profile[idx]
            nu_t = self.channel_nu[idx]
            th_t = self.channel_theta[idx]
            if merged and abs(merged[-1][0] - b) <= cluster_tol:
                b0, k0, n0, t0 = merged[-1]
                merged[-1] = (b0, k0 + k, n0 + k * nu_t, t0 + k * th_t)
            else:
                merged.append((b, k, k * nu_t, k * th_t))
        profile = tuple((b, k) for b, k, _, _ in merged)
        nus = np.stack([n / k for _, k, n, _ in merged])
        thetas = np.stack([t / k for _, k, _, t in merged])
        return profile, nus, thetas


def from_realization(g: StatisticalRealization) -> StochasticRealization:
    """Forget the ancilla: keep the channel weights and the extracted tables."""
    cf = canonicalize(g)
    vq = extract_vq(g, cf)
    beta = tuple((a, k) for a, k in zip(vq.alphas, vq.ks))
    return StochasticRealization(
        cf.space, cf.nu, beta, cf.multiplicity, vq.q, vq.v
    )


def _check_orthonormal(sr: StochasticRealization, tol: float) -> None:
    sdev, odev = sr.orthonormality_deviations()
    if sdev > tol or odev > tol:
        raise NotOrthonormal(
            f"table orthonormality fails: scalar deviation {sdev:.3e}, "
            f"operator deviation {odev:.3e} (tol {tol:g})"
        )


def instrument_of_sr(
    sr: StochasticRealization, tol: float = DEFAULT_TOL
) -> KrausInstrument:
    """Instrument with Kraus operators sqrt(beta_i nu(w)) W[i,k,n](w).

    Raises
    ------
    NotOrthonormal
        If the q or W orthonormality relations fail beyond ``tol``
        (completeness of the result would fail with them).
    """
    _check_orthonormal(sr, tol)
    wgt = sr.nu.as_array()
    table = []
    for a in range(sr.space.size):
        ops = []
        n_a = sr.multiplicity[a]
        if n_a > 0 and wgt[a] > 0:
            for i, (b, ki) in enumerate(sr.beta):
                scale = np.sqrt(b * wgt[a])
                for k in range(ki):
                    for n in range(n_a):
                        ops.append(scale * sr.w[i, k, n, a])
        table.append(tuple(ops))
    return KrausInstrument(sr.space, tuple(table), sr.dim_s)


def _as_unitary_stack(mats, sizes, what: str, tol: float) -> list[np.ndarray]:
    """Validate a per-index family of unitary matrices of prescribed sizes."""
    out = []
    for idx, (m, size) in enumerate(zip(mats, sizes)):
        arr = np.array(m, dtype=complex)
        if arr.shape != (size, size):
            raise DimensionMismatch(
                f"{what} {idx} has shape {arr.shape}, expected ({size}, {size})"
            )
        dev = max_abs(dag(arr) @ arr - np.eye(size))
        if dev > tol:
            raise NotUnitaryMatrix(f"{what} {idx} is not unitary: deviation {dev:.3e}")
        out.append(arr)
    return out


def apply_transform(
    sr: StochasticRealization,
    z: Sequence | None = None,
    j: Sequence | None = None,
    phase: float = 0.0,
    new_base: FiniteMeasure | None = None,
    z_for_w: Sequence | None = None,
    j_for_w: Sequence | None = None,
    tol: float = DEFAULT_TOL,
) -> StochasticRealization:
    """Gauge transform of a stochastic realization.

    ``z`` holds one unitary per atom mixing the block index, ``j`` one
    unitary per channel mixing the multiplicity index; ``phase`` multiplies
    the operator table only.  Changing to an equivalent base measure rescales
    both tables by the square root of the density of the old base against
    the new one, so all weighted sums keep their values.

    By default the same matrices act on both tables, which preserves the
    whole invariant record.  Passing ``z_for_w``/``j_for_w`` lets the
    operator table rotate independently; that wider move still preserves
    the induced instrument but not the scalar-against-operator pairings.

    Raises
    ------
    NotUnitaryMatrix
        If a supplied matrix fails its unitarity check.
    NotAbsolutelyContinuous
        If ``new_base`` is not equivalent to the old base measure (their
        supports must agree).
    """
    c_count = sr.channel_count
    m = sr.space.size
    ks = [k for _, k in sr.beta]
    zs = (
        _as_unitary_stack(z, sr.multiplicity, "block mixer", tol)
        if z is not None
        else [np.eye(n, dtype=complex) for n in sr.multiplicity]
    )
    js = (
        _as_unitary_stack(j, ks, "channel mixer", tol)
        if j is not None
        else [np.eye(k, dtype=complex) for k in ks]
    )
    zw = _as_unitary_stack(z_for_w, sr.multiplicity, "block mixer (W)", tol) if z_for_w is not None else zs
    jw = _as_unitary_stack(j_for_w, ks, "channel mixer (W)", tol) if j_for_w is not None else js
    old_w = sr.nu.as_array()
    if new_base is None:
        nu2 = sr.nu
        jac = np.ones(m)
    else:
        if new_base.space != sr.space:
            raise DimensionMismatch("new base measure lives on a different outcome space")
        new_w = new_base.as_array()
        for lab, a, b in zip(sr.space.labels, old_w, new_w):
            if (a > 0) != (b > 0):
                raise NotAbsolutelyContinuous(
                    f"base measures are not equivalent: support differs at atom {lab!r}"
                )
        nu2 = new_base
        jac = np.sqrt(np.divide(old_w, new_w, out=np.zeros(m), where=new_w > 0))
    k_max, n_max = sr.q.shape[1], sr.q.shape[2]
    q2 = np.zeros_like(sr.q)
    w2 = np.zeros_like(sr.w)
    ph = np.exp(1j * phase)
    for i, ki in enumerate(ks):
        for a in range(m):
            n_a = sr.multiplicity[a]
            if n_a == 0:
                continue
            q_slice = sr.q[i, :ki, :n_a, a]  # (k, n)
            w_slice = sr.w[i, :ki, :n_a, a]  # (k, n, d, d)
            q2[i, :ki, :n_a, a] = jac[a] * np.einsum(
                "kp,nm,pm->kn", js[i], zs[a], q_slice
            )
            w2[i, :ki, :n_a, a] = (ph * jac[a]) * np.einsum(
                "kp,nm,pmab->knab", jw[i], zw[a], w_slice
            )
    return StochasticRealization(sr.space, nu2, sr.beta, sr.multiplicity, q2, w2)


def _channel_densities(sr: StochasticRealization) -> ChannelDensities:
    ks = np.array([k for _, k in sr.beta], dtype=float)
    kp = np.einsum("jknw,ipnw->jikpw", sr.q.conj(), sr.q)
    diag = np.einsum("jikkw->jiw", kp)
    channel = diag / ks[None, :, None]
    return ChannelDensities(sr.space, sr.nu, tuple(int(k) for k in ks), kp, channel)


def sr_invariants(sr: StochasticRealization) -> SRInvariants:
    """Channel densities and the per-channel measures of a realization."""
    dens = _channel_densities(sr)
    wgt = sr.nu.as_array()
    ks = np.array([k for _, k in sr.beta], dtype=float)
    channel_nu = dens.diagonal * wgt
    channel_theta = (
        np.einsum("iknwab,iknw,w->iwab", sr.w, sr.q.conj(), wgt)
        / ks[:, None, None, None]
    )
    mix = np.array([b * k for b, k in sr.beta])
    total_nu = np.einsum("c,cw->w", mix, channel_nu)
    total_theta = np.einsum("c,cwab->wab", mix, channel_theta)
    support = tuple(
        lab for lab, v in zip(sr.space.labels, wgt) if v > 0 and sr.multiplicity[sr.space.index(lab)] > 0
    )
    return SRInvariants(
        sr.space,
        sr.dim_s,
        support,
        sr.multiplicity,
        sr.beta,
        dens,
        channel_nu,
        total_nu,
        channel_theta,
        total_theta,
    )


def equivalent(
    sr1: StochasticRealization,
    sr2: StochasticRealization,
    tol: float = DEFAULT_TOL,
    cluster_tol: float = CLUSTER_TOL,
) -> bool:
    """Whether the two realizations carry the same invariant record.

    Compares outcome support, block multiplicities on the support, the
    weight profile as a multiset, the per-channel probability tables and the
    per-channel operator tables after aligning one global phase.  This is
    the full implemented criterion; it is necessary for gauge equivalence
    and exact on the transforms produced by :func:`apply_transform`.

    Raises
    ------
    IncompatibleOutcomeSpaces
        If the outcome spaces or system dimensions differ.
    """
    if sr1.space != sr2.space or sr1.dim_s != sr2.dim_s:
        raise IncompatibleOutcomeSpaces(
            "realizations live on different outcome spaces or dimensions"
        )
    r1 = sr_invariants(sr1)
    r2 = sr_invariants(sr2)
    if set(r1.support) != set(r2.support):
        return False
    for lab in r1.support:
        a = sr1.space.index(lab)
        if r1.multiplicity[a] != r2.multiplicity[a]:
            return False
    p1, nu1, th1 = r1.sorted_channels(cluster_tol)
    p2, nu2, th2 = r2.sorted_channels(cluster_tol)
    if len(p1) != len(p2):
        return False
    for (b1, k1), (b2, k2) in zip(p1, p2):
        if k1 != k2 or abs(b1 - b2) > cluster_tol:
            return False
    if max_abs(nu1 - nu2) > tol:
        return False
    _, dev = align_global_phase([th1, r1.total_theta], [th2, r2.total_theta])
    return dev <= tol


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantumStochasticRep:
    """Factorized measurement data: one operator per channel and atom.

    ``pi[i, a]`` is the phase-normalized channel operator, ``channel_nu`` the
    per-channel outcome probabilities, ``densities`` the full pairwise
    family.  ``q_factors`` records the scalar tables carrying the phases
    split off the operators, so ``pi * q_factors`` reproduces the source
    operator tables entrywise.
    """

    space: OutcomeSpace
    nu: FiniteMeasure
    profile: tuple[tuple[float, int], ...]  # (alpha, k) per channel
    pi: np.ndarray  # (C, M, d_s, d_s)
    channel_nu: np.ndarray  # (C, M)
    densities: ChannelDensities
    q_factors: np.ndarray  # (C, k_max, n_max, M)

    def __post_init__(self):
        for name in ("pi", "channel_nu", "q_factors"):
            object.__setattr__(self, name, _freeze(np.array(getattr(self, name))))

    @property
    def channel_count(self) -> int:
        return len(self.profile)

    @property
    def dim_s(self) -> int:
        return self.pi.shape[-1]

    def joint_orthonormality_deviation(self) -> float:
        """Worst violation of sum_w Pi_j^dag Pi_i p_ji(w) nu(w) = delta_ji I."""
        weighted = self.densities.premeasurement_state()  # (C, C, M)
        g = np.einsum("jwab,iwac,jiw->jibc", self.pi.conj(), self.pi, weighted)
        eye = np.einsum("ji,bc->jibc", np.eye(self.channel_count), np.eye(self.dim_s))
        return max_abs(g - eye)


@dataclass(frozen=True)
class NotFactorizable:
    """Witness that a realization's operator table does not split.

    Returned by :func:`factorize` instead of raising: failing to be of the
    factorized class is an answer, not an error.  Names the first channel
    and atom where the rank-1 split breaks down.
    """

    channel: int
    outcome: str
    reason: str
    residual: float

    def __bool__(self) -> bool:
        return False

    def __str__(self) -> str:
        return (
            f"not factorizable at channel {self.channel}, outcome {self.outcome!r}: "
            f"{self.reason} (residual {self.residual:.3e})"
        )


def factorize(
    sr: StochasticRealization, tol: float = CLUSTER_TOL
) -> Union[QuantumStochasticRep, NotFactorizable]:
    """Split each channel's operator table into one operator times scalars.

    Per channel i and atom w, the stacked operators {W[i,k,n](w)} must be
    scalar multiples of a common operator.  Detection is a rank test on the
    vectorized stack (second singular value at most ``tol`` times the
    first); the common operator is then read off as the ratio of the
    channel's operator measure to its probability measure, which needs no
    extra normalization.  Its first entry of largest magnitude is rotated to
    be real positive and the compensating phases move into the scalar
    factors, so gauge-equivalent inputs pin to the same representative.

    The assembled representation is verified before being returned: the
    pairwise-density orthonormality must hold and the rebuilt instrument
    must match the input's.  Any failure comes back as
    :class:`NotFactorizable` naming the obstruction.
    """
    inv = sr_invariants(sr)
    wgt = sr.nu.as_array()
    c_count = sr.channel_count
    m = sr.space.size
    ds = sr.dim_s
    pi = np.zeros((c_count, m, ds, ds), dtype=complex)
    q_fac = np.array(sr.q)
    for i, (_, ki) in enumerate(sr.beta):
        for a, lab in enumerate(sr.space.labels):
            n_a = sr.multiplicity[a]
            if n_a == 0 or wgt[a] == 0:
                continue
            stack = sr.w[i, :ki, :n_a, a].reshape(ki * n_a, ds * ds)
            scale = max_abs(stack)
            if scale <= ZERO_PROBABILITY:
                continue
            sv = np.linalg.svd(stack, compute_uv=False)
            if sv[0] > 0 and len(sv) > 1 and sv[1] > tol * sv[0]:
                return NotFactorizable(
                    i, lab, "operator stack has rank above one", float(sv[1] / sv[0])
                )
            nu_i = inv.channel_nu[i, a]
            if nu_i <= ZERO_PROBABILITY:
                return NotFactorizable(
                    i,
                    lab,
                    "operator table is nonzero where the channel measure vanishes",
                    float(scale),
                )
            cand = inv.channel_theta[i, a] / nu_i
            resid = max_abs(
                sr.w[i, :ki, :n_a, a]
                - cand[None, None, :, :] * sr.q[i, :ki, :n_a, a, None, None]
            )
            if resid > tol * max(scale, 1.0):
                return NotFactorizable(
                    i, lab, "scalar factors disagree with the q table", float(resid)
                )
            flat = np.abs(cand).ravel()
            # first entry within rounding of the max: unitary blocks carry
            # exact magnitude ties, and a bare argmax would flip between
            # them on numerical noise
            top = int(np.flatnonzero(flat >= flat.max() * (1.0 - 1e-9))[0])
            entry = cand.ravel()[top]
            ph = entry / abs(entry)
            pi[i, a] = cand * ph.conjugate()
            q_fac[i, :ki, :n_a, a] = sr.q[i, :ki, :n_a, a] * ph
    qsr = QuantumStochasticRep(
        sr.space,
        sr.nu,
        sr.beta,
        pi,
        inv.channel_nu,
        inv.densities,
        q_fac,
    )
    ortho = qsr.joint_orthonormality_deviation()
    if ortho > max(tol, DEFAULT_TOL):
        return NotFactorizable(
            -1, "*", "joint orthonormality fails on the assembled family", float(ortho)
        )
    rebuilt = qsr_instrument(qsr)
    source = instrument_of_sr(sr, tol=max(tol, DEFAULT_TOL))
    if not instruments_equal(rebuilt, source, tol=max(tol, DEFAULT_TOL)):
        return NotFactorizable(
            -1, "*", "rebuilt instrument deviates from the source", float("nan")
        )
    return qsr


def qsr_instrument(
    qsr: QuantumStochasticRep, tol: float = DEFAULT_TOL
) -> KrausInstrument:
    """Instrument with one Kraus operator per channel at each atom.

    The operator at (channel i, atom w) is
    ``sqrt(alpha_i k_i channel_nu[i](w)) pi[i](w)``.

    Raises
    ------
    NotOrthonormal
        If the joint orthonormality of the channel operators fails.
    """
    dev = qsr.joint_orthonormality_deviation()
    if dev > tol:
        raise NotOrthonormal(
            f"channel operators are not jointly orthonormal: deviation {dev:.3e}"
        )
    table = []
    for a in range(qsr.space.size):
        ops = []
        for i, (alpha, k) in enumerate(qsr.profile):
            mass = qsr.channel_nu[i, a]
            if mass > ZERO_PROBABILITY:
                ops.append(np.sqrt(alpha * k * mass) * qsr.pi[i, a])
        table.append(tuple(ops))
    return KrausInstrument(qsr.space, tuple(table), qsr.dim_s)


def from_channel_operators(
    beta: Sequence[float],
    pi_tables,
    f_tables,
    space: OutcomeSpace,
    nu: FiniteMeasure,
    multiplicity: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
) -> StochasticRealization:
    """Build a factorizable realization from per-channel operators.

    Takes one operator per channel and atom (unitary wherever its channel
    has mass) plus scalar profiles ``f[i, a]`` with disjoint supports across
    channels, normalized so each channel's squared profile integrates to 1
    against ``nu``.  The scalar table becomes ``f_i(w) / sqrt(N(w))`` spread
    flat over the block index, and the operator table ``pi_i(w)`` times
    that, which satisfies both orthonormality relations by construction.

    This is the standard recipe for producing factorizable fixtures; it is
    deliberately narrow (multiplicity-1 channels, disjoint supports).
    """
    betas = [float(b) for b in beta]
    if any(b <= 0 for b in betas):
        raise WeightMismatch("channel weights must be positive")
    if abs(sum(betas) - 1.0) > tol:
        raise WeightMismatch(f"channel weights sum to {sum(betas):.12g}, not 1")
    f = np.array(f_tables, dtype=complex)
    pi = np.array(pi_tables, dtype=complex)
    c_count = len(betas)
    m = space.size
    ds = pi.shape[-1]
    if f.shape != (c_count, m) or pi.shape != (c_count, m, ds, ds):
        raise DimensionMismatch(
            f"expected f (C, atoms) and pi (C, atoms, d, d); got {f.shape} and {pi.shape}"
        )
    wgt = nu.as_array()
    overlap = np.einsum("jw,iw,w->ji", f.conj(), f, wgt)
    if max_abs(overlap - np.eye(c_count)) > tol:
        raise NotOrthonormal(
            "profiles must be nu-orthonormal with disjoint supports across channels"
        )
    for i in range(c_count):
        for a in range(m):
            if abs(f[i, a]) > ZERO_PROBABILITY and wgt[a] > 0:
                dev = max_abs(dag(pi[i, a]) @ pi[i, a] - np.eye(ds))
                if dev > tol:
                    raise NotUnitaryMatrix(
                        f"channel {i} operator at atom {space.labels[a]!r} "
                        f"is not unitary: deviation {dev:.3e}"
                    )
    mult = tuple(int(n) for n in multiplicity) if multiplicity is not None else (1,) * m
    n_max = max(mult) if mult else 1
    q = np.zeros((c_count, 1, n_max, m), dtype=complex)
    w = np.zeros((c_count, 1, n_max, m, ds, ds), dtype=complex)
    for a, n_a in enumerate(mult):
        if n_a == 0:
            continue
        flat = 1.0 / np.sqrt(n_a)
        for i in range(c_count):
            q[i, 0, :n_a, a] = f[i, a] * flat
            w[i, 0, :n_a, a] = pi[i, a] * (f[i, a] * flat)
    b = tuple((x, 1) for x in betas)
    return StochasticRealization(space, nu, b, mult, q, w)
