"""Channel-resolved measurement simulation.

A measurement model pairs a factorized representation with an initial
state.  Each shot draws an (outcome, channel) pair from the joint law

    P(w, i) = alpha_i k_i * ||Pi_i(w) psi||^2 * nu_i({w})

and updates the state to the normalized Pi_i(w) psi.  Repeating the update
gives discrete-time posterior pure-state trajectories.

Sampling contract: one uniform draw in [0, 1) per shot, inverse-CDF over
atoms in declared outcome order and channels in index order within each
atom, selecting the first cell whose cumulative sum reaches the draw.
Cells with mass at or below ``ZERO_PROBABILITY`` are unsampleable.  Given
equal seeds the produced records are identical bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .qcore import (
    DEFAULT_TOL,
    ZERO_PROBABILITY,
    DensityOperator,
    DimensionMismatch,
    FiniteMeasure,
    OutcomeSpace,
    ZeroProbabilityEvent,
    _as_vector,
    _freeze,
    max_abs,
)
from .instrument import posterior_family, pov_measure, predual_apply
from .stochrep import QuantumStochasticRep, qsr_instrument

__all__ = [
    "MeasurementModel",
    "OutputLaw",
    "ShotResult",
    "Trajectory",
    "ModelReport",
    "output_law",
    "channel_weights",
    "posterior_pure",
    "posterior_mixture",
    "sample_shot",
    "run_trajectory",
    "verify_model",
]


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """A factorized measurement together with the state it acts on.

    The initial state may be a unit vector or a :class:`DensityOperator`.
    Pure-state tracking (:func:`sample_shot`, :func:`run_trajectory`,
    :func:`posterior_pure`) requires the vector form; the averaged
    operations work with either.
    """

    qsr: QuantumStochasticRep
    initial: Union[np.ndarray, DensityOperator]

    def __post_init__(self):
        if isinstance(self.initial, DensityOperator):
            if self.initial.dim != self.qsr.dim_s:
                raise DimensionMismatch(
                    f"state dim {self.initial.dim} != system dim {self.qsr.dim_s}"
                )
            return
        psi = _as_vector(self.initial, "initial state")
        if psi.size != self.qsr.dim_s:
            raise DimensionMismatch(
                f"state dim {psi.size} != system dim {self.qsr.dim_s}"
            )
        nrm = np.linalg.norm(psi)
        if abs(nrm - 1.0) > 1e-8:
            raise ValueError(f"initial state norm {nrm:.12g} is not 1")
        object.__setattr__(self, "initial", _freeze(psi))

    @property
    def is_pure(self) -> bool:
        return not isinstance(self.initial, DensityOperator)

    @property
    def pure_state(self) -> np.ndarray:
        if not self.is_pure:
            raise ValueError("model was built with a density operator, not a pure state")
        return self.initial

    @property
    def density(self) -> DensityOperator:
        if self.is_pure:
            return DensityOperator.pure(self.initial)
        return self.initial


@dataclass(frozen=True, eq=False)
class OutputLaw:
    """Per-channel outcome measures and their weighted total."""

    space: OutcomeSpace
    mix: tuple[float, ...]  # alpha_i * k_i per channel
    channel_masses: np.ndarray  # (C, M)

    def __post_init__(self):
        object.__setattr__(self, "channel_masses", _freeze(np.array(self.channel_masses, dtype=float)))

    def joint(self) -> np.ndarray:
        """Joint (channel, atom) mass table; sums to 1 for a valid model."""
        return np.array(self.mix)[:, None] * self.channel_masses

    @property
    def total(self) -> FiniteMeasure:
        masses = self.joint().sum(axis=0)
        return FiniteMeasure(self.space, tuple(max(float(x), 0.0) for x in masses))

    def mass(self, label: str) -> float:
        return float(self.joint()[:, self.space.index(label)].sum())


@dataclass(frozen=True, eq=False)
class ShotResult:
    """One sampled measurement event with its conditional state."""

    outcome: str
    channel: int
    posterior: np.ndarray
    probability: float
    weight: float

    def __post_init__(self):
        v = _as_vector(self.posterior, "posterior state")
        if abs(np.linalg.norm(v) - 1.0) > 1e-8:
            raise ValueError("posterior state must be normalized")
        if not -1e-12 <= self.weight <= 1.0 + 1e-12:
            raise ValueError(f"channel weight {self.weight} outside [0, 1]")
        object.__setattr__(self, "posterior", _freeze(v))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sequence of shots where each posterior feeds the next step."""

    shots: tuple[ShotResult, ...]
    model: MeasurementModel
    seed: int | None

    def __len__(self) -> int:
        return len(self.shots)

    def states(self) -> list[np.ndarray]:
        """Initial state followed by the posterior after each step."""
        return [self.model.pure_state] + [s.posterior for s in self.shots]

    def outcomes(self) -> tuple[str, ...]:
        return tuple(s.outcome for s in self.shots)


def _channel_masses(qsr: QuantumStochasticRep, model_state) -> np.ndarray:
    """Per-channel outcome masses m_i({w}) for a pure or mixed state."""
    if isinstance(model_state, DensityOperator):
        t = np.einsum(
            "cwab,bd,cwad->cw", qsr.pi, model_state.matrix, qsr.pi.conj()
        ).real
    else:
        amp = np.einsum("cwab,b->cwa", qsr.pi, model_state)
        t = np.einsum("cwa,cwa->cw", amp.conj(), amp).real
    return t * qsr.channel_nu


def output_law(model: MeasurementModel) -> OutputLaw:
    """Outcome law of the model, resolved by channel."""
    masses = _channel_masses(model.qsr, model.initial)
    mix = tuple(a * k for a, k in model.qsr.profile)
    return OutputLaw(model.qsr.space, mix, masses)


def channel_weights(model: MeasurementModel, omega: str) -> np.ndarray:
    """Conditional channel distribution given the observed atom.

    Raises
    ------
    ZeroProbabilityEvent
        If the atom carries no outcome probability.
    """
    law = output_law(model)
    a = law.space.index(omega)
    col = law.joint()[:, a]
    total = col.sum()
    if total <= ZERO_PROBABILITY:
        raise ZeroProbabilityEvent(f"outcome {omega!r} has probability {total:.3e}")
    return col / total


def posterior_pure(model: MeasurementModel, i: int, omega: str) -> np.ndarray:
    """Normalized conditional state for channel ``i`` at atom ``omega``.

    Raises
    ------
    ZeroProbabilityEvent
        If the channel operator annihilates the initial state at this atom.
    """
    psi = model.pure_state
    a = model.qsr.space.index(omega)
    if not 0 <= i < model.qsr.channel_count:
        raise IndexError(f"channel index {i} out of range")
    vec = model.qsr.pi[i, a] @ psi
    nrm = np.linalg.norm(vec)
    if nrm * nrm <= ZERO_PROBABILITY:
        raise ZeroProbabilityEvent(
            f"channel {i} at outcome {omega!r} has vanishing amplitude"
        )
    return vec / nrm


def posterior_mixture(
    model_or_qsr, omega: str, rho: DensityOperator | None = None
) -> DensityOperator:
    """Posterior state at an atom, averaged over channels.

    Accepts either a model (whose initial state is used) or a bare
    representation plus an explicit input state.  Matches the posterior
    family of the reconstructed instrument at the same atom.

    Raises
    ------
    ZeroProbabilityEvent
        If the atom carries no outcome probability.
    """
    if isinstance(model_or_qsr, MeasurementModel):
        qsr = model_or_qsr.qsr
        state = model_or_qsr.density if rho is None else rho
    else:
        qsr = model_or_qsr
        if rho is None:
            raise ValueError("an input state is required with a bare representation")
        state = rho
    if state.dim != qsr.dim_s:
        raise DimensionMismatch(f"state dim {state.dim} != system dim {qsr.dim_s}")
    a = qsr.space.index(omega)
    mix = np.array([al * k for al, k in qsr.profile])
    coeff = mix * qsr.channel_nu[:, a]
    acc = np.einsum("c,cab,bd,ced->ae", coeff, qsr.pi[:, a], state.matrix, qsr.pi[:, a].conj())
    p = float(np.trace(acc).real)
    if p <= ZERO_PROBABILITY:
        raise ZeroProbabilityEvent(f"outcome {omega!r} has probability {p:.3e}")
    return DensityOperator(acc / p)


def _pick(flat: np.ndarray, u: float) -> int:
    """First sampleable cell whose cumulative mass reaches the draw."""
    pos = np.flatnonzero(flat > ZERO_PROBABILITY)
    cs = np.cumsum(flat[pos])
    k = int(np.searchsorted(cs, u, side="left"))
    if k >= len(pos):
        k = len(pos) - 1
    return int(pos[k])


def _shot(qsr: QuantumStochasticRep, mix: np.ndarray, psi: np.ndarray, rng) -> tuple[ShotResult, np.ndarray]:
    amp = np.einsum("cwab,b->cwa", qsr.pi, psi)
    sq = np.einsum("cwa,cwa->cw", amp.conj(), amp).real
    joint = mix[:, None] * sq * qsr.channel_nu  # (C, M)
    flat = joint.T.reshape(-1)  # atom-major, channel minor
    u = rng.random()
    idx = _pick(flat, u)
    a, c = divmod(idx, joint.shape[0])
    prob = float(joint[:, a].sum())
    post = amp[c, a] / np.sqrt(sq[c, a])
    result = ShotResult(
        qsr.space.labels[a], int(c), post, prob, float(joint[c, a] / prob)
    )
    return result, post


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = int(rng)
    return np.random.default_rng(seed), seed


def sample_shot(model: MeasurementModel, rng) -> ShotResult:
    """Draw one (outcome, channel) event and the matching posterior state.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.  Exactly one
    uniform variate is consumed per call.
    """
    gen, _ = _as_rng(rng)
    mix = np.array([a * k for a, k in model.qsr.profile])
    result, _ = _shot(model.qsr, mix, model.pure_state, gen)
    return result


def run_trajectory(model: MeasurementModel, steps: int, rng) -> Trajectory:
    """Iterate measurement shots, feeding each posterior into the next step."""
    if steps < 1:
        raise ValueError("a trajectory needs at least one step")
    gen, seed = _as_rng(rng)
    mix = np.array([a * k for a, k in model.qsr.profile])
    psi = model.pure_state
    shots = []
    for _ in range(steps):
        result, psi = _shot(model.qsr, mix, psi, gen)
        shots.append(result)
    return Trajectory(tuple(shots), model, seed)


@dataclass(frozen=True)
class ModelReport:
    """Deviations of the model identities, with a verdict at ``tol``.

    ``operator_orthonormality`` is the channel-operator relation weighted by
    the pairwise densities; ``pure_orthonormality`` contracts it with the
    initial state (``None`` when the model holds a density operator);
    ``prior_deviation`` compares the channel-averaged posterior mixture with
    the instrument's non-selective output; ``pov_deviation`` compares the
    effect operators assembled from channel data with the instrument's.
    """

    operator_orthonormality: float
    pure_orthonormality: float | None
    prior_deviation: float
    pov_deviation: float
    tol: float
    passed: bool

    def __str__(self) -> str:
        parts = [
            f"operator orthonormality {self.operator_orthonormality:.3e}",
            f"prior average {self.prior_deviation:.3e}",
            f"pov identity {self.pov_deviation:.3e}",
        ]
        if self.pure_orthonormality is not None:
            parts.insert(1, f"pure-state orthonormality {self.pure_orthonormality:.3e}")
        status = "pass" if self.passed else "FAIL"
        return f"model {status} (tol {self.tol:g}): " + ", ".join(parts)


def verify_model(model: MeasurementModel, tol: float = DEFAULT_TOL) -> ModelReport:
    """Check the model's defining identities against the instrument layer.

    Never raises on a failing model; deviations land in the report.
    """
    qsr = model.qsr
    c_count = qsr.channel_count
    op_dev = qsr.joint_orthonormality_deviation()
    pure_dev = None
    if model.is_pure:
        psi = model.pure_state
        amp = np.einsum("cwab,b->cwa", qsr.pi, psi)
        inner = np.einsum("jwa,iwa->jiw", amp.conj(), amp)
        g = np.einsum("jiw,jiw->ji", inner, qsr.densities.premeasurement_state())
        pure_dev = float(max_abs(g - np.eye(c_count)))
    inst = qsr_instrument(qsr, tol=float("inf"))
    rho = model.density
    mix = np.array([a * k for a, k in qsr.profile])
    coeff = mix[:, None] * qsr.channel_nu  # (C, M)
    recon = np.einsum("cw,cwab,bd,cwed->ae", coeff, qsr.pi, rho.matrix, qsr.pi.conj())
    prior_dev = float(max_abs(recon - predual_apply(inst, inst.space.labels, rho)))
    effects = np.einsum("cw,cwba,cwbd->wad", coeff, qsr.pi.conj(), qsr.pi)
    pov = pov_measure(inst, tol=float("inf"))
    pov_dev = max(
        float(max_abs(effects[a] - pov.effects[a])) for a in range(qsr.space.size)
    )
    checks = [op_dev, prior_dev, pov_dev] + ([pure_dev] if pure_dev is not None else [])
    return ModelReport(
        float(op_dev), pure_dev, prior_dev, pov_dev, tol, all(d <= tol for d in checks)
    )
