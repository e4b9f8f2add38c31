"""Single-shot sampling and posterior trajectories.

Damping measurements on the excited state: empirical outcome frequencies
against the analytic law, then two-step trajectories showing how the
posterior feeds forward (an emission can only happen once).
"""

import numpy as np

from qmeasure import (
    KrausInstrument,
    MeasurementModel,
    OutcomeSpace,
    dilate,
    factorize,
    from_realization,
    output_law,
    run_trajectory,
    sample_shot,
)

A0 = np.array([[1.0, 0.0], [0.0, np.sqrt(0.5)]])
A1 = np.array([[0.0, np.sqrt(0.5)], [0.0, 0.0]])
EXCITED = np.array([0.0, 1.0], dtype=complex)


def main():
    t = KrausInstrument(OutcomeSpace(("0", "1")), {"0": [A0], "1": [A1]}, 2)
    qsr = factorize(from_realization(dilate(t, mode="invariant")))
    model = MeasurementModel(qsr, EXCITED)

    law = output_law(model)
    gen = np.random.default_rng(12)
    n = 20000
    counts = {lab: 0 for lab in law.space.labels}
    for _ in range(n):
        counts[sample_shot(model, gen).outcome] += 1
    print(f"{n} shots on |1>:")
    for lab in law.space.labels:
        print(f"  {lab}: empirical {counts[lab] / n:.4f}, analytic {law.mass(lab):.4f}")

    pair_counts: dict = {}
    for _ in range(n):
        key = run_trajectory(model, 2, gen).outcomes()
        pair_counts[key] = pair_counts.get(key, 0) + 1
    print("two-step outcome pairs:")
    for key in sorted(pair_counts):
        print(f"  {key}: {pair_counts[key] / n:.4f}")
    # ('1', '1') never fires: after the jump the state sits in |0>

    traj = run_trajectory(model, 3, 7)
    print("one trajectory (seed 7):", " -> ".join(traj.outcomes()))
    for step, state in enumerate(traj.states()):
        print(f"  state {step}: {np.round(state, 4)}")


if __name__ == "__main__":
    main()
