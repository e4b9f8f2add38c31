"""Projective qubit measurement, end to end.

Builds the Z-basis instrument, checks Born probabilities and collapse on the
balanced superposition, then composes the measurement with itself to show
repeatability: the second outcome always equals the first.
"""

import numpy as np

from qmeasure import (
    DensityOperator,
    instrument_of,
    outcome_distribution,
    posterior_family,
    sequential_compose,
    von_neumann_instrument,
    von_neumann_process,
)

P_PLUS = np.diag([1.0, 0.0])
P_MINUS = np.diag([0.0, 1.0])
PSI = np.array([1.0, 1.0]) / np.sqrt(2.0)


def main():
    t = von_neumann_instrument([("+1", P_PLUS), ("-1", P_MINUS)])
    rho = DensityOperator(np.outer(PSI, PSI.conj()))

    dist = outcome_distribution(t, rho)
    print("outcome distribution on (|0> + |1>)/sqrt(2):")
    for lab in t.space.labels:
        print(f"  {lab:>3}: {dist.weight(lab):.6f}")

    fam = posterior_family(t, rho)
    print("posterior after '+1':")
    print(np.round(fam.posterior("+1").matrix.real, 6))

    twice = sequential_compose(t, t)
    joint = outcome_distribution(twice, rho)
    print("two consecutive measurements:")
    for lab in twice.space.labels:
        print(f"  {lab:>7}: {joint.weight(lab):.6f}")
    # the cross terms (+1,-1) and (-1,+1) vanish: measuring twice repeats

    # the same instrument, produced by an explicit measuring process
    g = von_neumann_process(
        [("+1", P_PLUS), ("-1", P_MINUS)], np.ones(2) / np.sqrt(2.0)
    )
    again = outcome_distribution(instrument_of(g), rho)
    print("via the measuring process:", [f"{again.weight(l):.6f}" for l in t.space.labels])


if __name__ == "__main__":
    main()
