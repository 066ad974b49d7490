"""Bell states, the mixed state and the CHSH combination.

Run: python3 demos/01_bell_states.py
"""
import math

import numpy as np

from ces.quantum_core import (
    SIGMA_X,
    SIGMA_X_PLUS_Y,
    ElementStateKind,
    chsh,
    correlation_from_counts,
    element_state,
    fringe_curve,
    outcome_probabilities,
    sample_outcomes,
)

# The source emits one of three element states.  The two Bell states give
# opposite CHSH extremes; the classically correlated mixture gives nothing.
for kind in ElementStateKind:
    print(f"{kind.name:10s} S = {chsh(element_state(kind)):+.6f}")

# Werner noise scales the violation linearly.
v = 0.961
print(f"\nphi+ at V={v}: S = {chsh(element_state(0, v)):.4f}  (2 sqrt2 V = {2 * math.sqrt(2) * v:.4f})")

# Born-rule probabilities for one CHSH setting pair, then a finite sample.
probs = outcome_probabilities(element_state(0), SIGMA_X, SIGMA_X_PLUS_Y)
print("\np(++, +-, -+, --) for X vs X+Y:", np.round(probs, 4))
rng = np.random.default_rng(1)
counts = np.bincount(sample_outcomes(probs, rng, 1000), minlength=4)
est = correlation_from_counts(*counts)
print(f"1000 samples: E = {est.E:.3f} +- {est.stderr:.3f}  (exact {1 / math.sqrt(2):.3f})")

# The interferometer fringe that a visibility figure is read from.
phi, p = fringe_curve(v, 0.0, 8)
print("\nfringe:", " ".join(f"{x:.3f}" for x in p))
print(f"visibility from extrema = {(p.max() - p.min()) / (p.max() + p.min()):.3f}")
