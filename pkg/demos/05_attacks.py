"""Collaborating taps, blind guessing and the memory attack.

Run: python3 demos/05_attacks.py
"""
import numpy as np

from ces.adversary import (
    MemoryLog,
    PublicPostprocessing,
    blind_guess_expected_U,
    memory_attack_reconstruct,
    recover_repeated_pattern,
    tap_infer_signs,
)
from ces.channel_sim import BasisSchedule, ChannelParams, simulate_detection_stream
from ces.modulation import ModulationParams, SeedToken
from ces.protocol import SessionConfig, run_session
from ces.quantum_core import SIGMA_X

rng = np.random.default_rng(5)

# Two taps both measure X and read the sign off their ports.  A short
# repeated pattern falls to folding even with 99 % loss.
pattern = rng.integers(0, 2, 8)
n = 200_000
sched = BasisSchedule.constant(SIGMA_X, n)
events = simulate_detection_stream(
    pattern[np.arange(n) % 8], sched, sched, 0.961, ChannelParams.with_survival(0.01), rng
)
hyp = recover_repeated_pattern(tap_infer_signs(events), max_period=16)
print("true pattern     ", pattern)
print("recovered pattern", hyp.recovered, f"(period {hyp.period}, confidence {hyp.confidence:.3f})")

# Guessing the decoding string blind.
print("\nexpected |U| of a blind guess:", [round(blind_guess_expected_U(k), 4) for k in range(8)])

# Recording devices replay the public post-processing.
seed = SeedToken.from_hex("lab", "00112233445566778899aabbccddeeff")
for p, scheme in ((0.0, "onefold"), (0.2, "twofold")):
    cfg = SessionConfig(seed=seed, modulation=ModulationParams(p), rounds=110_000, visibility=1.0,
                        channel=ChannelParams.lossless())
    res = run_session(cfg)
    _, rep = memory_attack_reconstruct(
        MemoryLog.from_events(res.transcript.events), PublicPostprocessing.from_result(res),
        res.final_key_a, scheme, rng,
    )
    print(f"{scheme:8s} p={p}: attacker agrees on {rep.agreement:.3f} of {rep.true_key_length} final bits")
