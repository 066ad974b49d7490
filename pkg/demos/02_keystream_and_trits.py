"""From a preshared seed to a ternary modulation string.

Run: python3 demos/02_keystream_and_trits.py
"""
import numpy as np

from ces.modulation import (
    KeystreamTrits,
    ModulationParams,
    SeedToken,
    TritRule,
    bits_to_trits_paper_rule,
    control_correlation_U,
    entropy_of_correlation,
    expand_stream,
    trits_to_bits_paper_rule,
)

seed = SeedToken.from_hex("lab", "00112233445566778899aabbccddeeff")
bits = expand_stream(seed, 10**6)
print(f"AES-CTR keystream: {bits.size} bits, ones fraction {bits.mean():.4f}")

# Pair rule: 11 becomes a 2, any other pair is copied.  It is invertible.
trits = bits_to_trits_paper_rule(bits)
print("first trits:", trits.to_text()[:40])
print("symbol frequencies:", np.round(trits.counts() / len(trits), 4), "(expected 4/7, 2/7, 1/7)")
print("round trip exact:", np.array_equal(trits_to_bits_paper_rule(trits), bits))

# Target-p rule: one 32-bit word per trit, random access by round index.
src = KeystreamTrits(seed, ModulationParams(0.2, TritRule.TARGET_P))
print("\ntrits at rounds 10**9 .. 10**9+9:", src.trits_at(np.arange(10**9, 10**9 + 10)))

# How far a decoding string is from the truth.
t_d = src.string(10_000)
guess = np.random.default_rng(0).integers(0, 2, 10_000)
u, n = control_correlation_U(guess, t_d)
print(f"\nblind guess: U = {u:+.4f} over N = {n}, B = {entropy_of_correlation(u):.4f} bits")
u, n = control_correlation_U(np.where(t_d.trits == 2, 0, t_d.trits), t_d)
print(f"true string: U = {u:+.4f} over N = {n}")
