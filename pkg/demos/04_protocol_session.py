"""A full session: setup, distribution, sifting, certification, key.

Run: python3 demos/04_protocol_session.py
"""
from ces.modulation import SeedToken
from ces.protocol import SessionConfig, run_session

seed = SeedToken.from_hex("lab", "00112233445566778899aabbccddeeff")
config = SessionConfig(seed=seed)  # 1e10 pulses, V = 0.961, p = 0.2

honest = run_session(config)
for key, value in honest.summary().items():
    print(f"{key:18s} {value}")

# An unauthorised pair registers under the right token id with the wrong
# key.  Their decoding string is uncorrelated with the modulation.
print("\nwrong key material:")
intruder = SeedToken.from_hex("lab", "ffeeddccbbaa99887766554433221100")
bad = run_session(config, user_seed=intruder)
print(f"verdict {bad.verdict.value}, S = {bad.report.S:+.3f} +- {bad.report.stderr:.3f}, U = {bad.report.U:+.3f}")
