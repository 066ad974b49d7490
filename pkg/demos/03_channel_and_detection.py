"""Lossy channel, accidental coincidences and detection records.

Run: python3 demos/03_channel_and_detection.py
"""
import numpy as np

from ces.channel_sim import (
    BasisSchedule,
    ChannelParams,
    car_estimate,
    sample_event_rounds,
    simulate_detection_stream,
    write_records,
)
from ces.quantum_core import SIGMA_X

params = ChannelParams()
print(f"defaults: mu={params.mu}, eta per arm={params.eta_a}, clock={params.clock_rate:.2e} Hz")
print(f"true coincidence probability per pulse {params.p_true:.3e} -> {params.coincidence_rate:.0f} per second")
print(f"expected CAR {params.expected_car:.1f}")

# Silent pulses are skipped: coincidences are placed by geometric gaps, so
# tens of billions of pulses take well under a second.
rng = np.random.default_rng(3)
rounds, flags = sample_event_rounds(4 * 10**10, params, rng)
print(f"\n4e10 pulses -> {rounds.size} coincidences, CAR {car_estimate(flags):.1f}")

rate = ChannelParams.calibrated_to_rate(2e3)
print(f"channel tuned to 2 kHz: per-pulse probability {rate.p_true:.1e}")

# A short lossless run with both users in X, written as public records.
n = 6
sched = BasisSchedule.constant(SIGMA_X, n)
ev = simulate_detection_stream([0, 1, 2, 0, 1, 2], sched, sched, 1.0, ChannelParams.lossless(0.5), rng)
print("\n" + write_records(ev))
