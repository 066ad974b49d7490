"""Figure data as tables, written to ./demo_output.

Run: python3 demos/06_figure_tables.py
"""
from pathlib import Path

from ces.analysis import curve_blind_bound, experiment_biased_modulation, fringe_scan, sweep_smod_surface

out = Path("demo_output")
out.mkdir(exist_ok=True)

surface = sweep_smod_surface([0.0, 0.3, 0.6, 0.9], [0.0, 1 / 7, 0.3], master_seed=1, rounds=100_000)
surface.dump(out / "surface.csv")
for r in surface.records():
    print(f"B={r['B']:.1f} p={r['p']:.3f}  analytic {r['S_mod_analytic']:.3f}  "
          f"simulated {r['S_mod_simulated']:.3f} +- {r['stderr']:.3f}")

bias = experiment_biased_modulation(master_seed=1, rounds=100_000)
bias.dump(out / "bias.json", fmt="json")
curve_blind_bound(20).dump(out / "bound.csv")
fringe_scan(0.961, 0.0, 64).dump(out / "fringe.csv")
print(f"\ntables written to {out.resolve()}")
