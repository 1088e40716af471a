"""Small eps sweep at sigma = 1: sup energy stays flat, potential mass falls like eps.

A reduced version of the acceptance sweep (4 seeds instead of 16).
"""
from stochch.experiments import SweepPlan, parse_config, run_sweep

flat = parse_config("""
sigma = 1
T = 0.05
geometry.n = 64
init.R0 = 0.25
sweep.eps = 0.08,0.04,0.02
sweep.seeds = 4
""")
res = run_sweep(SweepPlan.from_config(flat))
for eps in (0.08, 0.04, 0.02):
    rows = [r for r in res.rows if r["eps"] == eps]
    E = sum(r["sup_energy"] for r in rows) / len(rows)
    P = sum(r["sup_potential_mass"] for r in rows) / len(rows)
    print(f"eps={eps:<5} mean sup E = {E:.4f}   mean sup int F = {P:.4e}")
for (sigma, key), fit in sorted(res.fits.items()):
    print(f"sigma={sigma} {key}: slope {fit.slope:.3f}, R^2 {fit.r2:.4f}")
