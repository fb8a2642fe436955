"""
Manufactured-solution convergence.

Runs the coupled solver against a closed-form solution on three halved
meshes and prints the error table with observed rates.  The time window
is shortened so the script finishes in seconds; the full studies behind
the acceptance suite use

    fpsi converge --family lower            # h = 1/8..1/64, dt = 2.5e-4, T = 0.1
    fpsi converge --family higher           # h = 1/8..1/32, dt = 1e-6,  T = 5e-4
"""
from fpsi import convergence_study

table, runs = convergence_study("lower", hs=(1 / 4, 1 / 8, 1 / 16), dt=1e-3, T=0.02)
print(table.to_csv())
for r in runs:
    worst = max(max(d.conservation.values()) for d in r.history)
    print(f"h = {r.h:.4g}: {len(r.history)} steps in {r.seconds:.1f}s, "
          f"max mass-balance residual {worst:.1e}")
print("last-pair rates:", {k: round(v, 2) for k, v in table.last_rates().items()})
