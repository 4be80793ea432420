"""Per-layer pruning-ratio curves and the global-target solver.

Layer-wise pruning errors compound with depth, so the default curve prunes
shallow layers gently and deep layers harder, rising logarithmically. Given
a global parameter target, the last-layer ratio is solved by bisection on
the parameter-weighted mean.

Run: python demos/05_ratio_schedules.py
"""

import numpy as np

from obslim import build_schedule, counts_from_ratio, schedule_ratios, solve_last_ratio

n = 8

# --- the five curve shapes at matched endpoints --------------------------------
print("per-layer ratios, r0=0.2, rn=0.6 (decrease variants start high):")
header = "layer:     " + " ".join(f"{i:>6}" for i in range(n))
print(header)
for variant, r0, rn in (
    ("log_increase", 0.2, 0.6),
    ("linear_increase", 0.2, 0.6),
    ("log_decrease", 0.6, 0.2),
    ("linear_decrease", 0.6, 0.2),
):
    ratios = schedule_ratios(n, r0, rn, variant)
    print(f"{variant:>16}: " + " ".join(f"{r:6.3f}" for r in ratios))

# --- solving the last ratio for a 50% global target ----------------------------
r0 = 0.25
rn = solve_last_ratio(0.5, r0, np.ones(n), "log_increase")
ratios = schedule_ratios(n, r0, rn, "log_increase")
print(f"\nlog curve hitting a 50% mean with r0={r0}: rn={rn:.4f}")
print("  ratios:", " ".join(f"{r:.3f}" for r in ratios))
print(f"  mean:   {ratios.mean():.6f}")

# parameter-weighted layers (say the last two layers are twice as wide)
weights = np.array([1.0] * 6 + [2.0, 2.0])
rn_w = solve_last_ratio(0.5, r0, weights, "log_increase")
ratios_w = schedule_ratios(n, r0, rn_w, "log_increase")
print(f"with heavier deep layers the solved endpoint drops: rn={rn_w:.4f} "
      f"(weighted mean {np.average(ratios_w, weights=weights):.6f})")

# --- build_schedule + mirroring -------------------------------------------------
inc = build_schedule(n, "log_increase", r0=0.25, global_target=0.5)
dec = inc.reversed()
print(f"\nbuild_schedule variant={inc.variant}, ratios mean {np.mean(inc.ratios):.4f}")
print(f"mirrored counterpart variant={dec.variant}, same multiset of ratios, "
      f"mean {np.mean(dec.ratios):.4f}")

# --- ratios to integer unit counts ----------------------------------------------
print("\ninteger removal counts at ratio 0.33:")
for units in (4, 32, 11008):
    print(f"  {units:>6} units -> prune {counts_from_ratio(0.33, units)}")
print("at least one unit always survives:",
      counts_from_ratio(0.99, 4), "of 4 pruned at ratio 0.99")
