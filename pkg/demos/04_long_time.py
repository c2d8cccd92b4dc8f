"""
Long-time behaviour: absorbing ball, stabilizability, attractor probes
======================================================================

Ensemble diagnostics on a coarse grid.  A steady force keeps the dynamics
away from the origin; every trajectory still enters a common ball, pairs of
trajectories contract towards each other and the post-transient samples look
low dimensional.
"""
# %%
from fpi import ForcingSpec, GridSpec, InitialSpec, PotentialSpec, RunConfig
from fpi.attractor import (
    absorbing_set_check, attractor_regularity_check, dimension_probe, stabilizability_check,
)

cfg = RunConfig(GridSpec(2, (8, 8), lame_lambda=2.0), PotentialSpec("quartic", 10.0), ForcingSpec("vortex", 5.0),
                InitialSpec("random", 1.0), dt=0.01, T=3.0)

# %%
# Absorbing ball.  The envelope constants are calibrated on half of the
# ensemble and checked on the other half; restarts from inside stay inside.
rep = absorbing_set_check(cfg, n=6, r_max=2.0, restart_T=2.0)
print(f"ball radius {rep.ball_radius:.3f}; entry times {rep.entry_times.round(3)}")
print(f"envelope holds: {rep.envelope_ok.all()}, restarts stay inside: {rep.restart_ok}")

# %%
# Stabilizability: the distance between two trajectories is bounded by an
# exponentially decaying term plus a history term in the plate displacement.
st = stabilizability_check(cfg, n=6, r_max=1.0)
print(f"c0 = {st.c0:.3f}, omega = {st.omega:.3f}, c_R = {st.c_R:.3g}, smallest margin {st.margins.min():.2e}")

# %%
# A heuristic correlation-dimension estimate of post-transient samples.
est = dimension_probe(cfg, n_samples=200)
print(f"{est.label}: {est.dimension:.2f} (band {est.band[0]:.2f} to {est.band[1]:.2f})")

# %%
# The regularity quantities stay bounded along the tail of the run.
reg = attractor_regularity_check(cfg)
for name, value in reg.sups.items():
    print(f"  sup {name:14s} {value:.3e}  bounded: {reg.bounded[name]}")
