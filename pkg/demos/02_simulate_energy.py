"""
Coupled simulation and the energy ledger
========================================

Run the nonlinear fluid-plate system with a quartic restoring potential and a
steady vortex force.  The ledger balances kinetic, elastic and potential
energy against viscous dissipation and the work of the force.
"""
# %%
from dataclasses import replace

from fpi import ForcingSpec, GridSpec, InitialSpec, PotentialSpec, RunConfig, run
from fpi.stepper import decay_rate_fit

cfg = RunConfig(GridSpec(2, (16, 16), lame_lambda=2.0), PotentialSpec("quartic", 1.0), ForcingSpec("vortex", 1.0),
                InitialSpec("bump", 0.5), dt=0.005, T=2.0, theta=0.5)
snapshots, ledger = run(cfg)

# %%
# The balance residual stays at a small fraction of the initial energy and
# shrinks by about 4x when the step is halved (second-order scheme).
E = ledger.total
print(f"E(0) = {E[0]:.5f}, E(T) = {E[-1]:.5f}")
print(f"max residual / E(0) = {ledger.max_residual / E[0]:.2e}")
_, fine = run(replace(cfg, dt=cfg.dt / 2))
print(f"residual ratio after halving dt: {ledger.max_residual / fine.max_residual:.2f}")

# %%
# Without forcing the state decays exponentially; the fitted rate tracks the
# spectral gap of the linear generator (about 3.79 at this resolution).
free = RunConfig(cfg.grid, PotentialSpec("quartic", 10.0), ForcingSpec(), InitialSpec("bump", 0.5), dt=0.01, T=6.0)
fit = decay_rate_fit(run(free)[1], tail=0.5)
print(f"decay rate {fit.alpha:.3f} (R^2 = {fit.r2:.3f})")

# %%
# Columns available for plotting.
for name in ("E_fluid", "E_plate_kinetic", "E_plate_elastic", "E_potential", "W_lyap"):
    print(f"  {name:16s} final {ledger.column(name)[-1]:.4e}")
