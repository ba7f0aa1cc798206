# # How hard do the selection schemes push?
#
# beta(gamma) is the chance that one selection lands in the best
# ceil(gamma lambda) individuals.  The population tracks the ball when the
# pressure beats (1 + delta) / rho, with rho the chance that one mutation of
# an optimal point is optimal a little later.

# %%
import numpy as np

from dyntrack.dynamics import MhbParams, stability_bound
from dyntrack.operators import (
    SelectionSpec,
    beta_closed_form,
    beta_empirical,
    corollary_threshold,
    pressure_satisfied,
)

lam = 100
specs = [
    SelectionSpec.tournament(2),
    SelectionSpec.tournament(33),
    SelectionSpec.mu_comma_lambda(10),
    SelectionSpec.linear_ranking(2.0),
    SelectionSpec.exponential_ranking(5.0),
]
gammas = [0.05, 0.1, 0.3, 0.5, 1.0]
print("gamma".ljust(28) + "".join(f"{g:>8}" for g in gammas))
for s in specs:
    print(str(s).ljust(28) + "".join(f"{beta_closed_form(s, g, lam):8.4f}" for g in gammas))

# %% Closed form against sampling
rng = np.random.default_rng(3)
for s in specs:
    est, half = beta_empirical(s, lam, 0.1, 200_000, rng)
    print(f"{s!s:28s} closed {beta_closed_form(s, 0.1, lam):.4f}  sampled {est:.4f} +- {half:.4f}")

# %% Pressure needed for b = 0.1, ell = 1
params = MhbParams.from_fraction(100, 0.1, 1, 500.0)
kappa, rho = stability_bound(params)
print(f"kappa={kappa:.0f}  rho={rho:.4f}  need {(1.1) / rho:.1f}")
print("shortcut threshold:", corollary_threshold(0.1, 1, 0.1))
for s in (SelectionSpec.tournament(33), SelectionSpec.tournament(20), SelectionSpec.mu_comma_lambda(3)):
    print(s, pressure_satisfied(s, 0.1 / 3, 0.1, lam=125))
