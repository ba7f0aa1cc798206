# # Why a single individual drifts to the border and then falls off
#
# Inside the ball every point has fitness 1, so the (1+1) EA accepts any
# offspring that stays inside.  Mutation has more ways to move away from the
# centre than towards it, so the incumbent piles up on the border; when the
# target moves it is left outside, and from there re-entry is unlikely.

# %%
import numpy as np

from dyntrack.analysis import (
    LOSS_PROBABILITY_FLOOR,
    drift_constants,
    drift_estimate,
    loss_probability_bound,
    occupancy_bound_at_time,
    ruin_probability_closed,
    ruin_probability_exact,
    simulate_ruin_walk,
)
from dyntrack.dynamics import MhbParams
from dyntrack.operators import MutationOp
from dyntrack.verify import border_occupancy

params = MhbParams.from_fraction(200, 0.05, 1, 1e15)
delta, eta = drift_constants(params.b)
print(f"delta={delta:.4f} eta={eta:.4f}")

# %% Drift of the distance to the border, state i = r - distance
rng = np.random.default_rng(0)
for i in range(6):
    est = drift_estimate(params, MutationOp.bitwise(), i, 20_000, rng)
    print(f"i={i}  mean {est.mean:+.4f} +- {est.sigma:.4f}   bound {est.bound:+.4f}")

# %% Time on the border
frac = border_occupancy(seed=0, steps=100_000, burn_in=2_000)
print(f"border fraction {frac:.3f}  (lower bound {occupancy_bound_at_time(delta, eta):.3f})")

# %% Chance of losing the ball at a target move
for b in (0.01, 0.05, 0.1, 0.15):
    print(f"b={b:<5} per-change loss at least {loss_probability_bound(b):.3f}")
print("floor:", round(LOSS_PROBABILITY_FLOOR, 5))

# %% Getting back in from just outside
n, r = 128, 6
d = n // 4
x = r + 1
sim, sig = simulate_ruin_walk(r, d, n, x, 50_000, np.random.default_rng(1))
print(f"closed {ruin_probability_closed(r, d, n, x):.4f}  exact {ruin_probability_exact(r, d, n, x):.4f}  "
      f"simulated {sim:.4f} +- {sig:.4f}")
