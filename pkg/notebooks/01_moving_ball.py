# # A moving Hamming ball, step by step
#
# The fitness is 1 inside a radius-r ball around a hidden target and 0
# outside.  The target starts at all ones and jumps by exactly ell bits at
# random times; every evaluation advances the clock by one.

# %%
import numpy as np

from dyntrack import Bitstring, MhbParams, evaluate, hamming, mhb_new, target_at
from dyntrack.bits import all_ones, sample_at_distance

params = MhbParams.from_fraction(n=24, b=0.125, ell=2, theta=6.0)
F = mhb_new(params, np.random.default_rng(0))
print(params)          # r = floor(b n) = 3
print(target_at(F, 0))  # the ball starts centred on all ones

# %% Evaluating advances the clock
x = all_ones(24)
print([evaluate(F, x, F.clock) for _ in range(20)])
print("clock:", F.clock)

# %% Past times are fair game, the future is not
# the algorithm may compare points on a frozen copy of an earlier function
print("value at time 0:", evaluate(F, x, 0), "clock:", F.clock)
try:
    evaluate(F, x, F.clock + 5)
except ValueError as err:
    print("rejected:", err)

# %% The change history
for t, centre in F.history()[:6]:
    print(f"t={t:3d}  target={centre}  ones={centre.count_ones()}")
steps = [hamming(a, b) for (_, a), (_, b) in zip(F.history(), F.history()[1:])]
print("every move has size", set(steps))

# %% The boundary is inside
rng = np.random.default_rng(1)
c = target_at(F, F.clock)
print("distance r:  ", evaluate(F, sample_at_distance(c, 3, rng), F.clock))
print("distance r+1:", evaluate(F, sample_at_distance(c, 4, rng), F.clock))
