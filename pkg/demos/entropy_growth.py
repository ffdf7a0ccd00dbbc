"""Growth of maximal separated sets for the cat map, next to log of the unstable eigenvalue."""

import math

from skewlab import SkewSystem, max_separated, entropy_rate

system = SkewSystem()
ns = list(range(4, 11))
counts = []
for n in ns:
    sep = max_separated(system, 0.0, n, 0.25)
    counts.append(len(sep))
    print(f"n={n:2d}  separated points={len(sep):6d}  ({sep.method})")

fit = entropy_rate(ns, counts)
print(f"slope {fit.slope:.4f} +- {fit.stderr:.4f}, log lambda = {math.log(system.lambda_u):.4f}")
