"""Build a point whose cos(2 pi x1) averages alternate between 0 and 1 over four levels.

Takes about half a minute.
"""

from skewlab import SkewSystem, build_schedule, construct_irregular
from skewlab.orbit import COS_X1

system = SkewSystem()
schedule = build_schedule(0.2, 4, growth=12)
cert = construct_irregular(system, 0.0, COS_X1, 0.0, 1.0, schedule)

x = cert.exact_point
# x* sits extremely close to the fixed point (0, 0), far below double resolution
for name, coord in (("x1", x.x1), ("x2", x.x2)):
    near = min(coord, (1 << x.bits) - coord)
    print(f"{name} is within 2^-{x.bits - near.bit_length()} of 0 ({x.bits} bits stored)")
for k, (t, a, d, tol) in enumerate(zip(cert.trace.times, cert.trace.averages,
                                       cert.deviations, cert.tolerances), 1):
    print(f"level {k}: T={int(t):8d}  average={float(a):+.4f}  target={cert.target(k):.0f}  "
          f"deviation={d:.4f} <= {tol:.4f}")
