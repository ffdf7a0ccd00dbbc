"""Glue three orbit pieces of the angle-driven skew product into one true orbit."""

from skewlab import (SkewSystem, RotationDriver, AffineFiberFamily, CAT_MAP, Specification,
                     NumericsContext, shadow_specification, verify_shadowing)

system = SkewSystem(RotationDriver(), AffineFiberFamily(CAT_MAP, "angle"))
spec = Specification(0.1, [(0, 9), (30, 45), (70, 80)], [(0.1, 0.2), (0.7, 0.3), (0.5, 0.5)])
ctx = NumericsContext.for_depth(spec.horizon, system.lambda_u)

res = shadow_specification(system, spec, 0.05, ctx)
ok, worst = verify_shadowing(system, spec, res.point, 0.05, ctx)
print("point:", *res.point.decimal_strings(30))
for i, (dev, bound) in enumerate(zip(res.block_deviations, res.block_bounds)):
    print(f"block {i}: deviation {dev:.3e} (bound {bound:.3e})")
print(f"verified={ok}, worst deviation {worst:.3e}")
