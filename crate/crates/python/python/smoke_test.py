"""Quick end-to-end check of the multichaos Python module."""

import math

import multichaos as mc

f = mc.TorusMap.reference(t=0.0, eps=0.05)
print(f)
x, y = f(0.1, 0.2)
assert abs(x - 0.3) < 1e-15
assert abs(y - (0.3 + 0.05 * math.sin(2 * math.pi * 0.2))) < 1e-15
assert f.jacobian(0.0, 0.0)[0] == [3.0, 0.0]

spec = mc.eigen_data(f)
assert spec["m"] == 3, spec

cone = mc.cone_verify(f, grid_n=50)
assert cone["pass"], cone

assert abs(mc.phi(f, 0.37, 0.81) - 0.37) < 1e-12

orbits = mc.find_periodic(f, period=1)
kinds = sorted(o.kind for o in orbits)
print("fixed points:", [(o.points, o.kind) for o in orbits])
assert kinds == ["Repeller", "Saddle"], kinds

rep = next(o for o in orbits if o.kind == "Repeller")
cert = mc.snapback_search(f, rep, radius=0.1, depth=12)
assert cert is not None and cert["residual"] < 1e-10, cert

assert mc.periodic_circle_bases(3, 1) == [0.0, 0.5]

golden = (math.sqrt(5) - 1) / 2
rigid = mc.TorusMap([[3, 0], [1, 1]], t=golden)
r = mc.rotation_number(rigid, base_x=0.0, y0=0.2, iters=10000)
assert abs(r["rho"] - golden) < 1e-10, r

half = mc.classify_circle(f, base_x=0.5, y0=0.1)
assert half["classification"] == {"kind": "locked", "p": 1, "q": 2}, half

s = mc.sweep(f, samples=20, iters=2000, budget=20, seed=7)
assert len(s["analyses"]) == 20
assert s["n_locked"] + s["n_quasiperiodic"] + s["n_undetermined"] == 20

l1, l2 = mc.ftle_window(mc.TorusMap([[3, 0], [1, 1]]), 0.2, 0.3, 10)
assert abs(l1 - math.log(3)) < 1e-12 and abs(l2) < 1e-12

udv = mc.positive_count_series(mc.TorusMap.reference(0.02), 0.1234, 0.5678, total=20000)
print("count fractions:", udv["stats"]["frac_one"], udv["stats"]["frac_two"])
assert udv["stats"]["frac_one"] > 0 and udv["stats"]["frac_two"] > 0

cov = mc.transitivity_cover(f, radius=0.05, grid_n=32)
print("N_cover:", cov["n_cover"])
assert cov["n_cover"] is not None and cov["coverage"][-1] == 1.0

try:
    mc.TorusMap([[2, 1], [1, 1]]).is_skew() or mc.rotation_number(mc.TorusMap([[2, 1], [1, 1]]))
except ValueError as e:
    print("rejected:", e)
else:
    raise AssertionError("non-skew map accepted")

print("smoke test ok")
