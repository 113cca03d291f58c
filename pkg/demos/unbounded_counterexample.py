"""Why membership in a single L_p is not enough for second-order smoothness.

The weighted diagonal algebra on d atoms of mass 1/d models a finite measure
space.  With a = 1 and the heavy-tail perturbation b_k = (k/d)^(-1/(1.5 p)),
b stays in L_p but escapes L_2p as d grows, and the first derivative of
t -> f(a + tb) loses its own differentiability at t = 0: the difference
quotient norm at t = 1/d blows up with d.  A bounded control perturbation
(b = 1) run through the identical pipeline settles to a constant instead.

Run:  python demos/unbounded_counterexample.py
"""

from moilab import lp_counterexample_demo

p = 2.0
dims = [16, 64, 256, 1024, 4096]
rows = lp_counterexample_demo(p=p, dims=dims)

print(f"difference-quotient p-norms at t = 1/d (p = {p}):\n")
print("    d            t        heavy tail     bounded")
for r in rows:
    print(f"{r.dim:5d}   {r.t:.4e}   {r.r_heavy:12.6f}   {r.r_bounded:.6f}")

heavy = [r.r_heavy for r in rows]
control = [r.r_bounded for r in rows]
print("\nsuccessive ratios:")
print("  heavy tail:", [f"{b / a:.3f}" for a, b in zip(heavy, heavy[1:])],
      " (keeps growing; no limit exists)")
print("  bounded   :", [f"{b / a:.3f}" for a, b in zip(control, control[1:])],
      " (settles to 1; the derivative exists)")
