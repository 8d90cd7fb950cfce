"""Check every layer's analytic gradients against central finite
differences. Each kind is run on several seeded random instances; the
printed number is the worst relative error seen."""

from skullnet.tensor import make_rng
from skullnet.train import grad_check

EPSILON = 1e-3
SEEDS = range(10)

print(f"central differences, epsilon={EPSILON}, {len(list(SEEDS))} instances per kind\n")
for kind in ("conv", "leaky_relu", "maxpool", "dense", "bce_head"):
    worst = max(grad_check(kind, make_rng(seed), EPSILON) for seed in SEEDS)
    print(f"  {kind:12s} max relative error {worst:.3e}")

print("\nanything below 1e-4 means the backward pass matches the forward map.")
