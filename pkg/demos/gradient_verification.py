"""Check every analytic gradient against central finite differences: each
layer type in isolation, then every parameter of a miniature network
through the joint loss."""

from mtlsar.gradcheck import check_layers, check_network

print("per-layer checks, 10 random instances each (tolerance 1e-4):")
for name, err in check_layers(seed=0, cases=10).items():
    print(f"  {name:>20s}   max rel err {err:.3e}")

print("\nwhole-network check on a 16x16 miniature (3 classes, 2 mask classes):")
err, per_param = check_network(seed=0)
worst = sorted(per_param.items(), key=lambda kv: -kv[1])[:5]
for name, e in worst:
    print(f"  {name:>16s}   {e:.3e}")
print(f"\nmax over all {len(per_param)} parameter tensors: {err:.3e}")
