"""Random Fourier features approximate the RBF kernel.

Draw spectral weights from N(0, 2*gamma*I), map points through
phi(x) = sqrt(1/D) [cos(Wx), sin(Wx)] and compare phi(x).phi(x') with the
exact kernel exp(-gamma ||x - x'||^2).  The error shrinks like 1/sqrt(D),
which is the Monte Carlo rate the generators start from before learning
anything.

Run: python demos/01_kernel_approximation.py
"""

import numpy as np

from grff.features import RBFKernelSpec, approximation_error, rff_map_np, sample_rbf_weights

rng = np.random.default_rng(0)
X = rng.normal(size=(60, 5)) * 0.5
spec = RBFKernelSpec(gamma=1.0)

print("D      mean |error|   max |error|")
for D in (16, 64, 256, 1024, 4096):
    stats = approximation_error(X, spec, D, seed=1)
    print(f"{D:<6d} {stats.mean_abs_error:.4f}         {stats.max_abs_error:.4f}")

# Every feature vector has unit norm, whatever the weights are.
W = sample_rbf_weights(spec, 128, 5, rng)
Z = rff_map_np(X, W)
print("row norms in", np.linalg.norm(Z, axis=1).min(), "..", np.linalg.norm(Z, axis=1).max())
