"""Tour of the MPS machinery: encodings, contraction, sampling, diffusion.

Run: python3 demos/01_mps_basics.py
"""

import numpy as np

from tneda import (
    EncodingMode,
    apply_diffusion,
    partition_function,
    perfect_sample,
    probability,
    random_init,
)

rng = np.random.default_rng(0)

# A Born machine stores amplitudes: p(x) = psi(x)^2 / Z. A direct-positive
# chain stores unnormalized probabilities. Both contract in O(N chi^3).
born = random_init(n_sites=10, chi=4, mode=EncodingMode.AMPLITUDE, seed=1)
direct = random_init(n_sites=10, chi=4, mode=EncodingMode.DIRECT_POSITIVE, seed=2)
print("Born machine       Z =", partition_function(born))
print("direct positive    Z =", partition_function(direct))

x = rng.integers(0, 2, size=10)
print("\none bit string:", "".join(map(str, x)))
print("  p under Born machine  :", probability(born, x))
print("  p under direct chain  :", probability(direct, x))

# Perfect sampling is exact ancestral sampling: each draw has exactly the
# model probability, no burn-in, no autocorrelation.
draws = perfect_sample(born, rng, size=50_000)
print("\n50k perfect samples, first three:")
for row in draws[:3]:
    print("  ", "".join(map(str, row)), " p =", probability(born, row))

print("empirical P(bit_i = 1):", np.round(draws.mean(axis=0), 3))

# Diffusion: the exact distribution of "sample, then flip each bit with
# probability p". At p = 0.5 every string becomes equally likely.
half = apply_diffusion(born, 0.5)
strings = np.array([rng.integers(0, 2, size=10) for _ in range(4)])
print("\nafter p_flip = 0.5 diffusion (should all be 2^-10 = %.6f):" % 2**-10)
print("  ", np.round(probability(half, strings), 6))

light = apply_diffusion(born, 0.01)
print("after p_flip = 0.01 diffusion, probabilities move slightly:")
print("   before:", np.round(probability(born, strings), 6))
print("   after :", np.round(probability(light, strings), 6))
