# %% [markdown]
# # Mixing masks
#
# A grid mask picks floor(S * tau) of S cells. Cells are `scale_k` image
# patches wide, so every patch token of the mixed image comes from one source.
# A CutMix rectangle ignores the patch grid.

# %%
import numpy as np

from mixpro.maskmix import downsample_mask, make_mask, mix_images, sample_tau
from mixpro.vit import patchify

rng = np.random.default_rng(0)


def show(mask, patch=8):
    down = downsample_mask(mask, patch).reshape(mask.height // patch, -1)
    for row in down:
        print(" ".join("#" if v else "." for v in row))


for strategy in ("grid", "region", "block"):
    m = make_mask(strategy, 32, 32, 8, 2, 0.5, rng)
    print(f"{strategy}: lambda_area = {m.lambda_area}")
    show(m)

# %% [markdown]
# A region box cuts through patches; the grid mask never does.

# %%
a, b = np.zeros((3, 32, 32)), np.ones((3, 32, 32))
for strategy in ("grid", "region"):
    m = make_mask(strategy, 32, 32, 8, 1, 0.3, np.random.default_rng(5))
    tokens = patchify(mix_images(a, b, m), 8)
    mixed = sum(0 < t.mean() < 1 for t in tokens)
    print(f"{strategy}: {mixed} of 16 tokens contain pixels from both images")

# %% [markdown]
# tau is drawn from Beta(beta, beta); beta = 1 is uniform.

# %%
draws = np.array([sample_tau(1.0, rng) for _ in range(20000)])
print("mean %.3f  var %.4f  (1/12 = %.4f)" % (draws.mean(), draws.var(), 1 / 12))
