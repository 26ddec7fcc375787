# %% [markdown]
# # Progressive attention labelling
#
# The label weight for the first image blends two estimates:
#
# * the area it occupies in the mixed image,
# * the class-token attention mass that lands on its tokens.
#
# The blend weight alpha is the cosine similarity between the model's
# output probabilities and the area-mixed label. A confused model gets a
# small alpha and falls back on area.

# %%
import numpy as np

from mixpro.labeling import blend_lambda, lambda_attn, mix_labels, one_hot, progressive_factor, \
    smooth_labels
from mixpro.maskmix import downsample_mask, generate_grid_mask

rng = np.random.default_rng(1)
mask = generate_grid_mask(32, 32, 8, 1, 0.5, rng)
down = downsample_mask(mask, 8)
print("lambda_area", mask.lambda_area)

uniform = np.full(16, 1 / 16)
print("uniform attention -> lambda_attn", lambda_attn(uniform, down))

peaked = np.where(down == 1, 0.9 / down.sum(), 0.1 / (16 - down.sum()))
print("attention on image i -> lambda_attn", lambda_attn(peaked, down))

# %%
y_i = smooth_labels(one_hot(2, 10), 0.1, 10)
y_j = smooth_labels(one_hot(7, 10), 0.1, 10)
y_area = mix_labels(y_i, y_j, mask.lambda_area)
for name, p in [("uniform output", np.full(10, 0.1)),
                ("agrees with mix", y_area),
                ("confident in i", one_hot(2, 10) * 0.95 + 0.005)]:
    alpha = progressive_factor(p, y_area)
    lam = blend_lambda(alpha, lambda_attn(peaked, down), mask.lambda_area)
    print(f"{name:16s} alpha {alpha:.3f}  lambda {lam:.3f}")
