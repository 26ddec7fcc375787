# %% [markdown]
# # A tiny reverse-mode autodiff
#
# Every tensor records the op that produced it. `backward` walks the graph in
# reverse topological order and hands each parent its share of the gradient.

# %%
import numpy as np

from mixpro import autodiff as ad
from mixpro.autodiff import Tensor
from mixpro.gradcheck import OP_CASES, check_op, check_vit

x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
loss = (x * x).sum()
loss.backward()
print("d/dx sum(x^2) =", x.grad)

# %% [markdown]
# Soft-target cross entropy is the loss used everywhere in training. With
# uniform logits it costs ln K whatever the target distribution is.

# %%
logits = Tensor(np.zeros((1, 10)), requires_grad=True)
target = np.full((1, 10), 0.01)
target[0, 3] = 0.91
ce = ad.cross_entropy_soft(logits, target)
ce.backward()
print("loss", float(ce.data), "ln 10", np.log(10))
print("grad = softmax - target:", np.round(logits.grad, 3))

# %% [markdown]
# ## Checking gradients numerically
#
# Central differences with h = 1e-4 on every op, then random-projection checks
# on each parameter tensor of a depth-2, width-16 ViT.

# %%
for name in OP_CASES:
    print(f"{name:20s} {max(check_op(name, s) for s in range(5)):.2e}")
err, where = check_vit(0)
print(f"{'vit':20s} {err:.2e}  (worst tensor {where})")
