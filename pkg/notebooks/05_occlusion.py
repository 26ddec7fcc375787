# %% [markdown]
# # Patch-dropping robustness
#
# Zero a growing fraction of patches: at random, most-attended first
# (salient) or least-attended first (nonsalient). Saliency is the model's own
# class attention on the clean image.

# %%
from mixpro import TrainConfig, train_loop
from mixpro.data import split_dataset, synth_dataset
from mixpro.robustness import OcclusionSpec, occlusion_curve

cfg = TrainConfig(n_per_class=150, epochs=5, warmup_epochs=1)
train, val = split_dataset(synth_dataset(cfg.seed, cfg.n_per_class), cfg.val_fraction, cfg.seed)
params = train_loop(cfg, train, val).params

ratios = (0.0, 0.25, 0.5, 0.75, 1.0)
for mode in ("random", "salient", "nonsalient"):
    curve = occlusion_curve(params, val, OcclusionSpec(mode, ratios, seed=0))
    print(f"{mode:11s}", "  ".join(f"{r:.2f}:{a:.3f}" for r, a in curve))
