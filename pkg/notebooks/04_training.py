# %% [markdown]
# # Training a small ViT
#
# Each batch is a MaskMix + attention-labelling step or a Mixup step, chosen
# by a coin flip. This run is a shortened version of `configs/desk.cfg`;
# `mixpro train --config configs/desk.cfg --out runs/desk` does the full 30
# epochs.

# %%
import logging

from mixpro import TrainConfig, train_loop
from mixpro.data import split_dataset, synth_dataset

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = TrainConfig(n_per_class=200, epochs=6, warmup_epochs=1)
train, val = split_dataset(synth_dataset(cfg.seed, cfg.n_per_class), cfg.val_fraction, cfg.seed)
res = train_loop(cfg, train, val)

# %% [markdown]
# The mean progressive factor climbs as the model starts agreeing with the
# mixed labels, so attention gets more say in the label.

# %%
for m in res.metrics:
    print(f"epoch {m.epoch}  loss {m.train_loss:.3f}  alpha {m.alpha_mean:.3f}  val {m.val_top1:.3f}")
