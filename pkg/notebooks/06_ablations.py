# %% [markdown]
# # Ablation tables
#
# Each table is a list of config overrides, one training run per row. At this
# scale the differences are mostly noise; the harness is what matters.

# %%
from mixpro import TrainConfig
from mixpro.ablation import TABLES, run_table
from mixpro.data import split_dataset, synth_dataset

for name, rows in TABLES.items():
    print(name, [r.label for r in rows])

base = TrainConfig(n_per_class=60, epochs=3, warmup_epochs=1, batch_size=32)
train, val = split_dataset(synth_dataset(base.seed, base.n_per_class), base.val_fraction, base.seed)
for row in run_table("components", base, train, val):
    print(f"{row[1]:22s} val_top1 {row[-1]}")
