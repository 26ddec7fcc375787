# %% [markdown]
# # Mixed images and attention maps
#
# Writes PPM/PGM files any image viewer opens. The attention map is the class
# token's attention over patches, min-max scaled to 0..255.

# %%
from pathlib import Path

import numpy as np

from mixpro import TrainConfig, train_loop
from mixpro.data import split_dataset, synth_dataset
from mixpro.maskmix import make_mask, mix_images
from mixpro.pnm import attention_image, to_uint8, write_pgm, write_ppm
from mixpro.vit import forward

cfg = TrainConfig(n_per_class=100, epochs=3, warmup_epochs=1)
train, val = split_dataset(synth_dataset(cfg.seed, cfg.n_per_class), cfg.val_fraction, cfg.seed)
params = train_loop(cfg, train, val).params

out = Path("viz")
out.mkdir(exist_ok=True)
mask = make_mask("grid", 32, 32, 8, 2, 0.5, np.random.default_rng(0))
mixed = mix_images(val.images[0], val.images[1], mask)
attn = forward(params, mixed[None]).attention[0]
write_ppm(out / "mixed.ppm", to_uint8(val.denormalize(mixed)).transpose(1, 2, 0))
write_pgm(out / "attention.pgm", attention_image(attn, 4, 8))
print(np.round(attn.reshape(4, 4), 3))
