# Simulated acquisition: phantom -> centered k-space -> column mask -> zero-filled magnitude.
import numpy as np

from clgnet import cartesian_mask, make_pair, nmse, phantom, psnr, ssim
from clgnet.mrisim import center_columns, to_kspace

gt = phantom(64, 64)
gt.shape, float(gt.data.max())

# %% k-space is shifted: DC sits at (H//2, W//2)
k = to_kspace(gt)
np.unravel_index(np.abs(k[0]).argmax(), k.shape[1:])

# %% 4x mask, 8% centre block
mask = cartesian_mask(64, 4, 0.08, seed=0)
print("".join("|" if c else "." for c in mask.columns))
print("sampled:", mask.columns.mean(), "centre:", center_columns(64, 0.08))

# %% the zero-filled input is the degraded baseline
pair = make_pair(gt, mask)
print(f"zero-filled  nmse {nmse(pair.input, pair.gt):.4f}  psnr {psnr(pair.input, pair.gt):.2f}"
      f"  ssim {ssim(pair.input, pair.gt):.4f}")

# %% 8x is worse
pair8 = make_pair(gt, cartesian_mask(64, 8, 0.04, seed=0))
print(f"8x zero-filled psnr {psnr(pair8.input, pair8.gt):.2f}")

# %% sampled fraction over many seeds
fr = [cartesian_mask(256, 4, 0.08, s).columns.mean() for s in range(1000)]
print(np.mean(fr), np.std(fr))

# %% jittered variants give a train/val spread
for s in range(3):
    p = phantom(64, 64, variant_seed=s)
    print(s, round(float(p.data.mean()), 4))
