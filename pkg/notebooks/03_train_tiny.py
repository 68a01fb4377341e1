# Short training run of the tiny network on simulated pairs.
# The full 2000-step overfit run lives in tests/test_acceptance.py; this one
# stops early so it finishes in about a minute.
import numpy as np

from clgnet import NetConfig, TrainConfig, evaluate, init_params, param_count, train
from clgnet.dataset import build_pairs

pairs = build_pairs(10, 64, 64, 4, 0.08, seed=0)
train_pairs, val_pairs = pairs[:8], pairs[8:]
cfg = NetConfig.tiny()
print("tiny params:", param_count(cfg), " default params:", param_count(NetConfig()))

# %% untrained network
base = evaluate(init_params(cfg, 0), train_pairs)["mean"]
print(f"init  psnr {base['psnr_model']:.2f}  zero-filled {base['psnr_zf']:.2f}")

# %% a few hundred Adam steps
tcfg = TrainConfig(batch_size=8, steps=150, alpha=0.05, k=6, lr=5e-3, seed=0)
res = train(cfg, tcfg, train_pairs, model_seed=0)
for row in res.log[::50]:
    print(row)

# %% train / val metrics
for name, ds in (("train", train_pairs), ("val", val_pairs)):
    m = evaluate(res.params, ds)["mean"]
    print(f"{name:5s} psnr {m['psnr_model']:.2f} (zf {m['psnr_zf']:.2f})  ssim {m['ssim_model']:.3f}")

# %% residual error map of the first image
out = evaluate(res.params, train_pairs[:1])["outputs"][0, 0]
err = np.abs(out - train_pairs[0].gt.data[0])
print("max err", err.max(), "mean err", err.mean())
