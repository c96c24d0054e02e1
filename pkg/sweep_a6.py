"""Scratch probe for the correlated-Gaussian benchmark (not part of the package)."""
import sys
import time

import numpy as np

from jointgen import autodiff as ad
from jointgen.data import SyntheticSpec, generate, holdout_split
from jointgen.evaluation import default_bandwidths, mmd2, mmd2_permutation_null
from jointgen.generators import NoiseSource, sample_joint_chain, sample_marginal
from jointgen.training import ExperimentConfig, train

name, mode, lr, batch, gw, cw, nd, steps, cs, seed = sys.argv[1:11]
lr, batch, gw, cw, nd, steps, cs, seed = (float(lr), int(batch), int(gw), int(cw),
                                          int(nd), int(steps), int(cs), int(seed))

spec = SyntheticSpec("correlated_gaussian", n=12000, dim=1, rho=0.9)
full = generate(spec, 7)
train_ds, held = holdout_split(full, 1.0 / 3.0, seed=1)

cfg = ExperimentConfig(mode=mode, total_steps=steps, batch_size=batch,
                       learning_rate=lr, gen_hidden=gw, critic_hidden=cw,
                       noise_dim=nd, critic_steps=cs, seed=seed,
                       gen_layers=2, critic_layers=2)
t0 = time.time()
state, log = train(cfg, train_ds)
elapsed = time.time() - t0

hx, hy = held.joint(("x", "y"))
truth = np.concatenate([hx, hy], axis=1)
half = truth.shape[0] // 2
bw = default_bandwidths(truth)
noise = NoiseSource(99)
with ad.no_grad():
    b = sample_joint_chain(state.bank, "x_then_y",
                           (noise.draw(2000, cfg.noise_dim),
                            noise.draw(2000, cfg.noise_dim)))
gen = np.concatenate([v.data for v in b.values], axis=1)
stat = mmd2(gen, truth[:2000], bw)
null = mmd2_permutation_null(truth[:half][:2000], truth[half:][:2000], bw,
                             n_permutations=200, seed=3)
thr = np.percentile(null, 99)
corr = np.corrcoef(gen[:, 0], gen[:, 1])[0, 1]
print(f"[{name}] steps={steps} {elapsed:.0f}s mmd2={stat:.6f} thr99={thr:.6f} "
      f"pass={stat < thr} corr={corr:.3f} "
      f"gen_std=({gen[:,0].std():.3f},{gen[:,1].std():.3f})", flush=True)
