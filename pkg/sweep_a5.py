"""Scratch sweep for the paired deterministic-map run (not part of the package)."""
import sys
import time

import numpy as np

from jointgen.data import SyntheticSpec, generate
from jointgen.training import ExperimentConfig, init_state, train_step
from jointgen.evaluation import critic_confusion, conditional_consistency
from jointgen.sampling import SourceSpec
from jointgen.generators import NoiseSource

name, lr, batch, gw, cw, nd, steps, style, cs = sys.argv[1:10]
lr, batch, gw, cw, nd, steps, cs = (float(lr), int(batch), int(gw), int(cw),
                                    int(nd), int(steps), int(cs))

spec = SyntheticSpec('deterministic_map', n=8000, dim=1)
ds = generate(spec, 7)
cfg = ExperimentConfig(mode='paired_5', total_steps=steps, batch_size=batch,
                       learning_rate=lr, gen_hidden=gw, critic_hidden=cw,
                       noise_dim=nd, loss_style=style, critic_steps=cs, seed=1)
if len(sys.argv) > 10:
    cfg.adam_beta1 = float(sys.argv[10])
if len(sys.argv) > 11:
    cfg.critic_layers = int(sys.argv[11])
if len(sys.argv) > 12:
    cfg.gen_layers = int(sys.argv[12])

from jointgen.evaluation import mmd2, default_bandwidths
from jointgen.generators import sample_marginal
from jointgen import autodiff as ad

state = init_state(cfg, ds)
t0 = time.time()
true_x = np.random.default_rng(11).standard_normal((1500, 1))
for i in range(cfg.total_steps):
    rep = train_step(state, cfg, ds)
    if (i + 1) % 2000 == 0:
        rmse = conditional_consistency(state.bank, spec, 500, NoiseSource(99))
        conf = critic_confusion(state.critics['joint'], SourceSpec('paired_5'),
                                state.bank, ds, 300, NoiseSource(123))
        dev = np.abs(conf - 0.2).max()
        with ad.no_grad():
            xm = sample_marginal(state.bank, 'x',
                                 NoiseSource(5).draw(1500, cfg.noise_dim)).data
        mx = mmd2(xm, true_x, default_bandwidths(true_x))
        diag = ' '.join(f'{conf[k, k]:.2f}' for k in range(5))
        print(f"[{name}] step {i+1}: rmse={rmse:.4f} confdev={dev:.3f} "
              f"margmmd={mx:.4f} diag=[{diag}] "
              f"critic={rep.critic_loss:.3f} ({time.time()-t0:.0f}s)", flush=True)
print(f"[{name}] done in {time.time()-t0:.0f}s", flush=True)
