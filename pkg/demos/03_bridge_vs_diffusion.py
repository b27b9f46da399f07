"""
Bridge versus noise-to-data diffusion
=====================================

Both paradigms share data, network, conditioning and optimizer.  The bridge
starts sampling from the source clip; the baseline starts from pure noise and
sees the source only through its conditioning.  Full budget is 2000 steps per
model (about two minutes); pass a smaller number as the first argument for a
quick look.
"""

import sys
from dataclasses import replace

from vpbridge.experiments import ExperimentSetup, paradigm_comparison, steps_ablation
from vpbridge.schedule import NoiseSchedule

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
setup = ExperimentSetup()
setup = replace(setup, train=replace(setup.train, total_steps=steps))
s = NoiseSchedule()

results = paradigm_comparison(setup, s)
for kind, res in results.items():
    m = res["metrics"]
    print(f"{kind:9s}  removal {m['removal_ratio']:.3f}  unmasked MSE {m['unmasked_mse']:.4f}"
          f"  PSNR {m['unmasked_psnr']:.1f} dB  final loss {res['curve'][-1][1]:.4f}")

# how the bridge model responds to the number of sampling steps
_, eval_set = setup.datasets()
for row in steps_ablation(results["bridge"]["params"], eval_set, s, seed=setup.sample_seed):
    print(f"steps {row['steps']:2d}  removal {row['removal_ratio']:.4f}")
