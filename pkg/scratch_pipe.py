"""Scratch: pipeline smoke + iteration timing (not shipped)."""
import shutil
import time

import numpy as np

from tryonsplat import pipeline, synthdata

cfg = pipeline.Config(iterations=10)
cfg.validate()

ds_dir = "/tmp/ds_smoke"
shutil.rmtree(ds_dir, ignore_errors=True)
t0 = time.perf_counter()
manifest = pipeline.cmd_synth(cfg, ds_dir)
t1 = time.perf_counter()
print(f"synth: {t1 - t0:.1f} s, artifacts={len(manifest['hashes'])}")

dataset = synthdata.load_dataset(ds_dir)
state = pipeline.init_state(cfg, dataset)

for it in range(6):
    t0 = time.perf_counter()
    terms = pipeline.train_iteration(state)
    t1 = time.perf_counter()
    print(f"iter {state.iteration}: {t1 - t0:.2f} s  l1={terms['l1']:.4f} "
          f"lp={terms['lp']:.4f} total={terms['total']:.4f}")
