"""Derive network depth, anchors and ROI budget from dataset statistics."""

import json

from facadewin.planner import (anchor_coverage, build_config, dataset_stats, plan_depth,
                               LossWeights, normalize_weights)
from facadewin.synthetic import FacadeSceneSpec, generate_facade

for width in (12.8, 25.6, 60.0):
    print(f"median window {width:5.1f} px -> {plan_depth(width)} stride-2 stages")

_, windows = generate_facade(FacadeSceneSpec(image_side=256, rows=5, cols=6, window_w=16,
                                             window_h=24, margin=10, spacing=14))
stats = dataset_stats(windows, 256, 1)
cfg = build_config(stats, p_min=0.7)
print(json.dumps(cfg.to_json(), indent=1))
print(f"anchor coverage at IoU 0.5: {anchor_coverage(cfg, windows):.0%}")

# Only the direction of the loss weights matters.
k = LossWeights(2.0, 1.0, 1.0, 1.0, 0.5)
print("normalised:", normalize_weights(k).as_array(), "==",
      normalize_weights(k.scaled(1000)).as_array())
