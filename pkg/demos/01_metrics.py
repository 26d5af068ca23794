"""Matching, precision/recall and AP50 on a synthetic facade.

A perfect detector scores 1.0 everywhere.  Dropping windows lowers recall,
duplicating them lowers precision, and AP50 follows the ranking.
"""

from facadewin.evaluation import evaluate
from facadewin.synthetic import DetectorNoiseSpec, FacadeSceneSpec, generate_facade, simulate_detector

image, windows = generate_facade(FacadeSceneSpec(rows=4, cols=5, spacing=10, seed=1))
print(f"{image.id}: {image.width}x{image.height} px, {len(windows)} windows")

for label, noise in [
    ("perfect", DetectorNoiseSpec()),
    ("20% dropped", DetectorNoiseSpec(drop_prob=0.2, seed=3)),
    ("every window twice", DetectorNoiseSpec(dup_prob=1.0, jitter_px=1, seed=3)),
    ("jittered, mixed scores", DetectorNoiseSpec(jitter_px=3, score_range=(0.3, 1.0), seed=3)),
]:
    dets = simulate_detector(windows, noise)
    for mode in ("box", "mask"):
        r = evaluate(dets, windows, p_min=0.5, mode=mode)
        print(f"  {label:<24} {mode:<4} recall={r.recall:.3f} precision={r.precision:.3f} "
              f"ap50={r.ap50:.3f}")
