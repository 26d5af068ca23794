"""Choose a score threshold, then look at what the detector still gets wrong."""

from facadewin.evaluation import compare_runs, evaluate
from facadewin.synthetic import DetectorNoiseSpec, FacadeSceneSpec, generate_facade, simulate_detector
from facadewin.tuning import diagnostics, nms, sweep_threshold

spec = FacadeSceneSpec(image_side=128, rows=4, cols=4, seed=2)
_, windows = generate_facade(spec)
noise = DetectorNoiseSpec(drop_prob=0.1, dup_prob=0.4, jitter_px=2, score_range=(0.2, 1.0), seed=9)
dets = simulate_detector(windows, noise, drop_indices=[0, 3, 12, 15])  # lose the corners

best, curve = sweep_threshold(dets, windows, objective="f1")
print(f"best p_min by F1: {best:.2f}")
for p in curve[::3]:
    print(f"  p_min={p.threshold:.2f} precision={p.precision:.3f} recall={p.recall:.3f}")

before = evaluate(dets, windows, p_min=best)
after = evaluate(nms(dets), windows, p_min=best)
print("NMS delta (recall, precision, ap50):", compare_runs(before, after).as_tuple())

diag = diagnostics(dets, windows, float(spec.image_side), p_min=best)
print(f"{len(diag['doubles'])} windows detected more than once, {len(diag['missed'])} missed")
print(f"mean centre distance: missed {diag['missed_center_mean']:.3f}, "
      f"detected {diag['detected_center_mean']:.3f}")
