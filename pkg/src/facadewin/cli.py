"""``facadewin`` command line: ingest, prep, plan, synth, simulate, eval, sweep, compare, diagnose."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from PIL import Image, ImageDraw

from . import annotations as store
from .citygml import load_textures, scan_citygml, write_manifest
from .dataset import DatasetSplit, prepare_dataset
from .evaluation import CSV_HEADER, EvalReport, compare_runs, evaluate
from .planner import build_config, dataset_stats
from .synthetic import DetectorNoiseSpec, FacadeSceneSpec, generate_facade, simulate_detector
from .tuning import OBJECTIVES, default_grid, diagnostics, sweep_threshold, write_curve_csv

log = logging.getLogger("facadewin")

SPLIT_FILE = "split.json"
CROPS_FILE = "crops.json"


def _load_split(dataset_dir: Path) -> DatasetSplit | None:
    path = dataset_dir / SPLIT_FILE
    return DatasetSplit.from_json(store.read_json(path)) if path.exists() else None


def _ground_truth(dataset_dir, partition: str):
    dataset_dir = Path(dataset_dir)
    ds = store.load_dataset_dir(dataset_dir)
    ids = ds.image_ids()
    if partition != "all":
        split = _load_split(dataset_dir)
        if split is None:
            raise ValueError(f"--partition {partition} requested but {dataset_dir} has no {SPLIT_FILE}")
        wanted = set(getattr(split, partition))
        ids = [i for i in ids if i in wanted]
    keep = set(ids)
    gts = [a for a in ds.annotations if a.image_id in keep]
    return ds, ids, gts


def _restrict(dets, ids):
    keep = set(ids)
    return [d for d in dets if d.image_id in keep]


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    text = Path(args.gml).read_bytes()
    entries, skipped = scan_citygml(text)
    if args.textures:
        _, missing = load_textures(entries, args.textures)
        for m in missing:
            print(f"missing texture: {m}", file=sys.stderr)
    write_manifest(args.output, entries)
    print(f"{len(entries)} texture entries, {skipped} skipped -> {args.output}")
    return 0


def cmd_prep(args) -> int:
    labels = store.load_coco(args.labels)
    root = Path(args.images)
    textures = []
    for rec in labels.images:
        path = root / rec.get("file_name", f"{rec['id']}.png")
        if not path.exists():
            path = root / Path(rec.get("file_name", "")).name
        textures.append(store.load_image(path, image_id=rec["id"]))
    prepared = prepare_dataset(textures, labels.by_image(), side=args.side, seed=args.seed,
                               min_visible=args.min_visible, paper_faithful=args.paper_faithful)
    if not prepared.images:
        raise ValueError(f"no texture is at least {args.side} px on both sides")
    out = Path(args.output)
    extra = {i: {"parent_id": p} for i, p in prepared.parents.items()}
    store.save_dataset_dir(out, prepared.images, prepared.annotations, extra)
    store.write_json(out / CROPS_FILE, [c.to_json() for c in prepared.crops])
    store.write_json(out / SPLIT_FILE, prepared.split.to_json())
    s = prepared.split
    print(f"{len(prepared.crops)} crops, {len(prepared.images)} images, "
          f"split {len(s.train)}/{len(s.val)}/{len(s.test)} -> {out}")
    return 0


def cmd_plan(args) -> int:
    ds, ids, gts = _ground_truth(args.dataset, args.partition)
    records = [r for r in ds.images if r["id"] in set(ids)]
    sides = {(r["width"], r["height"]) for r in records}
    if len(sides) != 1 or len({*next(iter(sides))}) != 1:
        raise ValueError(f"planning needs equally sized square images, found {sorted(sides)}")
    side = next(iter(sides))[0]
    config = build_config(dataset_stats(gts, side, len(records)), p_min=args.pmin)
    store.write_json(args.output, config.to_json())
    print(f"k_layer={config.k_layer} anchors={config.anchor_scales} ratios={config.anchor_ratios} "
          f"rois={config.rois_per_image} -> {args.output}")
    return 0


def cmd_synth(args) -> int:
    doc = store.read_json(args.spec)
    count = int(doc.pop("count", 1))
    base = FacadeSceneSpec(**doc)
    images, anns = [], []
    for i in range(count):
        spec = FacadeSceneSpec(**{**base.to_json(), "seed": base.seed + i})
        img, a = generate_facade(spec)
        images.append(img)
        anns.extend(a)
    store.save_dataset_dir(args.output, images, anns)
    print(f"{len(images)} scenes, {len(anns)} windows -> {args.output}")
    return 0


def cmd_simulate(args) -> int:
    ds = store.load_dataset_dir(args.dataset)
    noise = DetectorNoiseSpec(**store.read_json(args.noise))
    dets = simulate_detector(ds.annotations, noise)
    store.save_detections(args.output, dets)
    print(f"{len(dets)} detections for {len(ds.annotations)} windows -> {args.output}")
    return 0


def cmd_eval(args) -> int:
    _, ids, gts = _ground_truth(args.dataset, args.partition)
    dets = _restrict(store.load_detections(args.detections), ids)
    report = evaluate(dets, gts, p_min=args.pmin, mode=args.mode, image_ids=ids,
                      coco101=args.coco101)
    store.write_json(args.output, report.to_json())
    if args.csv:
        path = Path(args.csv)
        new = not path.exists()
        with open(path, "a", encoding="utf-8") as fh:
            if new:
                fh.write(CSV_HEADER)
            fh.write(report.csv_row(args.run or Path(args.detections).stem))
    print(f"recall={report.recall:.4f} precision={report.precision:.4f} ap50={report.ap50:.4f} "
          f"tp={report.tp} fp={report.fp} fn={report.fn}")
    return 0


def _parse_grid(text: str | None) -> list[float]:
    if not text:
        return default_grid()
    return [float(t) for t in text.split(",") if t.strip()]


def cmd_sweep(args) -> int:
    _, ids, gts = _ground_truth(args.dataset, args.partition)
    dets = _restrict(store.load_detections(args.detections), ids)
    best, curve = sweep_threshold(dets, gts, _parse_grid(args.grid), args.objective, args.mode)
    write_curve_csv(args.output, curve)
    print(f"best p_min={best:.2f} ({args.objective}) -> {args.output}")
    return 0


def cmd_compare(args) -> int:
    a = EvalReport.from_json(store.read_json(args.standard))
    b = EvalReport.from_json(store.read_json(args.optimised))
    d = compare_runs(a, b)
    print(f"delta_recall={d.recall:.2f} delta_precision={d.precision:.2f} delta_ap50={d.ap50:.2f}")
    if args.output:
        store.write_json(args.output, {"recall": d.recall, "precision": d.precision, "ap50": d.ap50})
    return 0


def _draw_overlays(out_dir: Path, dataset_dir: Path, ds, dets, gts, diag) -> None:
    missed = {(m["image_id"], tuple(m["bbox"])) for m in diag["missed"]}
    for rec in ds.images:
        img = Image.open(dataset_dir / rec["file_name"]).convert("RGB")
        draw = ImageDraw.Draw(img)
        for g in gts:
            if g.image_id == rec["id"]:
                b = g.bbox
                colour = (255, 0, 0) if (g.image_id, tuple(b.to_list())) in missed else (0, 200, 0)
                draw.rectangle([b.x, b.y, b.x2 - 1, b.y2 - 1], outline=colour)
        for d in dets:
            if d.image_id == rec["id"]:
                b = d.bbox
                draw.rectangle([b.x, b.y, b.x2 - 1, b.y2 - 1], outline=(0, 120, 255))
        out_dir.mkdir(parents=True, exist_ok=True)
        img.save(out_dir / f"{rec['id']}.png", format="PNG")


def cmd_diagnose(args) -> int:
    dataset_dir = Path(args.dataset)
    ds, ids, gts = _ground_truth(dataset_dir, args.partition)
    dets = _restrict(store.load_detections(args.detections), ids)
    sides = {r["id"]: float(max(r["width"], r["height"])) for r in ds.images}
    diag = diagnostics(dets, gts, sides, iou_threshold=args.iou, p_min=args.pmin, mode=args.mode)
    if args.output:
        store.write_json(args.output, diag)
    if args.overlay_dir:
        kept = [d for d in dets if d.score >= args.pmin]
        _draw_overlays(Path(args.overlay_dir), dataset_dir, ds, kept, gts, diag)

    def fmt(v):
        return "n/a" if v is None else f"{v:.4f}"

    print(f"double-detected windows: {len(diag['doubles'])}, missed windows: {len(diag['missed'])}, "
          f"centre distance missed={fmt(diag['missed_center_mean'])} "
          f"detected={fmt(diag['detected_center_mean'])}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="facadewin", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    s = sub.add_parser("ingest", help="extract a texture manifest from a CityGML file")
    s.add_argument("gml", help="CityGML 2.0 document")
    s.add_argument("-o", "--output", required=True, help="manifest JSON to write")
    s.add_argument("--textures", help="texture root; fills image sizes and reports missing files")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("prep", help="crop, equalise, rotate and split labelled textures")
    s.add_argument("images", help="directory holding the texture images")
    s.add_argument("labels", help="COCO-style annotations of the whole textures")
    s.add_argument("--side", type=int, choices=(128, 256), required=True, help="crop side in px")
    s.add_argument("--seed", type=int, required=True, help="shuffle seed for the 6:2:2 split")
    s.add_argument("--min-visible", type=float, default=0.5,
                   help="keep a window cut by a crop edge if this fraction of it is visible")
    s.add_argument("--paper-faithful", action="store_true",
                   help="shuffle individual crops instead of keeping each texture in one partition")
    s.add_argument("-o", "--output", required=True, help="output dataset directory")
    s.set_defaults(func=cmd_prep)

    def dataset_args(s, dets=True):
        if dets:
            s.add_argument("detections", help="detections JSON array")
        s.add_argument("dataset", help="dataset directory (annotations.json + images/)")
        s.add_argument("--partition", choices=("all", "train", "val", "test"), default="all",
                       help="restrict to one partition of split.json")

    s = sub.add_parser("plan", help="plan depth, anchors and ROIs for a dataset")
    dataset_args(s, dets=False)
    s.add_argument("--pmin", type=float, default=0.7, help="detection threshold to record")
    s.add_argument("-o", "--output", required=True, help="config JSON to write")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("synth", help="generate synthetic facades with exact labels")
    s.add_argument("--spec", required=True,
                   help="scene JSON (FacadeSceneSpec fields, optional 'count' of seeds)")
    s.add_argument("-o", "--output", required=True, help="output dataset directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("simulate", help="noisy detections from a dataset's ground truth")
    s.add_argument("dataset", help="dataset directory")
    s.add_argument("--noise", required=True, help="noise JSON (DetectorNoiseSpec fields)")
    s.add_argument("-o", "--output", required=True, help="detections JSON to write")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("eval", help="recall, precision and AP50 of detections")
    dataset_args(s)
    s.add_argument("--mode", choices=("box", "mask"), default="box")
    s.add_argument("--pmin", type=float, default=0.0, help="discard detections scoring below this")
    s.add_argument("--coco101", action="store_true", help="101-point sampled AP instead of envelope")
    s.add_argument("--csv", help="append a result row to this CSV file")
    s.add_argument("--run", help="run name for the CSV row (default: detections file stem)")
    s.add_argument("-o", "--output", required=True, help="report JSON to write")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="sweep the detection threshold")
    dataset_args(s)
    s.add_argument("--objective", choices=OBJECTIVES, default="ap50")
    s.add_argument("--grid", help="comma-separated ascending thresholds (default 0.05..0.95)")
    s.add_argument("--mode", choices=("box", "mask"), default="box")
    s.add_argument("-o", "--output", required=True, help="curve CSV to write")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", help="deltas between two evaluation reports")
    s.add_argument("standard", help="baseline report JSON")
    s.add_argument("optimised", help="optimised report JSON")
    s.add_argument("-o", "--output", help="write deltas JSON")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("diagnose", help="double detections and missed-window centre bias")
    dataset_args(s)
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--pmin", type=float, default=0.0)
    s.add_argument("--mode", choices=("box", "mask"), default="box")
    s.add_argument("--overlay-dir", help="write PNG overlays of GT (green/red=missed) and detections")
    s.add_argument("-o", "--output", help="diagnostics JSON to write")
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"facadewin {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
