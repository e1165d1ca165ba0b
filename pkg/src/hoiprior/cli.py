"""Command-line interface.

Subcommands: synth, priors, forward, match, nms, eval, run, sweep.
Exit codes: 0 success, 2 validation/config error, 3 infeasible matching.
All emitted JSON is canonical (sorted keys, fixed float formatting), so
identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys

from .errors import ConfigError, InfeasibleMatchingError, SchemaError
from .evaluation import HOICategory, evaluate_scenes
from .linalg import Matrix
from .matching import (
    CostMatrix,
    GroundTruthTriplet,
    base_cost,
    external_cost,
    hungarian,
)
from .pipeline import (
    NMS_MODES,
    RunConfig,
    init_pipeline_params,
    run_scenes,
    sweep,
)
from .postprocess import HOITriplet, hoi_nms, hoi_softnms
from .priors import (
    CategoryRef,
    DetectionRecord,
    EmbeddingTable,
    filter_detections,
    score_categories,
    select_priors,
)
from .scenes import Scene, SceneParams, synth_embedding_table, synth_scene
from .serialize import (
    as_int,
    as_list,
    as_str,
    canonical_dumps,
    dump_file,
    load_file,
    require_keys,
)
from .transformer import HOIPrediction, params_from_json, params_to_json

FILE_VERSION = 1


def _check_version(obj, where: str) -> None:
    if not isinstance(obj, dict) or "version" not in obj:
        raise SchemaError(f"{where}: missing version field")
    if as_int(obj["version"], f"{where}.version") != FILE_VERSION:
        raise SchemaError(f"{where}: unsupported version {obj['version']}")


def _load_scenes(path) -> list[Scene]:
    obj = load_file(path)
    _check_version(obj, "scene file")
    require_keys(obj, {"version", "scenes"}, "scene file")
    return [
        Scene.from_json(s, f"scenes[{i}]")
        for i, s in enumerate(as_list(obj["scenes"], "scenes"))
    ]


def _load_table(path) -> EmbeddingTable:
    return EmbeddingTable.from_json(load_file(path))


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_json(load_file(args.config)) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _emit(args, obj) -> None:
    if args.out:
        dump_file(args.out, obj)
    else:
        sys.stdout.write(canonical_dumps(obj) + "\n")


def _common_flags(sub):
    sub.add_argument("--config", help="RunConfig JSON file")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--out", help="output path (default stdout)")
    sub.add_argument("--format", choices=("json", "csv"), default="json")


def _cmd_synth(args) -> int:
    params = SceneParams(
        k_obj=args.k_obj,
        k_verb=args.k_verb,
        n_gt=args.n_gt,
        h=args.grid_h,
        w=args.grid_w,
        detector_noise=args.noise,
        d_model=args.d_model,
    )
    seed = args.seed if args.seed is not None else 0
    scenes = [synth_scene(seed + i, params) for i in range(args.count)]
    _emit(args, {"version": FILE_VERSION, "scenes": [s.to_json() for s in scenes]})
    if args.table_out:
        table = synth_embedding_table(seed, args.k_obj, args.d_w)
        dump_file(args.table_out, table.to_json())
    return 0


def _priors_entry(dets, cfg: RunConfig) -> dict:
    kept = filter_detections(dets, cfg.t_det, cfg.drop_category)
    scores = score_categories(kept)
    priors = select_priors(scores, cfg.t_can, cfg.n_c)
    tiled = [priors.slots[j % cfg.n_c].to_json() for j in range(cfg.model.n_q)]
    return {
        "priors": priors.to_json(),
        "scores": {str(cat): float(s) for cat, s in scores.items()},
        "prior_of_query": tiled,
    }


def _cmd_priors(args) -> int:
    cfg = _load_config(args)
    if (args.scenes is None) == (args.detections is None):
        raise ConfigError("provide exactly one of --scenes / --detections")
    if args.detections:
        records = [
            DetectionRecord.from_json(d, f"detections[{i}]")
            for i, d in enumerate(as_list(load_file(args.detections), "detections"))
        ]
        _emit(args, {"version": FILE_VERSION, **_priors_entry(records, cfg)})
        return 0
    entries = []
    for scene in _load_scenes(args.scenes):
        entry = _priors_entry(scene.detections, cfg)
        entry["id"] = scene.id
        entries.append(entry)
    _emit(args, {"version": FILE_VERSION, "scenes": entries})
    return 0


def _pipeline_inputs(args):
    cfg = _load_config(args)
    scenes = _load_scenes(args.scenes)
    table = _load_table(args.table)
    pipeline_params = init_pipeline_params(cfg.model, table.dim, cfg.seed)
    if getattr(args, "params", None):
        model = params_from_json(load_file(args.params))
        if model.config != cfg.model:
            raise ConfigError("params file config header differs from run config")
        pipeline_params = dataclasses.replace(pipeline_params, model=model)
    return cfg, scenes, table, pipeline_params


def _cmd_forward(args) -> int:
    cfg, scenes, table, params = _pipeline_inputs(args)
    results = run_scenes(scenes, table, cfg, params, workers=args.workers)
    out = {
        "version": FILE_VERSION,
        "scenes": [
            {
                "id": r.scene_id,
                "priors": r.priors.to_json(),
                "prior_of_query": (
                    None if r.prior_of_query is None else [p.to_json() for p in r.prior_of_query]
                ),
                "predictions": [p.to_json() for p in r.predictions],
            }
            for r in results
        ],
    }
    _emit(args, out)
    return 0


def _cmd_run(args) -> int:
    cfg, scenes, table, params = _pipeline_inputs(args)
    results = run_scenes(scenes, table, cfg, params, workers=args.workers)
    out = {
        "version": FILE_VERSION,
        "config": cfg.to_json(),
        "results": [r.to_json() for r in results],
    }
    _emit(args, out)
    for r in results:
        stages = " ".join(f"{k}={v * 1000:.1f}ms" for k, v in r.timings.items())
        print(f"[timing] {r.scene_id}: {stages}", file=sys.stderr)
    if args.save_params:
        dump_file(args.save_params, params_to_json(params.model))
    return 0


def _select_scene(entries, scene_id, what: str):
    if scene_id is None:
        if len(entries) != 1:
            raise ConfigError(f"{what} holds {len(entries)} scenes; pass --scene-id")
        return entries[0]
    for entry in entries:
        if entry.get("id") == scene_id:
            return entry
    raise ConfigError(f"{what}: no scene with id {scene_id!r}")


def _cmd_match(args) -> int:
    cfg = _load_config(args)
    pred_obj = load_file(args.predictions)
    _check_version(pred_obj, "predictions file")
    pred_entry = _select_scene(as_list(pred_obj.get("scenes"), "predictions.scenes"), args.scene_id, "predictions file")
    preds = [
        HOIPrediction.from_json(p, f"predictions[{i}]")
        for i, p in enumerate(as_list(pred_entry.get("predictions"), "predictions"))
    ]
    gt_scene = _select_scene(
        [s.to_json() for s in _load_scenes(args.gt)], args.scene_id, "ground-truth file"
    )
    gts = [
        GroundTruthTriplet.from_json(g, f"gts[{i}]")
        for i, g in enumerate(gt_scene["gts"])
    ]
    priors_obj = load_file(args.priors)
    _check_version(priors_obj, "priors file")
    if "scenes" in priors_obj:
        prior_entry = _select_scene(as_list(priors_obj["scenes"], "priors.scenes"), args.scene_id, "priors file")
    else:
        prior_entry = priors_obj
    raw_refs = prior_entry.get("prior_of_query")
    prior_of_query = (
        None
        if raw_refs is None
        else [CategoryRef.from_json(r, f"prior_of_query[{i}]") for i, r in enumerate(raw_refs)]
    )
    base = base_cost(preds, gts, cfg.weights)
    if prior_of_query is None:
        ext = CostMatrix(values=Matrix.zeros(len(gts), len(preds)))
        total = base
    else:
        if len(prior_of_query) != len(preds):
            raise ConfigError("prior_of_query length does not match predictions")
        ext = external_cost(prior_of_query, gts, cfg.v)
        total = CostMatrix(values=Matrix(base.values.array + ext.values.array))
    assignment = hungarian(total)
    pairs = []
    for g, q in assignment.pairs:
        pairs.append(
            {
                "gt": g,
                "query": q,
                "base": float(base.values.array[g, q]),
                "external": float(ext.values.array[g, q]),
                "total": float(total.values.array[g, q]),
            }
        )
    _emit(
        args,
        {
            "version": FILE_VERSION,
            "pairs": pairs,
            "total": float(sum(p["total"] for p in pairs)),
        },
    )
    return 0


def _load_triplet_scenes(path) -> list[tuple[str, list[HOITriplet]]]:
    obj = load_file(path)
    _check_version(obj, "triplets file")
    if "results" in obj:  # output of `run`
        entries = as_list(obj["results"], "results")
    else:
        require_keys(obj, {"version", "scenes"}, "triplets file")
        entries = as_list(obj["scenes"], "scenes")
    out = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "triplets" not in entry:
            raise SchemaError(f"entry [{i}] missing triplets")
        out.append(
            (
                as_str(entry.get("id", str(i)), f"[{i}].id"),
                [
                    HOITriplet.from_json(t, f"[{i}].triplets[{j}]")
                    for j, t in enumerate(as_list(entry["triplets"], f"[{i}].triplets"))
                ],
            )
        )
    return out


def _cmd_nms(args) -> int:
    scenes = _load_triplet_scenes(args.triplets)
    out_entries = []
    for scene_id, triplets in scenes:
        if args.mode == "hard":
            kept = hoi_nms(triplets, args.t_iou)
        else:
            kept = hoi_softnms(triplets, args.t_iou, args.sigma)
        out_entries.append({"id": scene_id, "triplets": [t.to_json() for t in kept]})
    _emit(args, {"version": FILE_VERSION, "scenes": out_entries})
    return 0


def _load_partition(path) -> dict:
    obj = load_file(path)
    _check_version(obj, "partition file")
    require_keys(obj, {"version", "partition"}, "partition file")
    if not isinstance(obj["partition"], dict):
        raise SchemaError("partition: expected object")
    partition = {}
    for key, value in obj["partition"].items():
        parts = key.split(":")
        if len(parts) != 2:
            raise SchemaError(f"partition key {key!r} is not '<object>:<verb>'")
        try:
            cat = HOICategory(int(parts[0]), int(parts[1]))
        except ValueError:
            raise SchemaError(f"partition key {key!r} is not '<object>:<verb>'") from None
        if value not in ("full", "rare", "nonrare"):
            raise SchemaError(f"partition value {value!r} must be full/rare/nonrare")
        partition[cat] = value
    return partition


def _cmd_eval(args) -> int:
    gt_scenes = _load_scenes(args.gt)
    pred_scenes = dict(_load_triplet_scenes(args.predictions))
    unknown = set(pred_scenes) - {s.id for s in gt_scenes}
    if unknown:
        raise ConfigError(f"predictions reference unknown scene ids {sorted(unknown)}")
    partition = _load_partition(args.partition)
    preds = [pred_scenes.get(s.id, []) for s in gt_scenes]
    gts = [list(s.gts) for s in gt_scenes]
    result = evaluate_scenes(preds, gts, partition, args.iou_thresh, args.interpolation)
    _emit(args, {"version": FILE_VERSION, **result.to_json()})
    return 0


def _cmd_sweep(args) -> int:
    cfg, scenes, table, params = _pipeline_inputs(args)
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    rows = sweep(cfg, scenes, table, args.param, values, params)
    if args.format == "csv":
        buf = io.StringIO()
        columns = sorted({k for row in rows for k in row}, key=lambda c: (c != "param", c != "value", c))
        writer = csv.DictWriter(buf, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        text = buf.getvalue()
        if args.out:
            with open(args.out, "w", encoding="ascii") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        _emit(args, {"version": FILE_VERSION, "rows": rows})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hoiprior",
        description="Interaction-detection pipeline with category-prior query initialization",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate synthetic scenes (and optionally a table)")
    _common_flags(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--k-obj", dest="k_obj", type=int, default=8)
    p.add_argument("--k-verb", dest="k_verb", type=int, default=6)
    p.add_argument("--n-gt", dest="n_gt", type=int, default=3)
    p.add_argument("--grid-h", dest="grid_h", type=int, default=4)
    p.add_argument("--grid-w", dest="grid_w", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--d-model", dest="d_model", type=int, default=256)
    p.add_argument("--table-out", dest="table_out", help="also write a synthetic embedding table")
    p.add_argument("--d-w", dest="d_w", type=int, default=64, help="embedding table dimension")
    p.set_defaults(func=_cmd_synth)

    p = subs.add_parser("priors", help="compute prior categories from detections")
    _common_flags(p)
    p.add_argument("--scenes", help="scene file input")
    p.add_argument("--detections", help="bare detection-record array input")
    p.set_defaults(func=_cmd_priors)

    p = subs.add_parser("forward", help="run up to the prediction heads")
    _common_flags(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--params", help="model parameter blob (default: init from seed)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_forward)

    p = subs.add_parser("match", help="assign ground truths to predictions")
    _common_flags(p)
    p.add_argument("--predictions", required=True, help="forward output file")
    p.add_argument("--gt", required=True, help="scene file with ground truths")
    p.add_argument("--priors", required=True, help="priors file with prior_of_query")
    p.add_argument("--scene-id", dest="scene_id")
    p.set_defaults(func=_cmd_match)

    p = subs.add_parser("nms", help="suppress duplicate triplets")
    _common_flags(p)
    p.add_argument("--triplets", required=True)
    p.add_argument("--mode", choices=[m for m in NMS_MODES if m != "none"], default="hard")
    p.add_argument("--t-iou", dest="t_iou", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=0.5)
    p.set_defaults(func=_cmd_nms)

    p = subs.add_parser("eval", help="role mean average precision")
    _common_flags(p)
    p.add_argument("--predictions", required=True, help="triplets file or run output")
    p.add_argument("--gt", required=True, help="scene file with ground truths")
    p.add_argument("--partition", required=True, help="category partition file")
    p.add_argument("--iou-thresh", dest="iou_thresh", type=float, default=0.5)
    p.add_argument(
        "--interpolation", choices=("all_point", "eleven_point"), default="all_point"
    )
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("run", help="full pipeline: priors to triplets")
    _common_flags(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--params", help="model parameter blob (default: init from seed)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--save-params", dest="save_params", help="write the model blob here")
    p.set_defaults(func=_cmd_run)

    p = subs.add_parser("sweep", help="vary one hyper-parameter and report metrics")
    _common_flags(p)
    p.add_argument("--scenes", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--params", help="model parameter blob (default: init from seed)")
    p.add_argument("--param", required=True, choices=("t_det", "t_can", "n_c", "t_iou"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleMatchingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SchemaError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
