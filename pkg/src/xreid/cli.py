"""Command-line driver: ``xreid {gen,synth,preprocess,train,rank,eval,sweep}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fileio
from .config import RunConfig
from .dataset import Dataset, WalkRecord, generate, track_radar
from .errors import XReIDError
from .experiments import SWEEPS, evaluate, feasibility_study, model_scores, sweep, training_source
from .gait import GaitParams
from .metrics import CCDF_GRID, cmc_from_scores, rank_gallery
from .preprocess import segment_subjects
from .signature import synthesize_signature
from .train import train

ABLATIONS = ("full", "noST", "noAtt", "noTL")
TOP_COLUMNS = 9


def _meta_line(cfg: RunConfig, **extra) -> str:
    meta = dict(cfg.metadata(), **extra)
    return json.dumps({"header": meta}, sort_keys=True)


def _set_threads(n: int) -> None:
    try:
        import numba
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", numba.NumbaWarning)    # TBB version notice on import
            numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    except ImportError:
        pass


# dataset directory ----------------------------------------------------------

def write_dataset(data: Dataset, root: Path, cfg: RunConfig) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    head = _meta_line(cfg)
    mesh, sigs, radar = [head], [], [head]
    sig_head = json.loads(fileio.signature_header(np.deg2rad(data.config.epsilon_deg)))
    sig_head["header"].update(cfg.metadata())
    sigs.append(json.dumps(sig_head, sort_keys=True))
    for r in data.records:
        mesh += fileio.mesh_lines(r.identity, r.walk, r.mesh)
        sigs += fileio.signature_lines(r.identity, r.walk, r.signature)
        radar += fileio.radar_lines(r.identity, r.walk, r.raw_radar)
    fileio.write_lines(root / "mesh.jsonl", mesh)
    fileio.write_lines(root / "signatures.jsonl", sigs)
    fileio.write_lines(root / "radar.jsonl", radar)
    manifest = {
        "meta": cfg.metadata(),
        "identities": len(data.cohort),
        "walks": data.config.walks,
        "frames": data.config.frames,
        "seed": data.config.seed,
        "cohort": [{k: getattr(g, k) for k in GaitParams.__dataclass_fields__} for g in data.cohort],
        "records": [{"id": r.identity, "walk": r.walk, "tracked": r.tracked} for r in data.records],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def read_dataset(root: Path, cfg: RunConfig) -> Dataset:
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path}: dataset manifest not found (run `xreid gen` first)")
    manifest = json.loads(manifest_path.read_text())
    cohort = [GaitParams(**g) for g in manifest["cohort"]]
    sigs = fileio.group_frames(fileio.read_jsonl(root / "signatures.jsonl")[1])
    meshes = fileio.group_frames(fileio.read_jsonl(root / "mesh.jsonl")[1])
    radars = fileio.group_frames(fileio.read_jsonl(root / "radar.jsonl")[1])
    records = []
    for entry in manifest["records"]:
        key = (entry["id"], entry["walk"])
        raw = fileio.radar_frames(radars.get(key, []))
        frames, ok = track_radar(raw)
        records.append(WalkRecord(entry["id"], entry["walk"], frames, fileio.signature_frames(sigs.get(key, [])),
                                  fileio.signature_frames(meshes.get(key, [])), tracked=ok))
    sim = cfg.sim()
    sim.seed = manifest["seed"]
    return Dataset(sim, cohort, records)


# subcommands ----------------------------------------------------------------------

def cmd_gen(args, cfg: RunConfig, out: Path) -> int:
    data = generate(cfg.sim(), cfg.radar(), cfg.noise())
    manifest = write_dataset(data, out / "dataset", cfg)
    print(f"wrote {len(manifest['records'])} records for {manifest['identities']} identities to {out / 'dataset'}")
    return 0


def cmd_synth(args, cfg: RunConfig, out: Path) -> int:
    mesh_path = Path(args.mesh) if args.mesh else out / "dataset" / "mesh.jsonl"
    _, recs = fileio.read_jsonl(mesh_path)
    eps = float(np.deg2rad(cfg["sig.epsilon"]))
    head = json.loads(fileio.signature_header(eps))
    head["header"].update(cfg.metadata())
    lines = [json.dumps(head, sort_keys=True)]
    for (ident, walk), group in fileio.group_frames(recs).items():
        sig = [synthesize_signature(f, epsilon=eps) for f in fileio.mesh_frames(group)]
        lines += fileio.signature_lines(ident, walk, sig)
    path = fileio.write_lines(out / "synth" / "signatures.jsonl", lines)
    print(f"wrote {path}")
    return 0


def cmd_preprocess(args, cfg: RunConfig, out: Path) -> int:
    radar_path = Path(args.radar) if args.radar else out / "dataset" / "radar.jsonl"
    _, recs = fileio.read_jsonl(radar_path)
    head = _meta_line(cfg)
    written = 0
    for (ident, walk), group in fileio.group_frames(recs).items():
        tracks = segment_subjects(fileio.radar_frames(group), args.subjects)
        for k, tr in enumerate(tracks):
            lines = [head] + fileio.radar_lines(ident, walk, tr.frames, track=k)
            fileio.write_lines(out / "tracks" / f"id{ident}_walk{walk}_track{k}.jsonl", lines)
            written += 1
    print(f"wrote {written} track files to {out / 'tracks'}")
    return 0


def cmd_train(args, cfg: RunConfig, out: Path) -> int:
    data = read_dataset(Path(args.dataset) if args.dataset else out / "dataset", cfg)
    train_recs, test_recs = data.split()
    tcfg = cfg.train()
    result = train(training_source(train_recs, tcfg.ablation), tcfg)
    meta = cfg.metadata()
    fileio.save_checkpoint(out / "checkpoint.json", result.model, {"meta": meta})
    fileio.write_csv(out / "loss_trace.csv", ["epoch", "loss"],
                     [(i + 1, float(v)) for i, v in enumerate(result.loss_trace)], meta)
    split = [{"id": r.identity, "walk": r.walk, "split": s}
             for s, rs in (("train", train_recs), ("test", test_recs)) for r in rs]
    fileio.write_csv(out / "split.csv", ["id", "walk", "split"],
                     [(d["id"], d["walk"], d["split"]) for d in split], meta)
    print(f"trained {tcfg.epochs} epochs on {len(train_recs)} records; checkpoint at {out / 'checkpoint.json'}")
    return 0


def _load_model(args, out: Path):
    path = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json"
    return fileio.load_checkpoint(path)[0]


def cmd_rank(args, cfg: RunConfig, out: Path) -> int:
    model = _load_model(args, out)
    gallery_dir = Path(args.gallery) if args.gallery else out / "dataset"
    name = "mesh.jsonl" if model.config.ablation == "noST" else "signatures.jsonl"
    gal = fileio.group_frames(fileio.read_jsonl(gallery_dir / name)[1])
    gallery = [WalkRecord(k[0], k[1], [], fileio.signature_frames(v), fileio.signature_frames(v))
               for k, v in gal.items()]
    query_path = Path(args.query) if args.query else out / "dataset" / "radar.jsonl"
    queries = []
    for key, group in fileio.group_frames(fileio.read_jsonl(query_path)[1]).items():
        frames = fileio.radar_frames(group)
        if len(key) == 2:
            frames, _ = track_radar(frames)
        queries.append(WalkRecord(key[0], key[1], frames, [], []))
    scores = model_scores(model, queries, gallery, model.config.ablation)
    rows = []
    for qi, q in enumerate(queries):
        for pos, gi in enumerate(rank_gallery(scores[qi])):
            rows.append((q.identity, q.walk, pos + 1, gallery[gi].identity, gallery[gi].walk, float(scores[qi, gi])))
    if args.labeled:
        cmc_from_scores(scores, [q.identity for q in queries], [g.identity for g in gallery])
    path = fileio.write_csv(out / "ranking.csv", ["query_id", "query_walk", "rank", "identity", "walk", "score"],
                            rows, cfg.metadata())
    for q in queries[: args.show]:
        top = [r for r in rows if r[0] == q.identity and r[1] == q.walk][:5]
        print(f"query id={q.identity} walk={q.walk}: " + ", ".join(f"{r[3]}({r[5]:.3f})" for r in top))
    print(f"wrote {path}")
    return 0


def cmd_eval(args, cfg: RunConfig, out: Path) -> int:
    data = read_dataset(Path(args.dataset) if args.dataset else out / "dataset", cfg)
    _, test_recs = data.split()
    scorer = args.scorer or cfg["eval.scorer"]
    model = _load_model(args, out) if scorer == "model" else None
    ablation = model.config.ablation if model is not None else "full"
    res = evaluate(test_recs, test_recs, scorer, model, ablation)
    meta = dict(cfg.metadata(), scorer=scorer)
    name = "cmc.csv" if scorer == "model" else f"cmc_{scorer}.csv"
    ks = sorted(res.top_k_accuracy)
    fileio.write_csv(out / name, ["k", "accuracy"], [(k, res.top_k_accuracy[k]) for k in ks], meta)
    fileio.write_svg(out / name.replace(".csv", ".svg"), {scorer: (ks, [res.top_k_accuracy[k] for k in ks])},
                     "CMC", "rank k", "accuracy", meta=meta)
    print(f"{scorer}: top-1 {res.top(1):.3f}  top-5 {res.top(5):.3f}")
    n_ids = cfg["eval.feasibility_identities"]
    if n_ids >= 2:
        delta = cfg["eval.delta"] or None
        feas = feasibility_study(n_ids, cfg["eval.feasibility_walks"], cfg.seed, delta,
                                 radar_cfg=cfg.radar(), noise=cfg.noise())
        rows = [(float(t), float(v), "same") for t, v in zip(CCDF_GRID, feas.same_ccdf)]
        rows += [(float(t), float(v), "different") for t, v in zip(CCDF_GRID, feas.different_ccdf)]
        fileio.write_csv(out / "ccdf.csv", ["threshold", "fraction", "cohort"], rows, meta)
        fileio.write_svg(out / "ccdf.svg", {"same": (CCDF_GRID, feas.same_ccdf),
                                            "different": (CCDF_GRID, feas.different_ccdf)},
                         "Intersection ratio CCDF", "ratio", "fraction of frames", meta=meta)
        print(f"intersection ratio: same {np.mean(feas.same):.3f}  different {np.mean(feas.different):.3f}")
    return 0


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    experiment = args.experiment or cfg["eval.sweep"]
    grid = [float(v) for v in args.grid.split(",")] if args.grid else cfg.grid()
    data = read_dataset(Path(args.dataset) if args.dataset else out / "dataset", cfg)
    scorer = args.scorer or cfg["eval.scorer"]
    model = _load_model(args, out) if scorer == "model" and experiment != "epsilon" and args.checkpoint else None
    rows = sweep(experiment, grid, data, cfg.train(), scorer, model, cfg.radar(), cfg.noise())
    table = []
    for row in rows:
        table.append([_grid_text(row.value)] + [row.result.top(k) for k in range(1, TOP_COLUMNS + 1)])
    meta = dict(cfg.metadata(), experiment=experiment, scorer=scorer)
    path = fileio.write_csv(out / f"sweep_{experiment}.csv",
                            [experiment] + [f"top{k}" for k in range(1, TOP_COLUMNS + 1)], table, meta)
    fileio.write_svg(out / f"sweep_{experiment}.svg",
                     {"top1": ([r.value for r in rows], [r.result.top(1) for r in rows]),
                      "top5": ([r.value for r in rows], [r.result.top(5) for r in rows])},
                     f"{experiment} sweep", experiment, "accuracy", meta=meta)
    print(f"wrote {path}")
    return 0


def _grid_text(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.6f}"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides sim.seed")
    common.add_argument("--out", help="output directory (XREID_OUT overrides)")
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--ablation", choices=ABLATIONS, help="overrides train.ablation")
    common.add_argument("--scorer", choices=("model", "emd"), help="overrides eval.scorer")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    p = argparse.ArgumentParser(prog="xreid", description="Cross-modal radar/vision gait re-identification.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="simulate a cohort and write the dataset files")
    s = sub.add_parser("synth", parents=[common], help="synthesise signatures from a mesh file")
    s.add_argument("--mesh")
    s = sub.add_parser("preprocess", parents=[common], help="segment radar recordings into tracks")
    s.add_argument("--radar")
    s.add_argument("--subjects", type=int, default=None, help="expected number of subjects")
    s = sub.add_parser("train", parents=[common], help="train the metric network")
    s.add_argument("--dataset")
    s = sub.add_parser("rank", parents=[common], help="rank a gallery for each radar query")
    s.add_argument("--checkpoint")
    s.add_argument("--query")
    s.add_argument("--gallery")
    s.add_argument("--labeled", action="store_true", help="require every query identity in the gallery")
    s.add_argument("--show", type=int, default=5)
    s = sub.add_parser("eval", parents=[common], help="CMC on the test split plus the intersection study")
    s.add_argument("--checkpoint")
    s.add_argument("--dataset")
    s = sub.add_parser("sweep", parents=[common], help="sensitivity sweep")
    s.add_argument("--experiment", choices=SWEEPS)
    s.add_argument("--grid", help="comma-separated grid values")
    s.add_argument("--checkpoint")
    s.add_argument("--dataset")
    return p


COMMANDS = {"gen": cmd_gen, "synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
            "rank": cmd_rank, "eval": cmd_eval, "sweep": cmd_sweep}


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        key, _, value = item.partition("=")
        cfg.set(key.strip(), value)
    if args.seed is not None:
        cfg.set("sim.seed", args.seed)
    if args.ablation:
        cfg.set("train.ablation", args.ablation)
    if args.scorer:
        cfg.set("eval.scorer", args.scorer)
    if args.threads is not None:
        cfg.set("io.threads", args.threads)
    out = os.environ.get("XREID_OUT") or args.out
    if out:
        cfg.set("io.out", out)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        _set_threads(cfg["io.threads"])
        return COMMANDS[args.command](args, cfg, Path(cfg["io.out"]))
    except (XReIDError, OSError, ValueError, KeyError) as exc:
        print(f"xreid {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
