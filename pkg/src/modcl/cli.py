"""Command-line entry point: ``modcl <subcommand> [flags]``.

Exit status: 0 success, 1 input error (including bad flags), 2 infeasible
requirements or MaxSAT problems.  Output files are written atomically and
only after all computation succeeded.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corrector, datagen, detections, evaluation, fuzzy, maxsat
from .errors import InfeasibleError, InputError
from .fixtures import LABELS_FILE, REQUIREMENTS_FILE, data_text
from .requirements import eval_boolean, parse_labelspace, parse_requirements


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- file helpers ---------------------------------------------------------


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def write_atomic(path, data) -> None:
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_files(outdir, files: dict) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        write_atomic(outdir / name, data)


def _load_ls(args):
    text = _read(args.labels) if args.labels else data_text(LABELS_FILE)
    return parse_labelspace(text)


def _load_rs(args, ls):
    text = _read(args.requirements) if args.requirements else data_text(REQUIREMENTS_FILE)
    return parse_requirements(text, ls)


def _check_unit(name, value, lo_open=False):
    if not (0.0 < value <= 1.0 if lo_open else 0.0 <= value <= 1.0):
        raise UsageError(f"{name} must lie in {'(0, 1]' if lo_open else '[0, 1]'}")


def _map_frames(fn, frames, jobs, context: dict):
    """Apply ``fn`` per frame; results keep input order regardless of ``jobs``."""
    if jobs <= 1 or len(frames) < 2:
        _init_worker(context)
        return [fn(f) for f in frames]
    chunk = max(1, len(frames) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(context,)) as pool:
        return list(pool.map(fn, frames, chunksize=chunk))


# per-process state for frame workers, set by _init_worker
_WORKER: dict = {}


def _init_worker(context):
    _WORKER.clear()
    _WORKER.update(context)


def _make_solver(choice: str):
    if choice == "internal":
        return maxsat.solve
    if choice.startswith("external:"):
        parts = shlex.split(choice[len("external:"):])
        if not parts:
            raise UsageError("external solver path is empty")
        return maxsat.ExternalSolver(parts[0], parts[1:])
    raise UsageError(f"unknown solver {choice!r}; use internal or external:<path>")


# -- subcommands ----------------------------------------------------------


def cmd_validate(args, out):
    ls = _load_ls(args)
    rs = _load_rs(args, ls)
    counts = {g: sum(1 for x in ls.groups if x == g) for g in ("agent", "action", "location", "other")}
    groups = ", ".join(f"{g} {c}" for g, c in counts.items() if c)
    out.write(f"labels {len(ls)} ({groups})\nrequirements {len(rs)}\nsatisfiable yes\n")
    if args.check:
        frames = detections.read_ground_truth(_read(args.check), len(ls))
        total = bad = 0
        for f in frames:
            for k, d in enumerate(f.detections):
                total += 1
                ok, violated = eval_boolean(rs, d.labels)
                if not ok:
                    bad += 1
                    out.write(f"violation frame {f.frame_id} detection {k} clauses {violated}\n")
        out.write(f"checked {total} satisfied {total - bad}\n")
        if bad:
            return 2
    return 0


def cmd_loss(args, out):
    ls = _load_ls(args)
    rs = _load_rs(args, ls)
    frames = detections.read_detections(_read(args.scores), len(ls))
    nets = corrector.load_checkpoint(Path(args.checkpoint).read_bytes()) if args.checkpoint else None
    gt = detections.read_ground_truth(_read(args.gt), len(ls)) if args.gt else None

    batch = [d.scores for f in frames for d in f.detections]
    if nets:
        c_net, b_net = nets
        s = np.stack(batch) if batch else np.zeros((0, len(ls)))
        y_c = corrector.corrector_forward(c_net, s) if len(s) else s
        y_b = corrector.blender_forward(b_net, s, y_c) if len(s) else s
    else:
        y_c = y_b = np.stack(batch) if batch else np.zeros((0, len(ls)))
    s1 = fuzzy.loss_s1_batch(rs, list(y_c), filtered=args.filtered)
    result = {"detections": len(batch), "used": len(s1.indices), "loss_s1": s1.mean}
    if gt is not None:
        labels = datagen.stack_labels(_align(frames, gt))
        if len(labels) != len(batch):
            raise InputError("ground truth and scores differ in detection count")
        values = [fuzzy.loss_s2(rs, y_c[i], y_b[i], labels[i], args.weight)[0] for i in range(len(batch))]
        result["loss_s2"] = float(np.mean(values)) if values else 0.0
    text = "".join(f"{k} {v}\n" for k, v in result.items())
    out.write(text)
    if args.out:
        write_atomic(args.out, json.dumps(result, separators=(",", ":")) + "\n")
    return 0


def _align(frames, gt):
    by_id = {g.frame_id: g for g in gt}
    try:
        return [by_id[f.frame_id] for f in frames]
    except KeyError as exc:
        raise InputError(f"frame {exc.args[0]} missing from ground truth") from None


def _nms_frame(frame):
    w = _WORKER
    kept = detections.agent_threshold(frame, w["ls"], w["tau"])
    return detections.agent_nms(kept, w["ls"], w["iou"], w["mode"])


def cmd_nms(args, out):
    _check_unit("--tau", args.tau)
    _check_unit("--iou", args.iou)
    ls = _load_ls(args)
    frames = detections.read_detections(_read(args.input), len(ls))
    result = _map_frames(_nms_frame, frames, args.jobs, dict(ls=ls, tau=args.tau, iou=args.iou, mode=args.mode))
    write_atomic(args.output, detections.write_stream(result))
    n_in = sum(len(f.detections) for f in frames)
    n_out = sum(len(f.detections) for f in result)
    out.write(f"frames {len(frames)} detections_in {n_in} detections_out {n_out}\n")
    return 0


def _correct_frame(frame):
    w = _WORKER
    solver = _make_solver(w["solver"])
    dets, problems = [], []
    for k, d in enumerate(frame.detections):
        prob = maxsat.encode(w["rs"], d.scores, w["scale"], w["weighting"])
        values, cost = solver(prob)
        dets.append(detections.LabeledBox(d.box, values))
        problems.append((f"{frame.frame_id}_{k}.wcnf", prob.to_wcnf()) if w["export"] else None)
    return detections.GroundTruthFrame(frame.frame_id, tuple(dets)), problems


def cmd_correct(args, out):
    if args.scale < 1:
        raise UsageError("--scale must be >= 1")
    _make_solver(args.solver)
    ls = _load_ls(args)
    rs = _load_rs(args, ls)
    frames = detections.read_detections(_read(args.input), len(ls))
    results = _map_frames(
        _correct_frame, frames, args.jobs,
        dict(rs=rs, scale=args.scale, weighting=args.weighting, solver=args.solver,
                          export=bool(args.export_wcnf)),
    )
    decoded = [r[0] for r in results]
    for f in decoded:
        for d in f.detections:
            if not eval_boolean(rs, d.labels)[0]:
                raise InfeasibleError(f"decoded labels in frame {f.frame_id} violate the requirements")
    write_atomic(args.output, detections.write_stream(decoded))
    if args.export_wcnf:
        _write_files(args.export_wcnf, {name: text for r in results for name, text in (p for p in r[1] if p)})
    out.write(f"frames {len(decoded)} detections {sum(len(f.detections) for f in decoded)} satisfied 100%\n")
    return 0


def cmd_export_wcnf(args, out):
    if args.scale < 1:
        raise UsageError("--scale must be >= 1")
    ls = _load_ls(args)
    rs = _load_rs(args, ls)
    frames = detections.read_detections(_read(args.input), len(ls))
    files = {}
    for f in frames:
        for k, d in enumerate(f.detections):
            files[f"{f.frame_id}_{k}.wcnf"] = maxsat.encode(rs, d.scores, args.scale, args.weighting).to_wcnf()
    _write_files(args.out_dir, files)
    out.write(f"wrote {len(files)} wcnf files\n")
    return 0


def _semisupervised_from(frames, gt, split):
    labeled_ids = set(split["labeled"]) if split else {g.frame_id for g in gt}
    by_gt = {g.frame_id: g for g in gt}
    lab_s, lab_y, unl = [], [], []
    for f in frames:
        if f.frame_id in labeled_ids and f.frame_id in by_gt:
            g = by_gt[f.frame_id]
            if len(g.detections) != len(f.detections):
                raise InputError(f"frame {f.frame_id}: ground truth and scores differ in detection count")
            lab_s += [d.scores for d in f.detections]
            lab_y += [d.labels for d in g.detections]
        else:
            unl += [d.scores for d in f.detections]
    n = len(frames[0].detections[0].scores) if frames and frames[0].detections else 0
    as2d = lambda rows, dt: np.stack(rows).astype(dt) if rows else np.zeros((0, n), dtype=dt)
    return corrector.SemiSupervisedSet(as2d(lab_s, np.float64), as2d(lab_y, bool), as2d(unl, np.float64))


def cmd_train(args, out):
    cfg = corrector.TrainConfig(
        epochs=args.epochs, learning_rate=args.lr, hidden=args.hidden, batch_size1=args.batch1,
        batch_size2=args.batch2, constraint_weight=args.weight, seed=args.seed, filtered=args.filtered,
    )
    ls = _load_ls(args)
    rs = _load_rs(args, ls)
    frames = detections.read_detections(_read(args.scores), len(ls))
    gt = detections.read_ground_truth(_read(args.gt), len(ls))
    split = json.loads(_read(args.split)) if args.split else None
    data = _semisupervised_from(frames, gt, split)
    c_net, b_net, trace = corrector.train_semisupervised(data, rs, cfg)
    write_atomic(args.checkpoint, corrector.save_checkpoint([c_net, b_net]))
    if args.trace:
        write_atomic(args.trace, "".join(
            json.dumps({"epoch": t.epoch, "stage": t.stage, "batch": t.batch, "loss": t.loss}, separators=(",", ":")) + "\n"
            for t in trace))
    last = {s: np.mean([t.loss for t in trace if t.stage == s and t.epoch == cfg.epochs - 1] or [0.0]) for s in (1, 2)}
    out.write(f"labeled {len(data.labeled)} unlabeled {len(data.unlabeled)} epochs {cfg.epochs}\n"
              f"final_stage1_loss {last[1]:.6f}\nfinal_stage2_loss {last[2]:.6f}\n")
    return 0


def cmd_predict(args, out):
    ls = _load_ls(args)
    c_net, b_net = corrector.load_checkpoint(Path(args.checkpoint).read_bytes())
    frames = detections.read_detections(_read(args.input), len(ls))
    rows = [d.scores for f in frames for d in f.detections]
    if rows:
        s = np.stack(rows)
        y = corrector.corrector_forward(c_net, s)
        if args.model == "blender":
            y = corrector.blender_forward(b_net, s, y)
    result, k = [], 0
    for f in frames:
        dets = []
        for d in f.detections:
            dets.append(detections.Detection(d.box, y[k]))
            k += 1
        result.append(detections.DetectionFrame(f.frame_id, tuple(dets)))
    write_atomic(args.output, detections.write_stream(result))
    out.write(f"frames {len(result)} detections {k}\n")
    return 0


def cmd_eval(args, out):
    _check_unit("--iou", args.iou, lo_open=True)
    ls = _load_ls(args)
    cfg = evaluation.MatchConfig(args.iou)
    gt = detections.read_ground_truth(_read(args.gt), len(ls))
    if args.metric == "map":
        preds = detections.read_detections(_read(args.pred), len(ls))
        report = evaluation.frame_map(preds, gt, cfg, len(ls))
    else:
        preds = detections.read_ground_truth(_read(args.pred), len(ls))
        report = evaluation.prf1(preds, gt, cfg, len(ls))
    out.write(report.to_table(ls.names))
    if args.out:
        write_atomic(args.out, report.to_json())
    return 0


def cmd_gen(args, out):
    cfg = datagen.GenConfig(
        seed=args.seed, num_frames=args.frames, min_boxes=args.min_boxes, max_boxes=args.max_boxes,
        sigma=args.sigma, flip=args.flip, labeled_fraction=args.labeled_fraction, label_density=args.density,
    )
    ls = _load_ls(args)
    rs = _load_rs(args, ls)
    data = datagen.generate(rs, cfg)
    _write_files(args.out_dir, {
        "scores.jsonl": detections.write_stream(data.scores),
        "gt.jsonl": detections.write_stream(data.truth),
        "split.json": data.split_json(),
    })
    out.write(f"frames {len(data.scores)} labeled {len(data.labeled)} unlabeled {len(data.unlabeled)}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="modcl", description="Constrained multi-label detection toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, requirements=True):
        sp.add_argument("--labels", help="label file (default: shipped 41-label example)")
        if requirements:
            sp.add_argument("--requirements", help="requirement file (default: shipped 243-clause example)")

    sp = sub.add_parser("validate", help="parse label/requirement files and check satisfiability")
    common(sp)
    sp.add_argument("--check", help="decoded label stream to check against the requirements")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("loss", help="constrained losses over a score stream")
    common(sp)
    sp.add_argument("--scores", required=True)
    sp.add_argument("--filtered", action="store_true", help="only score vectors with an entry above 0.5")
    sp.add_argument("--gt", help="ground truth stream; adds the Stage 2 loss")
    sp.add_argument("--checkpoint", help="apply corrector/blender before computing losses")
    sp.add_argument("--weight", type=float, default=fuzzy.DEFAULT_CONSTRAINT_WEIGHT)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("nms", help="agent-wise thresholding and NMS")
    common(sp, requirements=False)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--tau", type=float, default=detections.DEFAULT_TAU)
    sp.add_argument("--iou", type=float, default=detections.DEFAULT_IOU)
    sp.add_argument("--mode", choices=detections.NMS_MODES, default="agnostic")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_nms)

    sp = sub.add_parser("correct", help="MaxSAT decoding into requirement-satisfying labels")
    common(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--solver", default="internal", help="internal | external:<path> [args]")
    sp.add_argument("--export-wcnf", metavar="DIR")
    sp.add_argument("--scale", type=int, default=maxsat.DEFAULT_SCALE)
    sp.add_argument("--weighting", choices=("polarity", "raw"), default="polarity")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_correct)

    sp = sub.add_parser("export-wcnf", help="write one WCNF file per detection")
    common(sp)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--scale", type=int, default=maxsat.DEFAULT_SCALE)
    sp.add_argument("--weighting", choices=("polarity", "raw"), default="polarity")
    sp.set_defaults(func=cmd_export_wcnf)

    d = corrector.TrainConfig()
    sp = sub.add_parser("train", help="two-stage corrector/blender training")
    common(sp)
    sp.add_argument("--scores", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--split", help="JSON with 'labeled' frame ids (default: every frame in --gt)")
    sp.add_argument("--checkpoint", required=True, help="output checkpoint path")
    sp.add_argument("--trace", help="output loss trace (JSON lines)")
    sp.add_argument("--epochs", type=int, default=d.epochs)
    sp.add_argument("--lr", type=float, default=d.learning_rate)
    sp.add_argument("--hidden", type=int, default=d.hidden)
    sp.add_argument("--batch1", type=int, default=d.batch_size1)
    sp.add_argument("--batch2", type=int, default=d.batch_size2)
    sp.add_argument("--weight", type=float, default=d.constraint_weight)
    sp.add_argument("--seed", type=int, default=d.seed)
    sp.add_argument("--filtered", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="apply a trained checkpoint to a score stream")
    common(sp, requirements=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", dest="output", required=True)
    sp.add_argument("--model", choices=("blender", "corrector"), default="blender")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("eval", help="frame-mAP or precision/recall/F1")
    common(sp, requirements=False)
    sp.add_argument("--metric", choices=("map", "prf1"), required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--iou", type=float, default=0.5)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    g = datagen.GenConfig()
    sp = sub.add_parser("gen", help="generate a seeded synthetic benchmark")
    common(sp)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int, default=g.seed)
    sp.add_argument("--frames", type=int, default=g.num_frames)
    sp.add_argument("--min-boxes", type=int, default=g.min_boxes)
    sp.add_argument("--max-boxes", type=int, default=g.max_boxes)
    sp.add_argument("--sigma", type=float, default=g.sigma)
    sp.add_argument("--flip", type=float, default=g.flip)
    sp.add_argument("--labeled-fraction", type=float, default=g.labeled_fraction)
    sp.add_argument("--density", type=float, default=g.label_density)
    sp.set_defaults(func=cmd_gen)
    return p


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args, out)
    except InfeasibleError as exc:
        err.write(f"infeasible: {exc}\n")
        return 2
    except InputError as exc:
        err.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
