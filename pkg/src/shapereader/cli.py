"""Command-line interface.

Verbs: train-shapes, select-fonts, detect, train-parser, read, eval.
Exit codes: 0 success, 1 partial success, 2 config error, 3 data error,
4 empty result.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
from skimage.draw import line as draw_line

from .config import ConfigError, PipelineConfig, load_config
from .detect import (
    CandidateDetection,
    DetectParams,
    detect_multiscale,
    detection_mask,
    detections_from_text,
    detections_to_text,
    mask_iou,
)
from .edges import InvalidInputError
from .fonts import select_fonts
from .langmodel import (
    CorpusError,
    load_ngram_model,
    load_word_frequencies,
    rerank,
    save_ngram_model,
    train_char_ngrams,
)
from .learning import (
    GoldMatchRejection,
    LearnerConfig,
    TrainingSample,
    load_gtseg,
    match_gold,
    train_maxmargin,
)
from .parsing import (
    EmptyGraphError,
    ParsePath,
    build_graph,
    infer_best,
    load_weights,
    save_weights,
)
from .pgm import PgmError, read_pgm, write_pgm
from .shapes import ALPHABET, BuildParams, ModelBank, load_bank, model_from_image, save_bank

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_EMPTY = 4


def _build_params(cfg: PipelineConfig) -> BuildParams:
    return BuildParams(
        pool_window=cfg.pool_window,
        radius=cfg.radius,
        radius_scale=cfg.radius_scale,
        gamma=cfg.gamma,
        suppression_radius=cfg.suppression_radius,
        edge_threshold=cfg.edge_threshold,
        normalized_height=cfg.normalized_height,
    )


def _detect_params(cfg: PipelineConfig) -> DetectParams:
    return DetectParams(
        forward_min_score=cfg.forward_min_score,
        theta_backtrace=cfg.theta_backtrace,
        nms_radius_frac=cfg.nms_radius_frac,
        anchors_per_model=cfg.anchors_per_model,
        bp_iterations=cfg.bp_iterations,
        bp_damping=cfg.bp_damping,
        merge_iou=cfg.merge_iou,
        edge_threshold=cfg.edge_threshold,
        scales=tuple(cfg.scales),
    )


# ---------------------------------------------------------------------------
# train-shapes

def cmd_train_shapes(args, cfg: PipelineConfig) -> int:
    params = _build_params(cfg)
    models = []
    warnings = 0
    if not os.path.isdir(args.glyphs):
        print(f"error: glyph directory not found: {args.glyphs}", file=sys.stderr)
        return EXIT_DATA
    for font_id in sorted(os.listdir(args.glyphs)):
        font_dir = os.path.join(args.glyphs, font_id)
        if not os.path.isdir(font_dir):
            continue
        for name in sorted(os.listdir(font_dir)):
            if not name.endswith(".pgm"):
                continue
            letter = name[: -len(".pgm")]
            path = os.path.join(font_dir, name)
            if letter not in ALPHABET:
                print(f"warning: {path}: {letter!r} is not a letter, skipped", file=sys.stderr)
                warnings += 1
                continue
            try:
                image = read_pgm(path)
                models.append(model_from_image(letter, font_id, image, params))
            except (PgmError, InvalidInputError, ValueError) as exc:
                print(f"warning: {path}: {exc}", file=sys.stderr)
                warnings += 1
    if not models:
        print("error: no usable glyphs", file=sys.stderr)
        return EXIT_DATA
    bank = ModelBank(models=models, build_params=params)
    save_bank(args.out, bank)
    print(f"wrote {len(models)} models to {args.out}")
    return EXIT_PARTIAL if warnings else EXIT_OK


# ---------------------------------------------------------------------------
# select-fonts

def cmd_select_fonts(args, cfg: PipelineConfig) -> int:
    try:
        bank = load_bank(args.bank)
    except (OSError, ValueError) as exc:
        print(f"error: {args.bank}: {exc}", file=sys.stderr)
        return EXIT_DATA
    glyphs = {}
    for font_id in sorted(os.listdir(args.glyphs)):
        font_dir = os.path.join(args.glyphs, font_id)
        if not os.path.isdir(font_dir):
            continue
        for name in sorted(os.listdir(font_dir)):
            if name.endswith(".pgm") and name[:-4] in ALPHABET:
                glyphs[(name[:-4], font_id)] = read_pgm(os.path.join(font_dir, name))
    if not glyphs:
        print("error: no glyphs found", file=sys.stderr)
        return EXIT_DATA
    selected, coverage = select_fonts(
        bank, glyphs, threshold=cfg.compat_threshold, coverage=cfg.coverage
    )
    with open(args.out, "w") as fh:
        fh.write("FONTSEL v1\n")
        for letter, font_id in sorted(selected):
            fh.write(f"keep\t{letter}\t{font_id}\n")
        for letter in sorted(coverage):
            fh.write(f"coverage\t{letter}\t{coverage[letter]:.6f}\n")
    worst = min(coverage.values()) if coverage else 1.0
    print(f"selected {len(selected)} (letter, font) pairs; worst coverage {worst:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect

def _load_image(path: str):
    try:
        return read_pgm(path)
    except (OSError, PgmError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return None


def _write_overlay(path: str, image: np.ndarray, dets: list[CandidateDetection], path_nodes=None):
    """Annotated copy of the image plus a sidecar geometry file."""
    overlay = np.asarray(image).copy()
    h, w = overlay.shape
    chosen = set(path_nodes or [])

    def stroke(x0, y0, x1, y1, value):
        rr, cc = draw_line(int(round(y0)), int(round(x0)), int(round(y1)), int(round(x1)))
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        overlay[rr[ok], cc[ok]] = value

    for idx, det in enumerate(dets):
        value = 0 if idx in chosen else 128
        for poly in det.polylines:
            pts = np.asarray(poly)
            for (xa, ya), (xb, yb) in zip(pts[:-1], pts[1:]):
                stroke(xa, ya, xb, yb, value)
    if path_nodes:
        for a, b in zip(path_nodes, path_nodes[1:]):
            xa, ya = dets[a].center
            xb, yb = dets[b].center
            stroke(xa, ya, xb, yb, 64)
    write_pgm(path, overlay)
    with open(path + ".geom", "w") as fh:
        fh.write(f"OVERLAY v1 {len(dets)}\n")
        for idx, det in enumerate(dets):
            mark = "path" if idx in chosen else "cand"
            x0, y0, x1, y1 = det.bbox
            fh.write(
                f"{mark}\t{idx}\t{det.label}\t{det.score:.6f}\t"
                f"{x0:.2f}\t{y0:.2f}\t{x1:.2f}\t{y1:.2f}\n"
            )
        if path_nodes:
            fh.write("edges\t" + " ".join(str(i) for i in path_nodes) + "\n")


def cmd_detect(args, cfg: PipelineConfig) -> int:
    image = _load_image(args.image)
    if image is None:
        return EXIT_DATA
    try:
        bank = load_bank(args.bank)
    except (OSError, ValueError) as exc:
        print(f"error: {args.bank}: {exc}", file=sys.stderr)
        return EXIT_DATA
    dets = detect_multiscale(bank, image, _detect_params(cfg))
    with open(args.out, "w") as fh:
        fh.write(detections_to_text(dets))
    if args.overlay:
        _write_overlay(args.overlay, image, dets)
    print(f"{len(dets)} candidate detections -> {args.out}")
    return EXIT_OK if dets else EXIT_EMPTY


# ---------------------------------------------------------------------------
# train-parser

def cmd_train_parser(args, cfg: PipelineConfig) -> int:
    if args.ngrams:
        lm = load_ngram_model(args.ngrams)
    elif args.corpus:
        try:
            with open(args.corpus) as fh:
                lm = train_char_ngrams(fh.read(), alpha=cfg.ngram_alpha)
        except (OSError, CorpusError) as exc:
            print(f"error: {args.corpus}: {exc}", file=sys.stderr)
            return EXIT_DATA
    else:
        print("error: one of --ngrams/--corpus is required", file=sys.stderr)
        return EXIT_CONFIG

    samples = []
    skipped = 0
    try:
        with open(args.manifest) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        print(f"error: {args.manifest}: {exc}", file=sys.stderr)
        return EXIT_DATA
    for line in lines:
        parts = line.split("\t")
        if len(parts) != 3:
            print(f"warning: bad manifest line skipped: {line!r}", file=sys.stderr)
            skipped += 1
            continue
        image_path, det_path, gt_path = parts
        try:
            image = read_pgm(image_path)
            with open(det_path) as fh:
                dets = detections_from_text(fh.read())
            labels, masks, _ = load_gtseg(gt_path)
        except (OSError, PgmError, InvalidInputError) as exc:
            print(f"warning: {line!r}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        try:
            graph = build_graph(dets, image.shape, max_gap_factor=cfg.max_gap_factor)
        except EmptyGraphError:
            print(f"warning: {image_path}: no candidates", file=sys.stderr)
            skipped += 1
            continue
        gold = match_gold(graph, masks, labels, iou_threshold=cfg.gold_iou, image=image)
        if isinstance(gold, GoldMatchRejection):
            print(
                f"warning: {image_path}: gold unmatched at char "
                f"{gold.character_index} ({gold.reason})",
                file=sys.stderr,
            )
            skipped += 1
            continue
        samples.append(TrainingSample(graph=graph, gold=gold, lm=lm, image_id=image_path))
    if not samples:
        print("error: no usable training samples", file=sys.stderr)
        return EXIT_DATA

    learner = LearnerConfig(
        C=cfg.learn_C,
        max_epochs=cfg.learn_max_epochs,
        seed=cfg.learn_seed,
        iou_threshold=cfg.gold_iou,
    )
    weights, trace = train_maxmargin(samples, learner)
    save_weights(args.out, weights)
    if args.ngrams_out:
        save_ngram_model(args.ngrams_out, lm)
    status = "converged" if trace.converged else "max epochs reached"
    print(
        f"trained on {len(samples)} samples ({skipped} skipped), {status}, "
        f"violations per epoch {trace.violations_per_epoch}"
    )
    return EXIT_PARTIAL if skipped else EXIT_OK


# ---------------------------------------------------------------------------
# read

def _read_pipeline(image, bank, weights, lm, freqs, cfg: PipelineConfig):
    """Returns (detections, paths). paths is [] when nothing parses."""
    dets = detect_multiscale(bank, image, _detect_params(cfg))
    if not dets:
        return [], []
    graph = build_graph(dets, image.shape, max_gap_factor=cfg.max_gap_factor)
    paths = infer_best(graph, weights, k=cfg.k_best, lm=lm)
    if freqs is not None and paths:
        paths = rerank(paths, freqs, lam=cfg.rerank_lambda)
    else:
        for p in paths:
            p.final_score = p.score
    return dets, paths


def _format_report(image_path: str, dets, paths: list[ParsePath]) -> str:
    lines = [f"READ v1\t{image_path}"]
    word = paths[0].word if paths else ""
    lines.append(f"word\t{word}")
    lines.append(f"candidates\t{len(dets)}")
    for rank, p in enumerate(paths, 1):
        lines.append(f"path\t{rank}\t{p.word}\t{p.score:.6f}\t{p.final_score:.6f}")
    for d in dets:
        x0, y0, x1, y1 = d.bbox
        lines.append(
            f"det\t{d.label}\t{d.score:.6f}\t{x0:.2f}\t{y0:.2f}\t{x1:.2f}\t{y1:.2f}"
        )
    return "\n".join(lines) + "\n"


def _load_artifacts(args, cfg: PipelineConfig):
    bank = load_bank(args.bank)
    weights = load_weights(args.weights)
    lm = load_ngram_model(args.ngrams) if args.ngrams else None
    freqs = load_word_frequencies(args.lexicon) if args.lexicon else None
    return bank, weights, lm, freqs


def cmd_read(args, cfg: PipelineConfig) -> int:
    image = _load_image(args.image)
    if image is None:
        return EXIT_DATA
    try:
        bank, weights, lm, freqs = _load_artifacts(args, cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    dets, paths = _read_pipeline(image, bank, weights, lm, freqs, cfg)
    report = _format_report(args.image, dets, paths)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report)
    sys.stdout.write(report)
    if args.overlay:
        _write_overlay(args.overlay, image, dets, paths[0].nodes if paths else None)
    return EXIT_OK if paths else EXIT_EMPTY


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args, cfg: PipelineConfig) -> int:
    try:
        bank, weights, lm, freqs = _load_artifacts(args, cfg)
        with open(args.manifest) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    rows = []
    missing = 0
    for line in lines:
        parts = line.split("\t")
        if len(parts) != 3:
            print(f"warning: bad manifest line skipped: {line!r}", file=sys.stderr)
            missing += 1
            continue
        image_path, gold_word, gt_path = parts
        try:
            image = read_pgm(image_path)
            gt_labels, gt_masks, _ = load_gtseg(gt_path)
        except (OSError, PgmError, InvalidInputError) as exc:
            print(f"warning: {image_path}: {exc}", file=sys.stderr)
            missing += 1
            continue
        dets, paths = _read_pipeline(image, bank, weights, lm, freqs, cfg)
        predicted = paths[0].word if paths else ""
        recalled = 0
        for label, gmask in zip(gt_labels, gt_masks):
            hit = any(
                d.label == label
                and mask_iou(gmask, detection_mask(d, image.shape, image=image))
                >= cfg.gold_iou
                for d in dets
            )
            recalled += hit
        rows.append((image_path, gold_word, predicted, len(gt_labels), recalled))

    if not rows:
        print("error: nothing evaluated", file=sys.stderr)
        return EXIT_DATA

    matches = sum(1 for _, gold, pred, _, _ in rows if gold == pred)
    total_chars = sum(r[3] for r in rows)
    total_recalled = sum(r[4] for r in rows)
    accuracy = matches / len(rows)
    recall = total_recalled / total_chars if total_chars else 0.0

    out_lines = ["image\tgold\tpredicted\tmatch\tchars\trecalled"]
    for image_path, gold, pred, chars, recalled in rows:
        out_lines.append(
            f"{image_path}\t{gold}\t{pred}\t{int(gold == pred)}\t{chars}\t{recalled}"
        )
    out_lines.append(f"# word_accuracy\t{matches}/{len(rows)}\t{accuracy:.6f}")
    out_lines.append(f"# char_recall\t{total_recalled}/{total_chars}\t{recall:.6f}")
    text = "\n".join(out_lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(f"word accuracy {matches}/{len(rows)} = {accuracy:.3f}")
    print(f"char recall {total_recalled}/{total_chars} = {recall:.3f}")
    return EXIT_PARTIAL if missing else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_config_args(p):
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a single config key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapereader")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-shapes", help="build a model bank from glyph images")
    p.add_argument("--glyphs", required=True, help="directory: <font>/<letter>.pgm")
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("select-fonts", help="greedy representative-font selection")
    p.add_argument("--glyphs", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("detect", help="detect character candidates in an image")
    p.add_argument("--image", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay")
    _add_config_args(p)

    p = sub.add_parser("train-parser", help="learn parse feature weights")
    p.add_argument("--manifest", required=True, help="lines: image<TAB>detections<TAB>gtseg")
    p.add_argument("--corpus", help="text corpus to train the character n-gram model")
    p.add_argument("--ngrams", help="pre-trained CHARNGRAM v1 file")
    p.add_argument("--ngrams-out", help="also write the n-gram model here")
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("read", help="end-to-end: image to word")
    p.add_argument("--image", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--ngrams")
    p.add_argument("--lexicon")
    p.add_argument("--report")
    p.add_argument("--overlay")
    _add_config_args(p)

    p = sub.add_parser("eval", help="word accuracy + character recall over a manifest")
    p.add_argument("--manifest", required=True, help="lines: image<TAB>gold<TAB>gtseg")
    p.add_argument("--bank", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--ngrams")
    p.add_argument("--lexicon")
    p.add_argument("--out")
    _add_config_args(p)

    return parser


_COMMANDS = {
    "train-shapes": cmd_train_shapes,
    "select-fonts": cmd_select_fonts,
    "detect": cmd_detect,
    "train-parser": cmd_train_parser,
    "read": cmd_read,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        key, raw = item.split("=", 1)
        overrides[key.strip()] = raw.strip()
    try:
        from .config import _parse_value

        parsed = {k: _parse_value(k, v) for k, v in overrides.items()}
        cfg = load_config(args.config, overrides=parsed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _COMMANDS[args.command](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
