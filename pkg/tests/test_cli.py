"""End-to-end command-line tests, run in-process for speed."""

import numpy as np
import pytest

from shapereader.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_EMPTY,
    EXIT_OK,
    EXIT_PARTIAL,
    main,
)
from shapereader.learning import save_gtseg
from shapereader.pgm import read_pgm, write_pgm
from shapereader.shapes import load_bank
from shapereader.synthfont import render_glyph, render_word

LETTERS = "at"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Glyph directory, trained bank, one word image with ground truth."""
    root = tmp_path_factory.mktemp("cliws")
    glyphs = root / "glyphs" / "plain"
    glyphs.mkdir(parents=True)
    for ch in LETTERS:
        write_pgm(glyphs / f"{ch}.pgm", render_glyph(ch, "plain"))
    bank = root / "bank.txt"
    assert main(["train-shapes", "--glyphs", str(root / "glyphs"), "--out", str(bank)]) == EXIT_OK

    img, labels, masks = render_word("tat", "plain")
    write_pgm(root / "word.pgm", img)
    save_gtseg(root / "word.gtseg", labels, masks, img.shape)

    dets = root / "word.det"
    rc = main(
        ["detect", "--image", str(root / "word.pgm"), "--bank", str(bank),
         "--out", str(dets), "--set", "scales=1"]
    )
    assert rc == EXIT_OK

    (root / "train.tsv").write_text(
        f"{root / 'word.pgm'}\t{dets}\t{root / 'word.gtseg'}\n"
    )
    (root / "corpus.txt").write_text("tat at a tat tata " * 10)
    rc = main(
        ["train-parser", "--manifest", str(root / "train.tsv"),
         "--corpus", str(root / "corpus.txt"),
         "--out", str(root / "weights.txt"),
         "--ngrams-out", str(root / "ngrams.txt")]
    )
    assert rc == EXIT_OK
    return root


def test_train_shapes_bank_loads(workspace):
    bank = load_bank(workspace / "bank.txt")
    assert sorted(m.label for m in bank.models) == sorted(LETTERS)


def test_train_shapes_warns_and_continues_on_corrupt_glyph(tmp_path, capsys):
    glyphs = tmp_path / "g" / "plain"
    glyphs.mkdir(parents=True)
    write_pgm(glyphs / "a.pgm", render_glyph("a", "plain"))
    (glyphs / "b.pgm").write_bytes(b"P5 not a real file")
    rc = main(["train-shapes", "--glyphs", str(tmp_path / "g"), "--out", str(tmp_path / "b.txt")])
    assert rc == EXIT_PARTIAL  # partial success
    assert "warning" in capsys.readouterr().err
    assert [m.label for m in load_bank(tmp_path / "b.txt").models] == ["a"]


def test_train_shapes_all_bad_is_data_error(tmp_path):
    glyphs = tmp_path / "g" / "plain"
    glyphs.mkdir(parents=True)
    (glyphs / "a.pgm").write_bytes(b"junk")
    rc = main(["train-shapes", "--glyphs", str(tmp_path / "g"), "--out", str(tmp_path / "b.txt")])
    assert rc == EXIT_DATA


def test_select_fonts(workspace, tmp_path):
    out = tmp_path / "sel.txt"
    rc = main(
        ["select-fonts", "--glyphs", str(workspace / "glyphs"),
         "--bank", str(workspace / "bank.txt"), "--out", str(out)]
    )
    assert rc == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "FONTSEL v1"
    assert any(ln.startswith("keep\t") for ln in lines)
    assert any(ln.startswith("coverage\t") for ln in lines)


def test_detect_overlay_and_sidecar(workspace, tmp_path):
    ov = tmp_path / "ov.pgm"
    rc = main(
        ["detect", "--image", str(workspace / "word.pgm"),
         "--bank", str(workspace / "bank.txt"),
         "--out", str(tmp_path / "d.det"), "--overlay", str(ov),
         "--set", "scales=1"]
    )
    assert rc == EXIT_OK
    annotated = read_pgm(ov)
    original = read_pgm(workspace / "word.pgm")
    assert annotated.shape == original.shape
    assert not np.array_equal(annotated, original)  # drawing happened
    geom = (str(ov) + ".geom")
    with open(geom) as fh:
        assert fh.readline().startswith("OVERLAY v1")


def test_detect_empty_image_exit_code(workspace, tmp_path):
    blank = tmp_path / "blank.pgm"
    write_pgm(blank, np.full((40, 60), 255, dtype=np.uint8))
    rc = main(
        ["detect", "--image", str(blank), "--bank", str(workspace / "bank.txt"),
         "--out", str(tmp_path / "d.det"), "--set", "scales=1"]
    )
    assert rc == EXIT_EMPTY


def test_read_end_to_end(workspace, tmp_path, capsys):
    report = tmp_path / "r.txt"
    args = [
        "read", "--image", str(workspace / "word.pgm"),
        "--bank", str(workspace / "bank.txt"),
        "--weights", str(workspace / "weights.txt"),
        "--ngrams", str(workspace / "ngrams.txt"),
        "--report", str(report), "--set", "scales=1",
    ]
    assert main(args) == EXIT_OK
    out = capsys.readouterr().out
    assert "word\ttat" in out
    first = report.read_bytes()
    assert main(args) == EXIT_OK
    assert report.read_bytes() == first  # deterministic rerun


def test_read_with_lexicon(workspace, tmp_path):
    lex = tmp_path / "lex.txt"
    lex.write_text("tat\t10\nat\t5\n")
    report = tmp_path / "r.txt"
    rc = main(
        ["read", "--image", str(workspace / "word.pgm"),
         "--bank", str(workspace / "bank.txt"),
         "--weights", str(workspace / "weights.txt"),
         "--ngrams", str(workspace / "ngrams.txt"),
         "--lexicon", str(lex), "--report", str(report), "--set", "scales=1"]
    )
    assert rc == EXIT_OK
    assert "word\ttat" in report.read_text()


def test_eval_manifest(workspace, tmp_path, capsys):
    manifest = tmp_path / "eval.tsv"
    manifest.write_text(
        f"{workspace / 'word.pgm'}\ttat\t{workspace / 'word.gtseg'}\n"
        f"{tmp_path / 'missing.pgm'}\txx\t{workspace / 'word.gtseg'}\n"
    )
    out = tmp_path / "eval_out.tsv"
    rc = main(
        ["eval", "--manifest", str(manifest), "--bank", str(workspace / "bank.txt"),
         "--weights", str(workspace / "weights.txt"),
         "--ngrams", str(workspace / "ngrams.txt"),
         "--out", str(out), "--set", "scales=1"]
    )
    assert rc == EXIT_PARTIAL  # the missing image is reported, the rest evaluated
    text = out.read_text()
    assert "word_accuracy\t1/1" in text
    assert "char_recall\t3/3" in text
    assert "missing.pgm" in capsys.readouterr().err


def test_config_error_exit_codes(workspace, tmp_path):
    rc = main(
        ["detect", "--image", str(workspace / "word.pgm"),
         "--bank", str(workspace / "bank.txt"), "--out", str(tmp_path / "d"),
         "--set", "theta_backtrace=2.0"]
    )
    assert rc == EXIT_CONFIG
    rc = main(
        ["detect", "--image", str(workspace / "word.pgm"),
         "--bank", str(workspace / "bank.txt"), "--out", str(tmp_path / "d"),
         "--set", "nonsense"]
    )
    assert rc == EXIT_CONFIG


def test_config_file_flag(workspace, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("scales = 1\n")
    rc = main(
        ["detect", "--image", str(workspace / "word.pgm"),
         "--bank", str(workspace / "bank.txt"),
         "--out", str(tmp_path / "d.det"), "--config", str(cfg)]
    )
    assert rc == EXIT_OK


def test_data_error_exit_codes(workspace, tmp_path):
    rc = main(
        ["detect", "--image", str(tmp_path / "nope.pgm"),
         "--bank", str(workspace / "bank.txt"), "--out", str(tmp_path / "d")]
    )
    assert rc == EXIT_DATA
    rc = main(
        ["read", "--image", str(workspace / "word.pgm"),
         "--bank", str(tmp_path / "nope.bank"),
         "--weights", str(workspace / "weights.txt")]
    )
    assert rc == EXIT_DATA
