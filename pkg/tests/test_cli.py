import json

import numpy as np
import pytest

from dspm import cli
from dspm.decomp import Decomposition, read_image, read_label_map, write_image
from dspm.label import read_class_map, write_class_map
from dspm.match import read_matches_csv


@pytest.fixture(scope="module")
def scenes(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    assert cli.main(["synth", "scenes", "-o", str(out), "-n", "4", "--size", "64", "-k", "30", "--seed", "0"]) == 0
    lines = (out / "library.txt").read_text().splitlines()
    (out / "lib.txt").write_text("\n".join(lines[1:]) + "\n")
    return out


def q_args(d, *extra):
    return ["--query-image", str(d / "scene_0000.png"), "--query-labels", str(d / "scene_0000_labels.png"),
            "--library", str(d / "lib.txt"), "--radius", "15", *extra]


def test_decompose(tmp_path, scenes):
    out = tmp_path / "l.png"
    assert cli.main(["decompose", str(scenes / "scene_0001.png"), "-k", "20", "-o", str(out)]) == 0
    lab = read_label_map(out)
    assert lab.shape == (64, 64) and lab.max() + 1 >= 10


def test_features(tmp_path, scenes):
    out = tmp_path / "f.dspf"
    assert cli.main(["features", str(scenes / "scene_0001.png"), str(scenes / "scene_0001_labels.png"),
                     "-o", str(out)]) == 0
    assert out.read_bytes()[:4] == b"DSPF"


def test_match_label_eval(tmp_path, scenes, capsys):
    m = tmp_path / "matches.csv"
    assert cli.main(["match", *q_args(scenes, "--runs", "3", "--iters", "2"), "-o", str(m)]) == 0
    recs = read_matches_csv(m)
    assert len(recs) == 3 * read_label_map(scenes / "scene_0000_labels.png").max() + 3
    lab = tmp_path / "labels.png"
    assert cli.main(["label", *q_args(scenes), "--matches", str(m), "-k", "2", "-o", str(lab)]) == 0
    assert json.loads(lab.with_suffix(".json").read_text())["1"] == "skin"
    capsys.readouterr()
    assert cli.main(["eval", "--pred", str(lab), "--gt", str(scenes / "scene_0000_gt.png"),
                     "--labels", str(scenes / "scene_0000_labels.png")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert 0.5 < res["superpixel_accuracy"] <= 1.0 and 0.5 < res["pixel_accuracy"] <= 1.0


def test_eval_perfect(tmp_path, scenes, capsys):
    d = Decomposition.from_labels(read_label_map(scenes / "scene_0000_labels.png"))
    gt = read_class_map(scenes / "scene_0000_gt.png")
    write_class_map(tmp_path / "p.png", gt.majority(d)[d.labels], gt.names)
    capsys.readouterr()
    assert cli.main(["eval", "--pred", str(tmp_path / "p.png"), "--gt", str(tmp_path / "p.png"),
                     "--labels", str(scenes / "scene_0000_labels.png")]) == 0
    assert json.loads(capsys.readouterr().out) == {"superpixel_accuracy": 1.0, "pixel_accuracy": 1.0}


def test_label_with_search_and_exhaustive(tmp_path, scenes):
    lab = tmp_path / "labels.png"
    assert cli.main(["label", *q_args(scenes, "--exhaustive", "--scales", "10,15"), "-o", str(lab)]) == 0
    assert read_class_map(lab).class_map.shape == (64, 64)


def test_threads_keep_output(tmp_path, scenes):
    outs = []
    for t in ("1", "4"):
        p = tmp_path / f"m{t}.csv"
        assert cli.main(["match", *q_args(scenes, "--runs", "4", "--iters", "2", "--seed", "7", "--threads", t),
                         "-o", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_config_precedence(tmp_path, scenes):
    conf = tmp_path / "c.toml"
    conf.write_text("runs = 2\niters = 1\nscales = [10, 15]\n")
    m = tmp_path / "m.csv"
    assert cli.main(["--config", str(conf), "match", *q_args(scenes), "--per-scale", "-o", str(m)]) == 0
    recs = read_matches_csv(m)
    assert {r.run for r in recs} == {0, 1} and {r.scale for r in recs} == {10.0, 15.0}
    assert cli.main(["--config", str(conf), "match", *q_args(scenes, "--runs", "3"), "-o", str(m)]) == 0
    assert {r.run for r in read_matches_csv(m)} == {0, 1, 2}


@pytest.mark.parametrize("body", ["runs = \"x\"\n", "colour = 3\n", "runs = [\n"])
def test_bad_config(tmp_path, scenes, body):
    conf = tmp_path / "c.toml"
    conf.write_text(body)
    assert cli.main(["--config", str(conf), "match", *q_args(scenes), "-o", str(tmp_path / "m.csv")]) == cli.EXIT_FORMAT


class TestExitCodes:
    def test_missing(self, tmp_path, scenes):
        assert cli.main(["decompose", str(tmp_path / "nope.png"), "-o", str(tmp_path / "x.png")]) == cli.EXIT_MISSING
        assert cli.main(["match", *q_args(scenes), "--library", str(tmp_path / "none.txt")]) == cli.EXIT_MISSING

    def test_range(self, tmp_path, scenes):
        m = str(tmp_path / "m.csv")
        assert cli.main(["match", *q_args(scenes, "--alpha", "2"), "-o", m]) == cli.EXIT_RANGE
        assert cli.main(["match", *q_args(scenes, "--runs", "0"), "-o", m]) == cli.EXIT_RANGE
        assert cli.main(["match", *q_args(scenes, "--window", "8"), "-o", m]) == cli.EXIT_RANGE
        assert cli.main(["decompose", str(scenes / "scene_0001.png"), "-k", "0", "-o", m]) == cli.EXIT_RANGE

    def test_format(self, tmp_path, scenes):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not a png")
        assert cli.main(["decompose", str(bad), "-o", str(tmp_path / "x.png")]) == cli.EXIT_FORMAT
        write_image(tmp_path / "rgb.png", np.zeros((64, 64, 3), np.uint8))
        args = q_args(scenes)
        args[3] = str(tmp_path / "rgb.png")
        assert cli.main(["match", *args, "-o", str(tmp_path / "m.csv")]) == cli.EXIT_FORMAT
        (tmp_path / "m.csv").write_text("wrong,header\n")
        assert cli.main(["label", *q_args(scenes), "--matches", str(tmp_path / "m.csv")]) == cli.EXIT_FORMAT
        (tmp_path / "lib.txt").write_text("only_one_column.png\n")
        assert cli.main(["match", *q_args(scenes), "--library", str(tmp_path / "lib.txt")]) == cli.EXIT_FORMAT


def test_viz(tmp_path, scenes):
    m = tmp_path / "m.csv"
    assert cli.main(["match", *q_args(scenes, "--runs", "2", "--iters", "1"), "-o", str(m)]) == 0
    flow = tmp_path / "flow.png"
    assert cli.main(["viz", "flow", "--query-image", str(scenes / "scene_0000.png"),
                     "--query-labels", str(scenes / "scene_0000_labels.png"), "--library", str(scenes / "lib.txt"),
                     "--matches", str(m), "-o", str(flow)]) == 0
    assert read_image(flow).shape == (64, 64, 3)
    ov = tmp_path / "ov.png"
    assert cli.main(["viz", "overlay", "--image", str(scenes / "scene_0000.png"), "--pred",
                     str(scenes / "scene_0000_gt.png"), "--gt", str(scenes / "scene_0000_gt.png"),
                     "--labels", str(scenes / "scene_0000_labels.png"), "-o", str(ov)]) == 0
    assert read_image(ov).shape == (64, 64, 3)


def test_synth_textures(tmp_path):
    assert cli.main(["synth", "textures", "-o", str(tmp_path), "--size", "64", "--noise", "50"]) == 0
    assert read_image(tmp_path / "texture_a.png").shape == (64, 64, 3)
    assert np.loadtxt(tmp_path / "texture_b_ids.txt").size == 16
