import json

import numpy as np
import pytest

from boxembed import maps
from boxembed.cli import main
from boxembed.overlay import read_ppm


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "s"
    assert run("synth", "--height", 64, "--width", 80, "-n", 4, "--seed", 3, "--max-box-iou", 0.3, "-o", out) == 0
    return out


def test_pipeline(synth_dir, tmp_path, capsys):
    g = tmp_path / "g"
    assert run("group", synth_dir / "prob.dten", synth_dir / "offsets.dten", "-o", g) == 0
    inst = json.loads((g / "instances.json").read_text())
    assert len(inst) == 4
    assert run("eval", g / "instances.json", synth_dir / "scene.json", "-o", tmp_path / "m.json") == 0
    metrics = json.loads((tmp_path / "m.json").read_text())
    assert metrics["AP"] == 1.0 and metrics["AP50"] == 1.0 and metrics["AP75"] == 1.0
    assert run("overlay", g / "labels.dten", tmp_path / "o.ppm") == 0
    assert read_ppm((tmp_path / "o.ppm").read_bytes()).shape == (64, 80, 3)
    assert run("eval", g / "instances.json", synth_dir / "scene.json") == 0
    assert json.loads(capsys.readouterr().out)["AP"] == 1.0


def test_targets(synth_dir, tmp_path):
    t = tmp_path / "t"
    assert run("targets", synth_dir / "scene.json", "-o", t) == 0
    assert maps.load(t / "offsets.dten") == maps.load(synth_dir / "offsets.dten")
    assert np.array_equal(maps.load(t / "seg.dten").data, maps.load(synth_dir / "prob.dten").data)
    assert isinstance(maps.load(t / "mask.dten"), maps.ValidityMask)


def test_byte_determinism(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert run("synth", "--height", 48, "--width", 48, "-n", 3, "--seed", 1, "--offset-noise", 0.1, "-o", d) == 0
        assert run("group", d / "prob.dten", d / "offsets.dten", "-o", d) == 0
        assert run("overlay", d / "labels.dten", d / "o.ppm") == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]


def test_exit_codes(synth_dir, tmp_path, capsys):
    assert run("group", synth_dir / "prob.dten", synth_dir / "offsets.dten", "--tc", 1.1, "-o", tmp_path) == 2
    assert run("group", tmp_path / "missing.dten", synth_dir / "offsets.dten", "-o", tmp_path) == 1
    bad = tmp_path / "bad.dten"
    bad.write_bytes(b"nope")
    assert run("group", bad, synth_dir / "offsets.dten", "-o", tmp_path) == 2
    # wrong map kind
    assert run("group", synth_dir / "offsets.dten", synth_dir / "offsets.dten", "-o", tmp_path) == 2
    (tmp_path / "x.json").write_text("{not json")
    assert run("eval", tmp_path / "x.json", synth_dir / "scene.json") == 2
    assert run("synth", "--height", 8, "--width", 8, "-n", 50, "-o", tmp_path / "z") == 2
    assert run("bench", "--repeats", 2) == 2
    assert run() == 2


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert run("bench", "--sizes", "64,96", "--counts", "2,4", "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "height,width,n_instances,n_person_pixels,wall_time,repeats"
    assert len(lines) == 5
    assert "R^2" in capsys.readouterr().err
