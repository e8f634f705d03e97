import csv
import math
import subprocess
import sys
from dataclasses import fields

import numpy as np
import pytest

import twsc.cli as cli
from helpers import color_scene, heterogeneous_fixture, piecewise_smooth
from twsc.cli import RunManifest, main
from twsc.images import read_image, write_image
from twsc.pipeline import DenoiseConfig, DenoiseError


@pytest.fixture
def gray_png(tmp_path):
    path = tmp_path / "gray.png"
    write_image(path, piecewise_smooth(20, 20))
    return path


def test_denoise_png_records_schedule(tmp_path, gray_png):
    out = tmp_path / "out.png"
    assert main(["denoise", str(gray_png), str(out), "--sigma", "25"]) == 0
    assert read_image(out).shape == (20, 20)
    m = RunManifest.read(f"{out}.manifest")
    assert (m.config["p"], m.config["M"], m.config["K2"]) == (8, 90, 12)
    assert m.flags["sigma_source"] == "user_supplied" and m.flags["sigmas"] == [25.0]


def test_manifest_lists_every_config_field(tmp_path, gray_png):
    out = tmp_path / "o.pgm"
    man = tmp_path / "run.txt"
    assert main(["denoise", str(gray_png), str(out), "--sigma", "10", "--k2", "1",
                 "--manifest", str(man), "--reference", str(gray_png)]) == 0
    m = RunManifest.read(man)
    assert set(m.config) == {f.name for f in fields(DenoiseConfig)}
    assert m.config["K2"] == 1 and m.seed == 0
    assert math.isfinite(m.metrics["psnr_db"]) and -1 <= m.metrics["ssim"] <= 1
    assert "denoise_seconds" in m.timings


def test_manifest_round_trip():
    m = RunManifest("a b.png", "o.ppm", 7, {"mode": "color", "x": None},
                    {"p": 8, "tol": 1e-4 / 3, "sigma_override": [5.8, 4.4, 5.5]},
                    {"t": [0.1, 0.2]}, {"psnr_db": 31.123456789012345})
    text = m.to_text()
    assert RunManifest.from_text(text) == m
    assert RunManifest.from_text(text).to_text() == text
    with pytest.raises(ValueError):
        RunManifest.from_text("input=\"a\"\nbogus=1\n")


def test_reports_and_weight_dump(tmp_path, gray_png):
    rep, wts = tmp_path / "r.csv", tmp_path / "w.csv"
    assert main(["denoise", str(gray_png), str(tmp_path / "o.png"), "--sigma", "15", "--k2", "2",
                 "--report", str(rep), "--dump-weights", str(wts)]) == 0
    assert len(rep.read_text().splitlines()) == 3
    rows = list(csv.DictReader(wts.open()))
    assert {r["weight"] for r in rows} == {"w1", "w2"}
    assert {r["outer_iteration"] for r in rows} == {"2"}
    assert all(float(r["value"]) > 0 for r in rows)


def test_wsc_baseline_changes_output(tmp_path):
    clean, noisy, _ = heterogeneous_fixture(24, seed=2)
    src = tmp_path / "n.ppm"
    write_image(src, noisy)
    outs = []
    for extra in ([], ["--wsc-baseline"]):
        dst = tmp_path / f"o{len(outs)}.ppm"
        assert main(["denoise", str(src), str(dst), "--sigma-r", "5.8", "--sigma-g", "4.4",
                     "--sigma-b", "5.5", "--k2", "3", *extra]) == 0
        outs.append(dst.read_bytes())
    assert outs[0] != outs[1]


def test_missing_input_exit_2(tmp_path):
    out = tmp_path / "o.png"
    assert main(["denoise", str(tmp_path / "nope.png"), str(out), "--sigma", "5"]) == 2
    assert not out.exists()


def test_unwritable_output_exit_2(tmp_path, gray_png):
    assert main(["denoise", str(gray_png), str(tmp_path / "no" / "o.png"), "--sigma", "5"]) == 2


@pytest.mark.parametrize("extra", [
    ["--sigma", "5", "--sigma-r", "3"],
    ["--sigma", "5", "--estimate-noise"],
    ["--sigma-r", "1", "--sigma-g", "1", "--sigma-b", "1"],  # gray input
    ["--sigma", "-2"],
    ["--sigma", "5", "--window", "2"],
    ["--bogus"],
])
def test_bad_arguments_exit_1(tmp_path, gray_png, extra, capsys):
    out = tmp_path / "o.png"
    with pytest.raises(SystemExit) as ei:
        raise SystemExit(main(["denoise", str(gray_png), str(out), *extra]))
    assert ei.value.code == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_solver_failure_exit_3(tmp_path, gray_png, monkeypatch):
    def fail(*a, **k):
        raise DenoiseError("outer iteration 1, patch (0, 0): forced")

    monkeypatch.setattr(cli, "denoise", fail)
    assert main(["denoise", str(gray_png), str(tmp_path / "o.png"), "--sigma", "5"]) == 3


def test_estimated_noise_and_seeded_noise(tmp_path, gray_png):
    out = tmp_path / "o.png"
    assert main(["denoise", str(gray_png), str(out), "--add-noise", "20", "--seed", "4",
                 "--estimate-noise", "--k2", "1"]) == 0
    m = RunManifest.read(f"{out}.manifest")
    assert m.flags["sigma_source"] == "estimated"
    assert 10 < m.flags["sigmas"][0] < 30


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "twsc", "denoise", str(tmp_path / "x.png"),
                          str(tmp_path / "y.png")], capture_output=True, text=True)
    assert res.returncode == 2
    assert "cannot read input" in res.stderr and res.stdout == ""


def _corpus(tmp_path, images):
    d = tmp_path / "corpus"
    d.mkdir()
    for i, img in enumerate(images):
        write_image(d / f"img{i}.png", img)
    return d


def test_bench_smoke_and_determinism(tmp_path):
    d = _corpus(tmp_path, [np.full((16, 16), 128.0)])
    tables = []
    for i in range(2):
        out = tmp_path / f"t{i}.csv"
        assert main(["bench", str(d), "--sigmas", "15", "--seed", "3", "--out", str(out),
                     "--no-timing"]) == 0
        tables.append(out.read_bytes())
    assert tables[0] == tables[1]
    rows = list(csv.DictReader(tables[0].decode().splitlines()))
    assert [r["method"] for r in rows] == ["TWSC", "WSC"]
    assert {r["sigma"] for r in rows} == {"15"}
    assert all(math.isfinite(float(r["mean_psnr_db"])) and r["images"] == "1" for r in rows)
    assert list(rows[0]) == ["sigma", "method", "mean_psnr_db", "mean_ssim", "images", "wall_seconds"]


def test_bench_heterogeneous_ordering(tmp_path):
    d = _corpus(tmp_path, [color_scene(32, 32), color_scene(32, 32)[:, ::-1]])
    out = tmp_path / "t.csv"
    assert main(["bench", str(d), "--sigmas", "25", "--heterogeneous", "--out", str(out),
                 "--k2", "6"]) == 0
    rows = {r["method"]: r for r in csv.DictReader(out.open())}
    assert float(rows["TWSC"]["mean_psnr_db"]) >= float(rows["WSC"]["mean_psnr_db"])
    assert float(rows["TWSC"]["wall_seconds"]) > 0


def test_bench_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["bench", str(empty)]) == 1
    assert main(["bench", str(tmp_path / "missing")]) == 2
    assert main(["bench", str(empty), "--sigmas", "0,5"]) == 1
