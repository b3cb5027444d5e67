import csv
import json

import numpy as np
import pytest

from deblur import cli
from deblur.config import LAMBDA_GRID, RunConfig
from deblur.data import motion_kernel, scene
from deblur.io import read_case, read_image, write_image, write_kernel

FAST = ["--set", "solver.max_iters=4", "--set", "solver.image_widths=[8,16,16]",
        "--set", "solver.window=2", "--set", "solver.groundtruth_every=2"]


@pytest.fixture
def sources(tmp_path):
    write_image(tmp_path / "clean.png", scene((40, 40)))
    write_kernel(tmp_path / "kernel.csv", motion_kernel((7, 7), seed=0))
    return tmp_path


@pytest.fixture
def case(sources):
    out = sources / "cases"
    code = cli.main(["synth", "--out", str(out), "--set", f"paths.clean=\"{sources / 'clean.png'}\"",
                     "--set", f"paths.kernel=\"{sources / 'kernel.csv'}\"",
                     "--set", 'noise.kind="gaussian"', "--set", "noise.gaussian_sigma=0.01",
                     "--set", "noise.seed=3"])
    assert code == 0
    return out / "case_0"


def test_synth_layout(case):
    names = {p.name for p in case.iterdir()}
    assert {"clean.png", "kernel.png", "kernel.csv", "blurry.png", "spec.json",
            "config.resolved.json"} <= names
    c = read_case(case)
    assert c["blurry"].shape == c["clean"].shape == (40, 40)
    assert c["spec"]["schema"] == "deblur-case/1"


def test_synth_is_deterministic(sources, case):
    again = sources / "again"
    cli.main(["synth", "--out", str(again), "--config", str(case / "config.resolved.json")])
    np.testing.assert_array_equal(read_image(again / "case_0" / "blurry.png"),
                                  read_image(case / "blurry.png"))


def test_run_on_case(case, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["run", "--case", str(case), "--out", str(out), "--seed", "1"] + FAST) == 0
    for name in ("x_hat.png", "kernel.csv", "kernel.png", "trace.csv", "report.json",
                 "checkpoint.npz", "config.resolved.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert {"psnr", "ssim", "vif", "fbe"} <= set(report)
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["seed"] == 1 and resolved["solver"]["lr_image"] == 1e-2
    assert RunConfig(resolved).hash() == report["config_hash"]


def test_run_without_groundtruth(case, tmp_path):
    out = tmp_path / "plain"
    code = cli.main(["run", "--input", str(case / "blurry.png"), "--out", str(out),
                     "--es-profile", "high_noise"] + FAST)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert not {"psnr", "ssim", "vif", "fbe"} & set(report)
    assert report["outputs"]["image"] == "x_hat.png"
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["solver"]["patience"] == 200


def test_invalid_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"objective": {"huber_delta": -1}}))
    assert cli.main(["run", "--config", str(bad)]) == 1
    bad.write_text(json.dumps({"no_such_key": 1}))
    assert cli.main(["run", "--config", str(bad)]) == 1
    assert cli.main(["run", "--set", "solver.gamma=2"]) == 1


def test_missing_input_exit_2(tmp_path):
    assert cli.main(["run", "--input", str(tmp_path / "missing.png"),
                     "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_non_finite_objective_exit_3(case, tmp_path, monkeypatch):
    import torch
    from deblur import solver

    def broken(y, x, k, cfg):
        nan = torch.tensor(float("nan"), dtype=x.dtype)
        return nan + 0 * x.sum(), nan, nan

    monkeypatch.setattr(solver, "objective_terms", broken)
    out = tmp_path / "nan"
    assert cli.main(["run", "--case", str(case), "--out", str(out)] + FAST) == 3
    assert (out / "trace.csv").exists()


def test_kernel_size_levels():
    sizes = cli._levels((13, 13), (256, 256), 5)
    assert sizes[0] == (13, 13) and sizes[-1] == (128, 128)
    assert all(a[0] < b[0] for a, b in zip(sizes, sizes[1:]))


def test_lambda_grid_default():
    assert 1e-5 in LAMBDA_GRID and 1e-6 in LAMBDA_GRID


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_single_setting_matches_run(case, tmp_path):
    sweep_out, run_out = tmp_path / "sweep", tmp_path / "run"
    args = FAST + ["--set", "objective.lambda_x=2e-5"]
    assert cli.main(["sweep", "--cases", str(case.parent), "--out", str(sweep_out),
                     "--axis", "lambda", "--set", "sweep.values=[2e-5]"] + args) == 0
    assert cli.main(["run", "--case", str(case), "--out", str(run_out)] + args) == 0
    rows = _rows(sweep_out / "aggregate.csv")
    assert len(rows) == 1
    report = json.loads((run_out / "report.json").read_text())
    assert float(rows[0]["psnr"]) == pytest.approx(report["psnr"], abs=1e-12)
    assert (sweep_out / "summary.png").exists() and (sweep_out / "summary.svg").exists()


def test_sweep_kernel_levels_and_workers(case, tmp_path, monkeypatch):
    monkeypatch.setenv("DEBLUR_NUM_WORKERS", "2")
    out = tmp_path / "levels"
    assert cli.main(["sweep", "--cases", str(case.parent), "--out", str(out),
                     "--axis", "kernel_size_level", "--set", "sweep.levels=2"] + FAST) == 0
    rows = _rows(out / "aggregate.csv")
    assert [r["kernel_size"] for r in rows] == ["7x7", "20x20"]
    summary = _rows(out / "summary.csv")
    assert [s["setting"] for s in summary] == ["1", "2"]


def test_sweep_records_row_errors(case, tmp_path):
    out = tmp_path / "noise"
    code = cli.main(["sweep", "--cases", str(case.parent), "--out", str(out), "--axis", "noise",
                     "--set", 'sweep.noise_presets=["saturation","gaussian_low"]'] + FAST)
    assert code == 0
    rows = {r["setting"]: r for r in _rows(out / "aggregate.csv")}
    assert rows["saturation"]["error"] and not rows["gaussian_low"]["error"]


def test_eval_identical_directories(tmp_path):
    d = tmp_path / "gt"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        write_image(d / f"im{i}.png", rng.random((24, 24)))
    out = tmp_path / "ev"
    assert cli.main(["eval", "--estimates", str(d), "--groundtruth", str(d), "--out", str(out)]) == 0
    rows = _rows(out / "metrics.csv")
    assert [r["case"] for r in rows] == ["im0.png", "im1.png", "im2.png", "mean"]
    assert all(float(r["psnr"]) == 100.0 for r in rows)


def test_eval_corrupt_file_and_mean(tmp_path):
    gt, est = tmp_path / "gt", tmp_path / "est"
    gt.mkdir()
    est.mkdir()
    rng = np.random.default_rng(1)
    for i in range(3):
        x = rng.random((24, 24))
        write_image(gt / f"im{i}.png", x)
        write_image(est / f"im{i}.png", np.clip(x + 0.05 * (i + 1), 0, 1))
    (est / "im1.png").write_bytes(b"not a png")
    out = tmp_path / "ev"
    assert cli.main(["eval", "--estimates", str(est), "--groundtruth", str(gt), "--out", str(out)]) == 0
    rows = {r["case"]: r for r in _rows(out / "metrics.csv")}
    assert rows["im1.png"]["error"]
    expected = np.mean([float(rows[n]["psnr"]) for n in ("im0.png", "im2.png")])
    assert float(rows["mean"]["psnr"]) == pytest.approx(expected, rel=1e-12)


def test_eval_no_matches_exit_2(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    write_image(tmp_path / "a" / "x.png", np.zeros((4, 4)))
    write_image(tmp_path / "b" / "y.png", np.zeros((4, 4)))
    assert cli.main(["eval", "--estimates", str(tmp_path / "a"),
                     "--groundtruth", str(tmp_path / "b"), "--out", str(tmp_path / "o")]) == 2


def test_console_script_help(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--help"])
    assert info.value.code == 0
    assert "synth" in capsys.readouterr().out
