import json

import pytest

from scalebridge.cli import ABLATION_COLUMNS, main
from scalebridge.evaluation import REPORT_KEYS

SMALL = """
[data]
scene_count = 3
count_max = 8
[train]
epochs = 1
[paths]
dataset = {d}/scenes.txt
checkpoint = {d}/model.npz
report = {d}/report
train_log = {d}/log.csv
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL.format(d=tmp_path / "out"))
    return str(path), tmp_path / "out"


def test_gen_data_is_byte_identical(small, capsys):
    cfg, out = small
    assert main(["gen-data", "--config", cfg]) == 0
    first = (out / "scenes.txt").read_bytes()
    assert main(["gen-data", "--config", cfg]) == 0
    assert (out / "scenes.txt").read_bytes() == first
    assert "wrote 3 scenes" in capsys.readouterr().out


def test_gen_data_empty(tmp_path, capsys):
    path = tmp_path / "zero.ini"
    path.write_text("[data]\nscene_count = 0\n")
    assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "z.txt")]) == 0
    assert "wrote 0 scenes" in capsys.readouterr().out


def test_train_requires_dataset(small, capsys):
    cfg, _ = small
    assert main(["train", "--config", cfg]) == 2
    assert "gen-data" in capsys.readouterr().err


def test_train_resume_and_eval(small):
    cfg, out = small
    main(["gen-data", "--config", cfg])
    assert main(["train", "--config", cfg, "--epochs", "0"]) == 0
    assert (out / "log.csv").read_text() == "epoch,det_loss,density_loss,total\n"
    assert main(["train", "--config", cfg]) == 0
    assert main(["train", "--config", cfg, "--resume"]) == 0
    rows = (out / "log.csv").read_text().splitlines()
    assert rows[0] == "epoch,det_loss,density_loss,total"
    assert [r.split(",")[0] for r in rows[1:]] == ["1", "2"]

    assert main(["eval", "--config", cfg]) == 0
    first = (out / "report.json").read_bytes()
    assert tuple(json.loads(first)) == REPORT_KEYS
    assert main(["eval", "--config", cfg]) == 0
    assert (out / "report.json").read_bytes() == first
    assert (out / "report.csv").read_text().splitlines()[0] == ",".join(REPORT_KEYS)


def test_eval_shape_mismatch(small, tmp_path, capsys):
    cfg, out = small
    main(["gen-data", "--config", cfg])
    main(["train", "--config", cfg, "--epochs", "0"])
    wide = tmp_path / "wide.ini"
    wide.write_text(SMALL.format(d=out) + "[experts]\nchannels = 16\n")
    assert main(["eval", "--config", str(wide)]) == 2
    assert "tensor '" in capsys.readouterr().err


def test_ablate_schema_and_determinism(small):
    cfg, out = small
    main(["gen-data", "--config", cfg])
    assert main(["ablate", "--config", cfg, "--out", str(out / "a.csv")]) == 0
    assert main(["ablate", "--config", cfg, "--out", str(out / "b.csv")]) == 0
    text = (out / "a.csv").read_text()
    assert text == (out / "b.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == ",".join(ABLATION_COLUMNS)
    assert [l.split(",")[0] for l in lines[1:]] == ["neither", "rem_only", "dgq_only", "both"]


def test_grad_check_large_eps_is_reported(capsys):
    with pytest.warns(UserWarning):
        code = main(["grad-check", "--eps", "1e-2"])
    out = capsys.readouterr().out
    assert code == 1 and "FAIL" in out
    value = float(out.split("max relative error: ")[1].split()[0])
    assert value == value and value < float("inf")
