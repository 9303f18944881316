import csv
import json
from pathlib import Path

import numpy as np
import pytest

import wgqed
from wgqed import cli
from wgqed.core import UnknownParameterPath

SCENARIOS = Path(wgqed.__file__).parent / "scenarios"


def _data(name):
    return json.loads((SCENARIOS / f"{name}.json").read_text())


def _write(tmp_path, data, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_all_scenarios_load():
    names = sorted(p.stem for p in SCENARIOS.glob("*.json"))
    assert {"fig2a", "fig6b", "fig10f", "stimulated"} <= set(names)
    for name in names:
        sc = cli.load_scenario(_data(name))
        assert sc.task in cli.RUNNERS
        for key in sc.grids:
            assert np.all(np.diff(sc.grid(key)) > 0)


def test_fig2a_run(tmp_path):
    assert cli.main(["run", str(SCENARIOS / "fig2a.json"), "--output-dir", str(tmp_path)]) == 0
    rows = list(csv.reader((tmp_path / "fig2a.csv").open()))
    head = rows[0]
    assert head[0] == "x" and len(rows) == 1402
    x = np.array([float(r[0]) for r in rows[1:]])
    p = np.array([float(r[head.index("prob")]) for r in rows[1:]])
    assert np.all(p[x > 10.0] == 0)
    # plain sum on a 0.01 grid across the jump at the front
    assert np.sum(p) * (x[1] - x[0]) == pytest.approx(0.5, abs=1e-2)
    summary = json.loads((tmp_path / "fig2a.summary.json").read_text())
    assert {"config_hash", "wall_time", "headline"} <= set(summary)


def test_stimulated_headline(tmp_path):
    summary = cli.run(cli.read_scenario(SCENARIOS / "stimulated.json"), tmp_path)
    assert summary["headline"]["lambda_max"] == pytest.approx(2 / 3, abs=1e-6)


def test_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    for out in (a, b):
        assert cli.main(["run", str(SCENARIOS / "gme_single.json"), "--output-dir", str(out),
                         "--format", "json"]) == 0
    name = _data("gme_single")["output"]["path"] + ".json"
    assert (a / name).read_bytes() == (b / name).read_bytes()
    table = json.loads((a / name).read_text())
    assert isinstance(table, (dict, list))


def test_csv_layout(tmp_path):
    data = _data("fig2a")
    data["grids"]["x_grid"]["num"] = 11
    cli.main(["run", _write(tmp_path, data), "--output-dir", str(tmp_path)])
    raw = (tmp_path / "fig2a.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")


def test_malformed_grid_writes_nothing(tmp_path):
    data = _data("fig2a")
    data["grids"]["x_grid"] = [0.0, 1.0, 0.5]
    out = tmp_path / "out"
    out.mkdir()
    assert cli.main(["run", _write(tmp_path, data), "--output-dir", str(out)]) == 2
    assert list(out.iterdir()) == []


def test_missing_file_and_bad_field(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.json")]) == 2
    data = _data("fig2a")
    data["extra"] = 1
    assert cli.main(["run", _write(tmp_path, data)]) == 2


def test_computation_error_exit_code(tmp_path, capsys):
    data = _data("fig10a")
    data["system"]["n"] = 31
    out = tmp_path / "out"
    out.mkdir()
    assert cli.main(["run", _write(tmp_path, data), "--output-dir", str(out)]) == 3
    assert "fig10a" in capsys.readouterr().err
    assert list(out.iterdir()) == []


def test_sweep_index_sorted(tmp_path):
    path = str(SCENARIOS / "fig2a.json")
    assert cli.main(["sweep", path, "--param", "params.T", "--values", "5,1,3",
                     "--output-dir", str(tmp_path)]) == 0
    rows = list(csv.reader((tmp_path / "fig2a.index.csv").open()))
    assert rows[0] == ["value", "emitted_norm", "output"] and rows[0][-1] == "output"
    assert [float(r[0]) for r in rows[1:]] == [1.0, 3.0, 5.0]
    for r in rows[1:]:
        assert (tmp_path / r[-1]).exists()


def test_sweep_empty_and_unknown(tmp_path):
    sc = cli.read_scenario(SCENARIOS / "fig2a.json")
    assert cli.sweep(sc, "params.T", [], tmp_path) == []
    assert (tmp_path / "fig2a.index.csv").read_text().count("\n") == 1
    with pytest.raises(UnknownParameterPath):
        cli.sweep(sc, "params.nothing.here", [1.0], tmp_path)
    assert cli.main(["sweep", str(SCENARIOS / "fig2a.json"), "--param", "system.bogus",
                     "--values", "1", "--output-dir", str(tmp_path)]) == 2
