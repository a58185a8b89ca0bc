import csv
import json
import math

import pytest

from mollikit import cli


def _ini(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_defaults_validate():
    cfg = cli.RunConfig().validate()
    assert cfg.sweep()[0] == 0.5 and len(cfg.sweep()) == 10


def test_config_roundtrip(tmp_path):
    path = _ini(tmp_path, """
[kernel]
dim = 2
order = 2
kind = canonical, varying
blend_radius = 0.5
[domain]
half_width = 4
[sweep]
values = 0.4, 0.2, 0.1, 0.05
[suite]
checkers = support, scaling
grid = 7
[output]
dir = out
""")
    cfg = cli.load_config(path).validate()
    assert cfg.dim == 2 and cfg.order == 2 and cfg.kinds == ("canonical", "varying")
    assert cfg.suite == ("support", "scaling") and cfg.sup_grid == 7
    assert list(cfg.sweep()) == [0.4, 0.2, 0.1, 0.05] and cfg.half_width == 4.0


@pytest.mark.parametrize("text", [
    "[sweep]\nvalues = 0.1 0.2 0.3 0.4\n",
    "[sweep]\nstart = 0.9\n",
    "[kernel]\norder = 7\n",
    "[kernel]\ndim = 4\n",
    "[kernel]\nkind = gaussian\n",
    "[suite]\ncheckers = bogus\n",
    "[sweep]\ncount = 3\n",
    "[kernel]\norder = two\n",
    "not an ini file",
])
def test_bad_configs_exit_2(tmp_path, text, capsys):
    assert cli.main(["run", "--config", _ini(tmp_path, text), "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_flags_exit_2(tmp_path):
    assert cli.main(["verify", "--suite", "limits", "--out", str(tmp_path)]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MOLLIKIT_THREADS", "x")
    assert cli.main(["verify", "--out", str(tmp_path)]) == 2


def test_moments(tmp_path, capsys):
    assert cli.main(["moments", "--order", "3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "coef 0 " in out and "moments: pass" in out
    rows = _rows(tmp_path / "moments.csv")
    assert [r["case"] for r in rows] == ["m0", "m1", "m2", "m3"]


def test_verify_and_csv_contract(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path)]) == 0
    for name in ("normalization", "support", "scaling"):
        rows = _rows(tmp_path / f"{name}.csv")
        assert rows and list(rows[0]) == list(cli.COLUMNS)
        for r in rows:
            slope, target = float(r["slope"]), float(r["target"])
            ok = r["floor_flag"] == "true" or (not math.isnan(slope) and slope >= target)
            assert r["verdict"] == ("pass" if ok else "fail")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] and set(summary["suites"]) == {"normalization", "support", "scaling"}


def test_full_run_1d_and_determinism(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--out", str(a)]) == 0
    monkeypatch.setenv("MOLLIKIT_THREADS", "3")
    assert cli.main(["run", "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert len(names) == len(cli.CHECKERS) + 1
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n
    # rate checkers store the fitted slope
    rows = _rows(a / "two_point_order.csv")
    assert all(float(r["slope"]) > 1.8 for r in rows)


def test_mislabeled_order_exits_1(tmp_path, capsys):
    path = _ini(tmp_path, f"[kernel]\norder = 0\ndeclared_order = 3\n[output]\ndir = {tmp_path}\n")
    assert cli.main(["rates", "--config", path, "--suite", "two_point_order"]) == 1
    assert "two_point_order: fail" in capsys.readouterr().out
    rows = _rows(tmp_path / "two_point_order.csv")
    for r in rows:
        assert float(r["slope"]) == pytest.approx(2.0, abs=0.1)
        assert float(r["target"]) == pytest.approx(3.8)
        assert r["verdict"] == "fail"


def test_eps_count_flag(tmp_path):
    assert cli.main(["embed", "--eps-count", "6", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "embedding.csv")
    assert len({r["epsilon"] for r in rows}) == 6
