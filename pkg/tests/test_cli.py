from __future__ import annotations

import csv
import json
import logging

import numpy as np
import pytest

from vstar.cli import main
from vstar.io import read_csv

BASE = """
[grid]
n = 60
[profile.velocity]
amplitude = 0.05
shape = "cubic"
[solver]
T_final = 0.02
output_every = 0.0025
[diagnostics]
energy = true
extension = true
[extension]
grids = [50, 100]
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(BASE)
    return p


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_outputs_and_determinism(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(config), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(config), "--out", str(b)]) == 0
    fa = _files(a)
    assert {"trajectory.csv", "diagnostics.csv", "energy.csv", "summary.json",
            "eulerian_final.csv"} <= set(fa)
    assert fa == _files(b)
    for name in fa:
        if name.endswith(".csv"):
            meta, _, _ = read_csv(a / name)
            assert {"config_hash", "n", "scheme"} <= set(meta)
            assert meta["n"] == "60"
    summary = json.loads((a / "summary.json").read_text())
    assert summary["termination"] == "completed" and summary["energy"]["terms"] == 20


def test_overrides_change_hash(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(config), "--out", str(a)])
    main(["simulate", "--config", str(config), "--out", str(b), "--grid-n", "40"])
    ma, _, _ = read_csv(a / "trajectory.csv")
    mb, _, _ = read_csv(b / "trajectory.csv")
    assert mb["n"] == "40" and ma["config_hash"] != mb["config_hash"]


def test_energy_and_unique_with_resampling(tmp_path, config, caplog):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(config), "--out", str(a)])
    main(["simulate", "--config", str(config), "--out", str(b), "--grid-n", "80"])
    assert main(["energy", str(a / "trajectory.csv"), "--config", str(config),
                 "--out", str(tmp_path / "e")]) == 0
    man = json.loads((tmp_path / "e" / "energy_manifest.json").read_text())
    assert len(man["terms"]) == 20
    with caplog.at_level(logging.WARNING):
        rc = main(["unique", str(a / "trajectory.csv"), str(b / "trajectory.csv"),
                   "--config", str(config), "--out", str(tmp_path / "u")])
    assert rc == 0
    assert any("resampling" in r.message for r in caplog.records)
    meta, header, table = read_csv(tmp_path / "u" / "uniqueness.csv")
    assert header[:2] == ["t", "D"] and table.shape[0] == 9
    assert table[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_unique_same_trajectory_is_zero(tmp_path, config):
    a = tmp_path / "a"
    main(["simulate", "--config", str(config), "--out", str(a)])
    t = str(a / "trajectory.csv")
    assert main(["unique", t, t, "--config", str(config), "--out", str(tmp_path / "u")]) == 0
    _, _, table = read_csv(tmp_path / "u" / "uniqueness.csv")
    assert np.all(table[:, 1] == 0)
    cert = json.loads((tmp_path / "u" / "certificate.json").read_text())
    assert cert["certificate"]["ok"]


def test_equilibrium_and_reload(tmp_path):
    out = tmp_path / "eq"
    assert main(["equilibrium", "--gamma", "2", "--grid-n", "100", "--out", str(out)]) == 0
    info = json.loads((out / "equilibrium.json").read_text())
    assert info["A"] == pytest.approx(2 / np.pi, rel=1e-12)
    cfg = tmp_path / "eq.toml"
    cfg.write_text(f'[grid]\nn = 100\n[profile]\nkind = "file"\npath = "{out / "profile.csv"}"\n'
                   f'[physics]\nkappa = 1\n[solver]\nT_final = 0.05\n')
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    s = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert s["sup_vmax"] <= 1e-3


def test_sweep_mu(tmp_path, config):
    out = tmp_path / "sw"
    rc = main(["sweep-mu", "--config", str(config), "--out", str(out),
               "--mu", "1e-2", "5e-3", "2.5e-3"])
    assert rc == 0
    lines = [l for l in (out / "sweep_mu.csv").read_text().splitlines() if l[0] != "#"]
    rows = list(csv.DictReader(lines))
    assert len(rows) == 2 and all(r["flag"] == "" for r in rows)
    assert float(rows[1]["distance"]) < float(rows[0]["distance"])


def test_extend_check(tmp_path, config):
    out = tmp_path / "x"
    assert main(["extend-check", "--config", str(config), "--out", str(out)]) == 0
    _, header, table = read_csv(out / "extension.csv")
    assert table.shape[0] == 2
    np.testing.assert_allclose(table[:, header.index("drho_jump")], 2.0, rtol=1e-3)


@pytest.mark.parametrize("argv,code", [
    (["simulate", "--gamma", "1.0"], 2),
    (["simulate", "--gamma", "1.1", "--grid-n", "3"], 2),
    (["equilibrium", "--gamma", "1.1"], 2),
    (["simulate", "--config", "does/not/exist.toml"], 4),
])
def test_exit_codes(tmp_path, argv, code):
    assert main(argv + ["--out", str(tmp_path / "o")]) == code


def test_bad_config_key(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[grid]\nsize = 3\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_missing_profile_file(tmp_path):
    p = tmp_path / "f.toml"
    p.write_text('[profile]\nkind = "file"\npath = "nowhere.csv"\n')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 4


def test_numerical_exit_code(tmp_path):
    p = tmp_path / "in.toml"
    p.write_text('[grid]\nn = 60\n[profile.velocity]\namplitude = -5.0\nshape = "linear"\n'
                 '[solver]\nT_final = 0.5\n')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 3
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["termination"] != "completed"


def test_unwritable_output(tmp_path, config):
    f = tmp_path / "file"
    f.write_text("x")
    assert main(["simulate", "--config", str(config), "--out", str(f / "sub")]) == 4
