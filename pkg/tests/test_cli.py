import csv
import os

import numpy as np
import pytest
import scipy.sparse as sp

from healfem.cli import main, parse_grid
from healfem.config import ConfigError, parse_config, render_effective
from healfem.io import read_timeseries, read_vtk_cell_data, write_sparse, write_timeseries


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ------------------------------------------------------------------ config
def test_empty_file_with_scenario_echoes_table_defaults():
    cfg = parse_config("", scenario="uniaxial")
    prov = cfg.provenance
    assert prov["growth.M_g1"] == (0.01, "Table 1")
    assert prov["materials.tissue.mu1"] == (1.0, "Table 1")
    assert prov["damage.r_d"] == (0.2, "Table 1")
    assert prov["damage.beta_d"] == (0.001, "Table 1")
    assert prov["solver.tol"] == (1e-8, "default")
    text = render_effective(cfg)
    assert "M_g1 = 0.01  # Table 1" in text


def test_override_has_user_provenance():
    cfg = parse_config('[scenario]\nkind = "uniaxial"\n[remodeling]\nM_rm = 0.05\n')
    assert cfg.spec.healing.M_rm == 0.05
    assert cfg.provenance["remodeling.M_rm"] == (0.05, "user")
    assert "M_rm = 0.05  # user" in render_effective(cfg)


def test_misspelled_key_suggests_nearest():
    with pytest.raises(ConfigError) as info:
        parse_config('[scenario]\nkind = "uniaxial"\n[growth]\nMg_1 = 0.1\n')
    assert "Mg_1" in str(info.value) and "M_g1" in str(info.value)


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config('[scenario]\nkind = \n')


def test_out_of_range_value_names_key():
    with pytest.raises(ConfigError, match="remodeling.eta"):
        parse_config('[scenario]\nkind = "uniaxial"\n[remodeling]\neta = 1.5\n')


def test_missing_kind_is_an_error():
    with pytest.raises(ConfigError, match="scenario.kind"):
        parse_config("")


def test_unknown_section_is_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config('[scenario]\nkind = "uniaxial"\n[groth]\nM_g1 = 0.1\n')


def test_region_materials_are_checked():
    cfg = parse_config('[scenario]\nkind = "angioplasty"\n[materials.lipid]\nmu1 = 0.2\n')
    assert cfg.spec.materials["lipid"][0].mu == 0.2
    assert cfg.provenance["materials.lipid.mu1"] == (0.2, "user")
    assert cfg.provenance["materials.plaque.mu1"] == (78.9, "Table 3")
    with pytest.raises(ConfigError, match="plaq"):
        parse_config('[scenario]\nkind = "angioplasty"\n[materials.plaq]\nmu1 = 1.0\n')


def test_scenario_specific_keys_are_guarded():
    with pytest.raises(ConfigError, match="angioplasty"):
        parse_config('[scenario]\nkind = "uniaxial"\ninflation_radius = 1.4\n')


def test_rendered_config_parses_back():
    cfg = parse_config('[scenario]\nkind = "open_hole"\nmesh_level = "medium"\n')
    text = render_effective(cfg)
    again = parse_config(text)
    assert again.spec == cfg.spec


def test_parse_grid():
    keys, points = parse_grid(["remodeling.M_rm=0.01,0.02", "remodeling.eta=0,1"])
    assert keys == ["remodeling.M_rm", "remodeling.eta"]
    assert points == [(0.01, 0.0), (0.01, 1.0), (0.02, 0.0), (0.02, 1.0)]
    with pytest.raises(ConfigError):
        parse_grid([])


# ------------------------------------------------------------------ io
def test_timeseries_roundtrip_is_lossless(tmp_path):
    recs = [{"time": 0.0, "x": 0.1}, {"time": 1.0, "x": 1.0 / 3.0}, {"time": 2.0, "x": np.pi}]
    path = str(tmp_path / "ts.csv")
    write_timeseries(path, recs)
    back = read_timeseries(path)
    assert back["x"].tolist() == [0.1, 1.0 / 3.0, np.pi]
    with open(path, encoding="ascii") as fh:
        assert fh.readline() == "time,x\n"


def test_timeseries_requires_increasing_time(tmp_path):
    with pytest.raises(ValueError):
        write_timeseries(str(tmp_path / "ts.csv"), [{"time": 1.0}, {"time": 1.0}])


def test_sparse_export_format(tmp_path):
    K = sp.csr_matrix(np.array([[2.0, 0.0], [0.5, 0.0]]))
    path = tmp_path / "K.txt"
    write_sparse(str(path), K)
    rows = sorted(tuple(line.split()) for line in path.read_text().splitlines())
    assert rows == [("0", "0", "2"), ("1", "0", "0.5")]


# ------------------------------------------------------------------ commands
def test_run_writes_all_artifacts(tmp_path):
    cfg = write(tmp_path / "empty.toml", "")
    out = tmp_path / "out"
    code = main(["run", cfg, "--scenario", "uniaxial", "--duration", "150", "--snapshot-times", "100,150",
                 "--out", str(out)])
    assert code == 0
    names = sorted(os.listdir(out))
    assert names == ["effective_config.toml", "run.log", "snapshot_100.vtk", "snapshot_150.vtk", "timeseries.csv"]
    cells = read_vtk_cell_data(str(out / "snapshot_150.vtk"))
    assert set(cells) >= {"region", "H", "lambda", "Jg1", "Jg2", "d"}
    ts = read_timeseries(str(out / "timeseries.csv"))
    assert ts["time"][-1] == 150.0 and np.all(np.diff(ts["time"]) > 0)
    assert "# user" in (out / "effective_config.toml").read_text()


def test_rerun_gives_identical_csv(tmp_path):
    cfg = write(tmp_path / "c.toml", '[scenario]\nkind = "uniaxial"\nvariant = "combined"\n')
    for name in ("a", "b"):
        assert main(["run", cfg, "--duration", "200", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()


def test_forced_solver_failure_exit_and_log(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", '[scenario]\nkind = "angioplasty"\n[solver]\nmax_cutbacks = 0\n')
    code = main(["run", cfg, "--dt", "100", "--duration", "100", "--out", str(tmp_path / "o")])
    assert code == 3
    log = (tmp_path / "o" / "run.log").read_text()
    assert "increment 2" in log
    assert "run.log" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", '[scenario]\nkind = "uniaxial"\n[growth]\nMg_1 = 0.1\n')
    assert main(["run", cfg]) == 2
    assert "M_g1" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write(tmp_path / "c.toml", "")
    assert main(["run", cfg, "--scenario", "uniaxial", "--out", str(blocker / "sub")]) == 4


def read_summary(path):
    with open(path, newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


def test_sweep_remodeling_rate_orders_healing_time(tmp_path):
    cfg = write(tmp_path / "c.toml", '[scenario]\nkind = "uniaxial"\nvariant = "remodeling"\n')
    out = tmp_path / "sweep"
    code = main(["sweep", cfg, "--grid", "remodeling.M_rm=0.01,0.02,0.05", "--duration", "400", "--out", str(out)])
    assert code == 0
    rows = read_summary(out / "summary.csv")
    assert [float(r["remodeling.M_rm"]) for r in rows] == [0.01, 0.02, 0.05]
    times = [float(r["t_H_0.9"]) for r in rows]
    assert times[0] > times[1] > times[2]
    for r in rows:
        assert os.path.isfile(out / r["directory"] / "timeseries.csv")


def test_sweep_eta_orders_final_healing(tmp_path):
    cfg = write(tmp_path / "c.toml", '[scenario]\nkind = "uniaxial"\nvariant = "remodeling"\n')
    out = tmp_path / "sweep"
    code = main(["sweep", cfg, "--grid", "remodeling.eta=0,0.2,0.5,1.0", "--duration", "600", "--out", str(out)])
    assert code == 0
    H = [float(r["H_final"]) for r in read_summary(out / "summary.csv")]
    assert H[0] < H[1] < H[2] < H[3]


def test_empty_grid_is_an_error(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", "")
    assert main(["sweep", cfg, "--scenario", "uniaxial"]) == 2
    assert "grid" in capsys.readouterr().err
