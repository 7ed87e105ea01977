from dataclasses import replace

import numpy as np
import pytest
from conftest import DATA

from fracshape.driver import LoadSchedule, SimulationResult, StepRecord
from fracshape.elasticity import Material
from fracshape.io import (
    CSV_HEADER,
    ConfigError,
    MeshFormatError,
    RunConfig,
    format_config,
    format_mesh,
    format_records_csv,
    parse_config,
    parse_mesh,
    read_mesh,
    write_mesh,
)
from fracshape.mesh import Tag
from fracshape.specimen import Level, SpecimenSpec, Tip, generate

MINIMAL = "[specimen]\ntip = round\n\n[schedule]\nmode = tension\n"


def test_minimal_config_uses_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.material == Material()
    assert cfg.schedule == LoadSchedule.tension()
    assert cfg.specimen.tip is Tip.ROUND
    assert cfg.optimizer.max_opt_iters == 200
    assert cfg.optimizer.penalty.psi_schedule == (1e10, 1e11, 1e12, 1e13, 1e14, 1e15)


def test_shear_mode_picks_shear_defaults():
    cfg = parse_config("[specimen]\n[schedule]\nmode = shear\n")
    assert cfg.schedule == LoadSchedule.shear()


def test_values_are_read():
    text = (
        "[specimen]\ntip = pointy\ndelta = 1e-3\nlevel = coarse\n"
        "[schedule]\nmode = tension\nmax_loadsteps = 3\n"
        "[material]\ngc = 3.0\n"
        "[optimizer]\nmax_opt_iters = 17\npsi_min = 1e12\npsi_max = 1e14\n"
        "[output]\ndirectory = out\nsnapshot_every = 0\n"
    )
    cfg = parse_config(text)
    assert cfg.specimen.delta == 1e-3 and cfg.specimen.level is Level.COARSE
    assert cfg.schedule.max_loadsteps == 3
    assert cfg.material.gc == 3.0
    assert cfg.optimizer.max_opt_iters == 17
    assert cfg.optimizer.penalty.psi_schedule == (1e12, 1e13, 1e14)
    assert (cfg.output_dir, cfg.snapshot_every) == ("out", 0)


@pytest.mark.parametrize(
    "text, line",
    [
        ("[specimen]\n[schedule]\n[material]\nlambda = -1\n", 4),
        ("[specimen]\n[schedule]\nbogus = 1\n", 3),
        ("[specimen]\ntip = oval\n[schedule]\n", 2),
        ("[specimen]\n[schedule]\nmax_loadsteps = many\n", 3),
        ("[specimen]\n[schedule]\n[extra]\n", 3),
        ("[specimen]\n[schedule]\nmode = torsion\n", 3),
        ("[specimen]\ndelta = 2\n[schedule]\n", 2),
    ],
)
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_missing_section():
    with pytest.raises(ConfigError, match="schedule"):
        parse_config("[specimen]\n")


def test_config_round_trip():
    cfg = parse_config(
        "[specimen]\ntip = flat\ndelta = 0.02\n[schedule]\nmode = shear\nfine_increment = 0.25\n"
        "[optimizer]\narmijo_tau0 = 0.001\n[output]\ndirectory = somewhere\n"
    )
    assert parse_config(format_config(cfg)) == cfg
    default = RunConfig()
    assert parse_config(format_config(default)) == default


def test_mesh_fixture_loads():
    m = read_mesh(DATA / "two_triangles.fm")
    assert (m.n_nodes, m.n_triangles) == (4, 2)
    assert sorted(Tag(int(t)).label for t in m.tags) == ["bottom", "left", "right", "top"]
    assert m.area == pytest.approx(1.0)
    assert m.delta is None


def test_mesh_round_trip_is_exact(tmp_path):
    m = generate(SpecimenSpec("pointy", 1e-2, "coarse"))
    write_mesh(tmp_path / "m.fm", m)
    back = read_mesh(tmp_path / "m.fm")
    np.testing.assert_array_equal(back.nodes, m.nodes)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.edges, m.edges)
    np.testing.assert_array_equal(back.tags, m.tags)
    assert back.delta == pytest.approx(1e-2)
    assert format_mesh(back) == format_mesh(m)


def _fixture_text():
    return (DATA / "two_triangles.fm").read_text()


@pytest.mark.parametrize(
    "edit, match",
    [
        (lambda t: t.replace("0 0 1 2", "0 0 2 1"), "counter-clockwise"),
        (lambda t: t.replace("fracmesh 1", "fracmesh 2"), "version"),
        (lambda t: t.replace("fracmesh 1", "meshy 1"), "not a fracmesh"),
        (lambda t: t.replace("3 0 left\n", ""), "end of file"),
        (lambda t: t.replace("boundary 4", "boundary 3").replace("3 0 left\n", ""), "every boundary edge"),
        (lambda t: t.replace("left", "sideways"), "line 14"),
        (lambda t: t.replace("1 1 0\n", "1 x 0\n"), "line 4"),
        (lambda t: t + "junk\n", "trailing"),
        (lambda t: t.replace("1 0 2 3", "1 0 2 9"), "out of range"),
    ],
)
def test_bad_mesh_files(edit, match):
    with pytest.raises(MeshFormatError, match=match):
        parse_mesh(edit(_fixture_text()))


def test_records_csv():
    res = SimulationResult()
    assert format_records_csv(res) == CSV_HEADER + "\n"
    rec = StepRecord(1, (0.0, 5e-4), 0.1, 1.4, 9.9, -8.4, (0.0, 75.5), 1, 0, 0.51, (0.49, 0.5), "x")
    res.records.append(rec)
    lines = format_records_csv(res).splitlines()
    assert len(lines) == 2
    fields = lines[1].split(",")
    assert len(fields) == len(CSV_HEADER.split(","))
    assert float(fields[2]) == 5e-4 and fields[0] == "1"
    res.records.append(replace(rec, loadstep=2))
    assert format_records_csv(res).count("\n") == 3
