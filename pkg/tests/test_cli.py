import json

import pytest

from slitspiral import cli, meshgen, pipeline
from slitspiral.errors import InfeasibleError
from slitspiral.mesh import save_obj
from slitspiral.pipeline import PipelineConfig

FAST = ["--max-iters", "8", "--anchor-boundary", "1"]


@pytest.fixture(scope="module")
def mesh_file(tmp_path_factory):
    f = tmp_path_factory.mktemp("mesh") / "ring.obj"
    save_obj(meshgen.annulus(20, 50, h=4), f)
    return f


@pytest.fixture(scope="module")
def plan_dirs(mesh_file, tmp_path_factory):
    dirs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"plan{k}")
        assert cli.main(["plan", "--mesh", str(mesh_file), *FAST, "-o", str(out)]) == 0
        dirs.append(out)
    return dirs


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)["error"]


def test_plan_writes_artifacts(plan_dirs):
    out = plan_dirs[0]
    for name in ("toolpath.csv", "toolpath.json", "toolpath.gcode", "toolpath.svg", "T_init.ply",
                 "T_opt.ply", "trace.csv", "energy.json", "metrics.json", "scallop_samples.csv",
                 "slit_domain.svg", "config.json", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    cfg_hash = manifest["config_hash"]
    assert len(cfg_hash) == 16
    assert cfg_hash in (out / "T_opt.ply").read_text(errors="ignore")
    assert cfg_hash in (out / "toolpath.gcode").read_text()


def test_plan_is_deterministic(plan_dirs):
    a, b = plan_dirs
    names = sorted(p.name for p in a.iterdir() if p.name != "manifest.json")
    assert names == sorted(p.name for p in b.iterdir() if p.name != "manifest.json")
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_evaluate_matches_plan(plan_dirs, mesh_file, tmp_path):
    out = plan_dirs[0]
    planned = json.loads((out / "metrics.json").read_text())
    for src in ("toolpath.csv", "toolpath.json"):
        report = tmp_path / f"{src}.eval.json"
        assert cli.main(["evaluate", "--mesh", str(mesh_file), "--toolpath", str(out / src),
                         "-o", str(report)]) == 0
        got = json.loads(report.read_text())
        for key in ("length", "smoothness", "CT2", "CT_max", "S_C"):
            assert got[key] == pytest.approx(planned[key], rel=1e-12), key


def test_missing_mesh_exit_2(tmp_path, capsys):
    assert cli.main(["plan", "--mesh", str(tmp_path / "nope.obj"), "-o", str(tmp_path / "o")]) == 2
    assert _error(capsys)["exit_code"] == 2
    assert (tmp_path / "o" / "error.json").exists()


def test_bad_parameters_exit_2(mesh_file, tmp_path, capsys):
    assert cli.main(["plan", "--mesh", str(mesh_file), "--hset", "-1", "-o", str(tmp_path)]) == 2
    assert cli.main(["plan", "--mesh", str(mesh_file), "--C", "1.5", "-o", str(tmp_path)]) == 2
    assert cli.main(["plan", "-o", str(tmp_path)]) == 2


def test_config_file(mesh_file, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(f'mesh = "{mesh_file}"\nbogus_key = 3\n')
    assert cli.main(["plan", "--config", str(bad), "-o", str(tmp_path / "o")]) == 2
    assert "bogus_key" in _error(capsys)["message"]
    broken = tmp_path / "broken.toml"
    broken.write_text("mesh = \n")
    assert cli.main(["plan", "--config", str(broken), "-o", str(tmp_path / "o")]) == 2


def test_flags_override_config(mesh_file, tmp_path):
    cfgfile = tmp_path / "c.toml"
    cfgfile.write_text(f'mesh = "{mesh_file}"\nalpha = 3.0\nh_set = 0.3\n')
    args = cli.build_parser().parse_args(["plan", "--config", str(cfgfile), "--alpha", "7"])
    cfg, _ = cli.resolve_config(args)
    assert cfg.alpha == 7.0 and cfg.h_set == 0.3


def test_infeasible_exit_3(mesh_file, tmp_path, monkeypatch, capsys):
    def boom(cfg, write=True):
        raise InfeasibleError("slit deflection infeasible")

    monkeypatch.setattr(pipeline, "run_plan", boom)
    assert cli.main(["plan", "--mesh", str(mesh_file), "-o", str(tmp_path)]) == 3
    err = _error(capsys)
    assert err["type"] == "InfeasibleError" and err["exit_code"] == 3


def test_internal_error_exit_1(mesh_file, tmp_path, monkeypatch, capsys):
    def boom(cfg, write=True):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(pipeline, "run_plan", boom)
    assert cli.main(["plan", "--mesh", str(mesh_file), "-o", str(tmp_path)]) == 1


def test_evaluate_empty_toolpath(mesh_file, tmp_path, capsys):
    f = tmp_path / "empty.csv"
    f.write_text("x,y,z\n")
    assert cli.main(["evaluate", "--mesh", str(mesh_file), "--toolpath", str(f)]) == 2


def test_compare_needs_two_variants(mesh_file, tmp_path, capsys):
    assert cli.main(["compare", "--mesh", str(mesh_file), *FAST, "--alphas", "10",
                     "-o", str(tmp_path)]) == 2


def test_compare_alpha_rows(mesh_file, tmp_path, capsys):
    assert cli.main(["compare", "--mesh", str(mesh_file), *FAST, "--alphas", "100,1",
                     "-o", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "compare.json").read_text())
    rows = report["variants"]
    assert [r["alpha"] for r in rows] == [100.0, 1.0]
    assert all(r["status"] != "failed" for r in rows)
    assert "trends" in report
    table = capsys.readouterr().out
    assert table.splitlines()[0].startswith("variant\tlength")


def test_config_hash_ignores_output(mesh_file):
    a = PipelineConfig(mesh=str(mesh_file), output="x")
    b = PipelineConfig(mesh=str(mesh_file), output="y")
    c = PipelineConfig(mesh=str(mesh_file), alpha=11.0)
    digest = pipeline.file_digest(mesh_file)
    assert a.config_hash(digest) == b.config_hash(digest) != c.config_hash(digest)
