import json
import subprocess
import sys

import numpy as np
import pytest

from flowembed import cli, field as fld, render, spectral
from flowembed.errors import StageError


def report(out):
    return json.loads((out / "report.txt").read_text())


def test_parse_basic():
    cfg = cli.parse_config("--field center --dims 64x64 --kernel box --half-length 20 -k 6".split())
    assert cfg.field == "center" and cfg.dims == (64, 64)
    assert cfg.kernel == "box" and cfg.half_length == 20 and cfg.k == 6


def test_missing_dims():
    with pytest.raises(cli.UsageError, match="--dims"):
        cli.parse_config(["--field", "center"])


def test_contradictions_listed():
    with pytest.raises(cli.UsageError) as err:
        cli.parse_config(["--field", "center", "--field-file", "x.ffld", "-k", "0"])
    msg = str(err.value)
    assert "mutually exclusive" in msg and "-k" in msg


def test_file_then_flag_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"field": "center", "dims": "32x32", "half_length": 10}))
    cfg = cli.parse_config(["--config", str(path), "--half-length", "50"])
    assert cfg.half_length == 50 and cfg.dims == (32, 32)
    assert cfg.to_dict()["half_length"] == 50


def test_unknown_file_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"field": "center", "dims": [8, 8], "colour": "red"}))
    with pytest.raises(cli.UsageError, match="colour"):
        cli.parse_config(["--config", str(path)])


def test_field_args_and_norm():
    cfg = cli.parse_config(["--field", "constant", "--dims", "8x8", "--field-arg", "value=1,0.5",
                            "--norm-p", "2"])
    assert cfg.field_args == {"value": (1.0, 0.5)} and cfg.norm_p == 2.0


def test_center_flow_run(tmp_path):
    out = tmp_path / "run"
    cfg = cli.parse_config(["--field", "center", "--dims", "64x64", "--kernel", "box",
                            "--half-length", "20", "-k", "6", "--out", str(out)])
    cli.run_pipeline(cfg)
    rep = report(out)
    ev = rep["eigenvalues"]
    assert len(ev) == 6 and ev == sorted(ev) and ev[0] <= 1e-8
    assert max(rep["residuals"]) <= 1e-8
    for key in ("time.assemble", "time.mixture", "time.eigen", "P.nnz", "H.nnz", "L.nnz"):
        assert key in rep
    assert rep["config.seed"] == 0 and rep["status"] == "ok"
    for name in rep["artifacts"]:
        assert (out / name).exists()
    dims, values, _, vecs = spectral.load_embeddings(out / "embeddings.emb")
    assert dims == (64, 64) and np.array_equal(values, ev)


def test_zero_field_run(tmp_path):
    out = tmp_path / "z"
    cfg = cli.parse_config(["--field", "zero", "--dims", "12x10", "--out", str(out), "-k", "3"])
    rep = cli.run_pipeline(cfg)
    assert any("disconnected domain" in w for w in rep["warnings"])
    noise = render.binary_noise(fld.default_domain("zero", (12, 10)), 0)
    lic = render.read_image(out / "lic.pgm")
    assert np.array_equal(lic, np.round(noise.samples * 255).astype(np.uint8))


def test_lic_only_skips_spectral(tmp_path):
    out = tmp_path / "l"
    cfg = cli.parse_config(["--field", "saddle", "--dims", "16x16", "--stages", "lic_only",
                            "--out", str(out)])
    rep = cli.run_pipeline(cfg)
    assert "time.lic" in rep and "time.mixture" not in rep
    assert not (out / "embeddings.emb").exists()


def test_three_d_volume_run(tmp_path):
    out = tmp_path / "v"
    cfg = cli.parse_config(["--field", "abc", "--dims", "8x8x8", "--half-length", "4", "-k", "3",
                            "--stages", "volume", "--out", str(out)])
    rep = cli.run_pipeline(cfg)
    assert "segments.vol" in rep["artifacts"] and "composite_midz.ppm" in rep["artifacts"]
    assert render.read_volume(out / "composite.vol").shape == (8, 8, 8, 3)


def test_replay_is_bit_identical(tmp_path):
    a = tmp_path / "a"
    cli.run_pipeline(cli.parse_config(["--field", "stuart_vortex", "--dims", "24x16", "-k", "4",
                                       "--seed", "5", "--stages", "volume", "--out", str(a)]))
    b = tmp_path / "b"
    cli.run_pipeline(cli.parse_config(["--config", str(a / "report.txt"), "--out", str(b)]))
    names = report(a)["artifacts"]
    assert names == report(b)["artifacts"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_field_file_run(tmp_path):
    dom = fld.Domain((10, 8))
    f = fld.grid_field(dom, [(-y + 3.5, x - 4.5) for x, y in dom.cell_centers()])
    path = tmp_path / "f.ffld"
    fld.save_grid_field(f, path)
    out = tmp_path / "o"
    rep = cli.run_pipeline(cli.parse_config(["--field-file", str(path), "-k", "3",
                                             "--half-length", "5", "--out", str(out)]))
    assert rep["cells"] == 80 and rep["domain.dims"] == [10, 8]


def test_stage_error_keeps_partial(tmp_path):
    out = tmp_path / "e"
    cfg = cli.parse_config(["--field", "center", "--dims", "24x24", "--half-length", "8",
                            "-k", "6", "--max-iter", "1", "--out", str(out)])
    with pytest.raises(StageError) as err:
        cli.run_pipeline(cfg)
    assert err.value.stage == "eigen"
    rep = report(out)
    assert rep["status"] == "failed" and rep["failed_stage"] == "eigen"
    assert (out / "lic.pgm").exists()


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["--field", "center"]) == 2
    assert "--dims" in capsys.readouterr().err
    assert cli.main(["--field", "saddle", "--dims", "8x8", "-k", "2", "--out",
                     str(tmp_path / "m")]) == 0


def test_threads_env(tmp_path):
    out = tmp_path / "t"
    env = {"FLOWEMBED_THREADS": "2", "PATH": "/usr/bin:/bin"}
    subprocess.run([sys.executable, "-m", "flowembed.cli", "--field", "center", "--dims", "12x12",
                    "-k", "3", "--stages", "embeddings", "--out", str(out)],
                   check=True, env=env, capture_output=True)
    assert report(out)["threads"] == 2
