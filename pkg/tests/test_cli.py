import pytest

from circular_pat import cli, pipeline
from circular_pat.cli import EXIT_FAILED, EXIT_OK, build_parser, main
from circular_pat.exceptions import CommandError
from circular_pat.lock import OutputLock
from circular_pat.selftest import CheckResult


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "experiment.yaml"
    path.write_text("grid.counts: [9, 9, 5]\ngrid.spacing: [0.1, 0.1, 0.1]\naxes.t_step: 0.1\n")
    return path


class TestParser:
    def test_overrides(self):
        args = build_parser().parse_args(["forward", "-s", "geometry.r_det=0.2", "--set", "axes.z.step = 0.1"])
        assert args.overrides == [("geometry.r_det", "0.2"), ("axes.z.step", " 0.1")]

    def test_bad_override(self):
        with pytest.raises(SystemExit) as e:
            build_parser().parse_args(["forward", "-s", "geometry.r_det"])
        assert e.value.code == 2

    def test_invert_requires_data(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["invert"])

    def test_unknown_check(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["selftest", "--check", "nope"])


class TestSelftest:
    def test_passing(self, mocker, capsys):
        run = mocker.patch.object(cli, "run_selftest", return_value=[CheckResult("hilbert", 0.0, 1e-10, 1.0)])
        assert main(["selftest", "--check", "hilbert"]) == EXIT_OK
        run.assert_called_once_with(["hilbert"])
        assert "PASS" in capsys.readouterr().out

    def test_failing(self, mocker, capsys):
        mocker.patch.object(cli, "run_selftest", return_value=[CheckResult("filtration", 1.0, 0.1, 1.0)])
        assert main(["-q", "selftest"]) == EXIT_FAILED
        assert "FAIL" in capsys.readouterr().out


class TestExperimentCommands:
    @pytest.mark.parametrize("command", ["phantom", "forward", "pipeline"])
    def test_dispatch(self, mocker, config_file, tmp_path, command):
        target = mocker.patch.object(cli.pipeline, f"run_{command}")
        out = tmp_path / "results"
        assert main([command, "-c", str(config_file), "-o", str(out), "-s", "geometry.r_det=0.2"]) == EXIT_OK
        config, out_dir = target.call_args.args
        assert out_dir == out and out.is_dir()
        assert config.geometry.r_det == 0.2
        assert config.grid.counts == (9, 9, 5)

    def test_invert(self, mocker, config_file, tmp_path):
        run_invert = mocker.patch.object(cli.pipeline, "run_invert")
        data = tmp_path / "pressure.rvl"
        assert main(["invert", "-c", str(config_file), "-d", str(data), "-o", str(tmp_path)]) == EXIT_OK
        assert run_invert.call_args.args[1:] == (data, tmp_path)

    def test_invalid_config(self, config_file, tmp_path):
        assert main(["phantom", "-c", str(config_file), "-o", str(tmp_path), "-s", "geometry.r_det=-1"]) == EXIT_FAILED

    def test_geometry_mismatch(self, mocker, tiny_config, synthetic_sinogram, out_dir, config_file):
        mocker.patch.object(cli.pipeline, "simulate", return_value=synthetic_sinogram)
        cli.pipeline.run_forward(tiny_config, out_dir)
        data = out_dir / cli.pipeline.PRESSURE_FILE
        args = ["invert", "-c", str(config_file), "-d", str(data), "-o", str(out_dir), "-s", "geometry.r_det=0.3"]
        assert main(args) == EXIT_FAILED

    def test_command_error_exit_code(self, mocker, config_file, tmp_path):
        mocker.patch.object(cli.pipeline, "run_phantom", side_effect=CommandError("busy", exit_code=3))
        assert main(["phantom", "-c", str(config_file), "-o", str(tmp_path)]) == 3


DETERMINISTIC_CONFIG = """\
grid.counts: [9, 9, 5]
grid.spacing: [0.1, 0.1, 0.1]
phantom.blobs: [{center: [0.05, 0.0, 0.0], sigma: 0.08}]
axes.n_theta: 4
axes.z: {start: -0.3, stop: 0.3, step: 0.1}
axes.t_step: 0.1
axes.t_max: 2.0
quadrature.n_alpha: 16
quadrature.cap_polar: 6
quadrature.cap_azimuth: 12
noise.sigma: 0.01
noise.seed: 7
"""


def test_repeated_runs_write_identical_files(tmp_path):
    config = tmp_path / "experiment.yaml"
    config.write_text(DETERMINISTIC_CONFIG)
    runs = [tmp_path / "first", tmp_path / "second"]
    for out in runs:
        for command in ("phantom", "forward"):
            assert main(["-q", command, "-c", str(config), "-o", str(out)]) == EXIT_OK

    # metrics carry wall times
    skipped = {pipeline.METRICS_FILE, OutputLock.LOCK_FILE}
    names = sorted(p.name for p in runs[0].iterdir() if p.name not in skipped)
    assert {pipeline.PHANTOM_FILE, pipeline.SINOGRAM_FILE, pipeline.PRESSURE_FILE} <= set(names)
    assert names == sorted(p.name for p in runs[1].iterdir() if p.name not in skipped)
    for name in names:
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name
