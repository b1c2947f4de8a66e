import logging
import re

import numpy as np
import pytest
from click.testing import CliRunner

from app.main import cli
from app.services.trace_writer import read_trace_csv


@pytest.fixture
def runner():
    return CliRunner()


def max_mati(output):
    return float(re.search(r"max MATI: ([0-9.]+)", output).group(1))


def test_analyze_round_robin(runner):
    result = runner.invoke(cli, ["analyze", "--protocol", "rr", "--slaves", "2", "--mad", "0", "--kp", "20", "--kd", "20"])
    assert result.exit_code == 0, result.output
    assert max_mati(result.output) == pytest.approx(0.6666, abs=1e-4)
    assert "h_S: 1.33" in result.output
    assert "R_m:" in result.output


def test_analyze_mixed_gains(runner):
    result = runner.invoke(cli, ["analyze", "--slaves", "3", "--kp", "10,20,30"])
    assert result.exit_code == 0, result.output
    assert max_mati(result.output) == pytest.approx(1.0 / 3.0, abs=1e-4)


def test_analyze_tod_large_delay_is_infeasible(runner):
    result = runner.invoke(cli, ["analyze", "--protocol", "tod", "--slaves", "2", "--mad", "0.5"])
    assert result.exit_code == 0, result.output
    assert "max MATI: infeasible" in result.output


@pytest.mark.slow
def test_analyze_tod(runner):
    result = runner.invoke(cli, ["analyze", "--protocol", "tod", "--slaves", "2", "--mad", "0"])
    assert result.exit_code == 0, result.output
    assert max_mati(result.output) == pytest.approx(0.4531, abs=0.02)
    assert "Q:" in result.output


def test_matrix_gains_exit_with_usage_code(runner):
    result = runner.invoke(cli, ["analyze", "--slaves", "2", "--kp", "20/10"])
    assert result.exit_code == 2
    assert "general matrix gains unsupported" in result.output


def test_single_slave_is_a_usage_error(runner):
    result = runner.invoke(cli, ["simulate", "--slaves", "1"])
    assert result.exit_code == 2


def test_bad_gain_list_is_a_usage_error(runner):
    result = runner.invoke(cli, ["analyze", "--slaves", "3", "--kp", "10,20"])
    assert result.exit_code == 2


def test_usage_error_is_not_logged_as_failure(runner, caplog):
    with caplog.at_level(logging.INFO, logger="cli"):
        result = runner.invoke(cli, ["analyze", "--kp", "abc"])
    assert result.exit_code == 2
    assert not [r for r in caplog.records if r.name == "cli" and r.levelno >= logging.ERROR]


def test_coarse_step_is_a_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--step", "0.1", "--out", str(tmp_path / "t.csv")])
    assert result.exit_code == 2


def test_divergence_exits_with_numerical_code(runner, tmp_path):
    result = runner.invoke(
        cli, ["simulate", "--step", "0.014", "--duration", "2", "--out", str(tmp_path / "t.csv")]
    )
    assert result.exit_code == 1


def test_simulate_writes_trace(runner, tmp_path):
    out = tmp_path / "trace.csv"
    args = ["simulate", "--scenario", "free", "--protocol", "rr", "--slaves", "2", "--duration", "1", "--out", str(out)]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    assert f"trace: {out}" in result.output
    assert "mean position error slave 2:" in result.output
    rows = read_trace_csv(out)
    assert rows[0][:3] == ["t", "qm0", "qm1"]
    assert float(rows[-1][0]) == pytest.approx(1.0)

    first = out.read_bytes()
    assert runner.invoke(cli, args).exit_code == 0
    assert out.read_bytes() == first


def test_config_file_supplies_defaults(runner, tmp_path):
    out = tmp_path / "trace.csv"
    config = tmp_path / "run.cfg"
    config.write_text(f"duration=0.5\nslaves=2\nout={out}\ntrace-stride=50\n")
    result = runner.invoke(cli, ["--config", str(config), "simulate", "--protocol", "tod"])
    assert result.exit_code == 0, result.output
    rows = read_trace_csv(out)
    assert float(rows[-1][0]) == pytest.approx(0.5)
    assert len(rows) < 40


def test_unknown_config_key(runner, tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("duration=0.5\nspeed=3\n")
    result = runner.invoke(cli, ["--config", str(config), "simulate"])
    assert result.exit_code == 2
    assert "speed" in result.output


@pytest.mark.slow
@pytest.mark.parametrize("protocol", ["rr", "tod"])
def test_free_motion_synchronises(runner, tmp_path, protocol):
    out = tmp_path / f"{protocol}.csv"
    result = runner.invoke(cli, ["simulate", "--scenario", "free", "--protocol", protocol, "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = read_trace_csv(out)
    header, data = rows[0], np.array(rows[1:], dtype=float)
    tail = data[data[:, 0] >= 18.0]
    speeds = tail[:, [i for i, name in enumerate(header) if name.startswith("dq")]]
    assert np.abs(speeds).max() < 1e-2
    offsets = np.array([[0.1, -0.3], [-0.3, 0.15], [0.2, 0.15]])
    q_m = tail[:, [header.index("qm0"), header.index("qm1")]]
    for i in range(3):
        q_s = tail[:, [header.index(f"qs{i + 1}_0"), header.index(f"qs{i + 1}_1")]]
        assert np.linalg.norm(q_m - (q_s - offsets[i]), axis=1).max() < 1e-2


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "1.0" in result.output
