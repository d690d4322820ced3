import hashlib
import subprocess
import sys
from pathlib import Path

import pytest

from dpsgd_lab import __version__
from dpsgd_lab.cli import main
from dpsgd_lab.config import ConfigError, parse_config, parse_sweep_spec

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"

MINIMAL = 'loss = "least_squares"\nregime = "smooth_general"\nn = 40\nd = 3\n'


def violations(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    return info.value.violations


# config ----------------------------------------------------------------------

def test_delta_out_of_range():
    assert "delta must lie in (0,1)" in violations(MINIMAL + "delta = 1.5\n")


def test_alpha_one_under_holder():
    errs = violations('loss = "hinge"\nregime = "holder_general"\nn = 10\nalpha = 1.0\n')
    assert any("alpha must lie in [0,1)" in e for e in errs)


def test_all_violations_reported():
    errs = violations(MINIMAL + "delta = 2.0\nepsilon = -1\nfoo = 1\n")
    assert len(errs) == 3
    assert "unknown key 'foo'" in errs


def test_syntax_error_has_line_number():
    errs = violations('loss = "least_squares"\nn = = 3\n')
    assert "line 2" in errs[0]


def test_round_trip_is_stable():
    cfg = parse_config(MINIMAL + "seed = 4\nsigma2-override = 0.0\n")
    text = cfg.to_toml()
    assert parse_config(text) == cfg
    assert parse_config(text).to_toml() == text


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("train_*.toml")), ids=lambda p: p.name)
def test_shipped_train_configs_parse(path):
    cfg = parse_config(path.read_text())
    assert parse_config(cfg.to_toml()) == cfg


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("sweep_*.toml")), ids=lambda p: p.name)
def test_shipped_sweep_specs_parse(path):
    assert parse_sweep_spec(path.read_text()).mc_runs >= 20


def test_sweep_spec_violations():
    with pytest.raises(ConfigError) as info:
        parse_sweep_spec('problem = "realizable_least_squares"\nregime = "smooth_general"\n'
                         'n_values = [8, 16]\nmc_runs = 3\n')
    assert len(info.value.violations) == 2


# cli -------------------------------------------------------------------------

def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def train_cfg(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(MINIMAL + "epsilon = 8.0\nsigma2-override = 0.5\nseed = 2\n")
    return str(p)


def test_version():
    out = subprocess.run([sys.executable, "-m", "dpsgd_lab.cli", "--version"],
                         capture_output=True, text=True, check=True).stdout
    assert out.strip() == f"dpsgd-lab {__version__}"


def test_calibrate_table(capsys):
    code, out, _ = cli(capsys, "calibrate", "--n", "100", "--epsilon", "1", "--delta", "0.01",
                       "--beta", "0.5")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header == "beta,lambda,sigma2,feasible,eps_achieved"
    assert row.split(",")[3] == "false"


def test_calibrate_best_infeasible_exits_3(capsys):
    code, _, _ = cli(capsys, "calibrate", "--n", "20", "--epsilon", "1e-6", "--delta", "0.01", "--best")
    assert code == 3


def test_min_eps(capsys):
    code, out, _ = cli(capsys, "min-eps", "--n", "10000")
    assert code == 0 and out.splitlines()[1].startswith("10000,0.8969")


def test_config_error_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL + "delta = 1.5\n")
    code, _, err = cli(capsys, "train", str(bad))
    assert code == 2 and "delta must lie in (0,1)" in err
    assert cli(capsys, "train", str(tmp_path / "missing.toml"))[0] == 2


def test_privacy_infeasible_exits_3(capsys, tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(MINIMAL + "epsilon = 0.5\n")
    assert cli(capsys, "train", str(p))[0] == 3


def test_selftest_exit_codes(capsys):
    code, out, _ = cli(capsys, "selftest")
    assert code == 0 and out.count("PASS") == 7
    code, out, _ = cli(capsys, "selftest", "--corrupt-L")
    assert code == 4 and "FAIL self-bounding probes" in out


@pytest.mark.parametrize("argv", [
    ("train", "{cfg}"),
    ("stability", "{cfg}", "--mc-runs", "10", "--indices", "3"),
    ("gap", "{cfg}", "--mc-runs", "10"),
    ("bounds", "{cfg}", "--mc-runs", "3"),
    ("calibrate", "--n", "500", "--epsilon", "4", "--delta", "1e-5"),
], ids=lambda a: a[0])
def test_subcommands_are_deterministic(capsys, train_cfg, argv):
    argv = [a.format(cfg=train_cfg) for a in argv]
    first = cli(capsys, *argv)
    second = cli(capsys, *argv)
    assert first[0] == 0
    assert hashlib.md5(first[1].encode()).digest() == hashlib.md5(second[1].encode()).digest()


def test_seed_flag_changes_output(capsys, train_cfg):
    a = cli(capsys, "train", train_cfg)[1]
    b = cli(capsys, "train", train_cfg, "--seed", "99")[1]
    assert a != b


def test_sweep_dry_run(capsys, tmp_path):
    spec = tmp_path / "s.toml"
    spec.write_text('problem = "realizable_least_squares"\nregime = "smooth_lownoise"\n'
                    'n_values = [512, 1024, 2048, 4096]\nmc_runs = 20\n')
    code, out, _ = cli(capsys, "sweep", "--spec", str(spec), "--dry-run")
    assert code == 0
    assert out.splitlines()[0] == "n,epsilon,beta,sigma2,eta,T" and len(out.splitlines()) == 5
