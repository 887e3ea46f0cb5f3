import glob
import os

import pytest

from glwb_ltc import cli
from glwb_ltc.config import KappaSchedule, RunConfig, parse, with_overrides
from glwb_ltc.params import BS_CIR, ConfigError

BS_INI = """
[market]
mode = bs-constant-rate
[numeric]
N = 10
f_A = 10
"""


def test_defaults_are_reference_set():
    cfg = RunConfig()
    c, m = cfg.contract, cfg.market
    assert (c.P, c.beta, c.c, c.pi, c.x0, c.initial_health) == (100.0, 0.003, 0.06, 0.05, 60, 1)
    assert c.g == pytest.approx(0.03) and c.b == pytest.approx(0.035)
    assert (m.sigma_F, m.sigma_r, m.k_r, m.theta, m.r0, m.rho) == (0.2, 0.1, 0.5, 0.05, 0.05, -0.25)
    assert m.mode == BS_CIR
    assert parse("").to_ini() == cfg.to_ini()


def test_parse_sections():
    cfg = parse("[contract]\nalpha_bps = 154.46\nx0 = 70\nkappa = 0.05,0.04\n"
                "[numeric]\nstrategy = dynamic\ngamma_mesh = 0,0.5,1,1.5,2\n[mc]\nseed = 3\n")
    assert cfg.contract.alpha == pytest.approx(0.015446)
    assert cfg.contract.g == pytest.approx(0.04)
    assert cfg.contract.kappa(1) == 0.04 and cfg.contract.kappa(5) == 0.0
    assert cfg.strategy.candidates == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert cfg.mc.seed == 3
    assert KappaSchedule()(3) == pytest.approx(0.05)


@pytest.mark.parametrize("text,field", [
    ("[market]\nsigma_F = -0.2\n", "market.sigma_F"),
    ("[market]\nsigma = 0.2\n", "market.sigma"),
    ("[pricing]\nN = 3\n", "pricing"),
    ("[numeric]\nN = ten\n", "numeric.N"),
    ("[numeric]\nstrategy = greedy\n", "numeric.strategy"),
    ("[contract]\nalpha = 0.01\nalpha_bps = 100\n", "contract.alpha_bps"),
    ("[mc]\npaths = 1\n", "mc.paths"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as err:
        parse(text)
    assert err.value.field == field


def test_overrides():
    cfg = with_overrides(RunConfig(), N=25, f_A=None, strategy="mixed", paths=None, seed=5, output_dir="x")
    assert (cfg.numeric.N, cfg.numeric.f_A, cfg.numeric.strategy, cfg.mc.seed, cfg.output_dir) == \
        (25, 100.0, "mixed", 5, "x")
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(), N=0)


@pytest.fixture
def bs_config(tmp_path):
    p = tmp_path / "bs.ini"
    p.write_text(BS_INI)
    return str(p)


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_negative_volatility_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[market]\nsigma_F = -0.2\n")
    assert _run("price", "--config", p, "--out", tmp_path) == 2
    assert "market.sigma_F" in capsys.readouterr().err


def test_price_table_value(tmp_path, capsys):
    p = tmp_path / "t5.ini"
    p.write_text("[contract]\nalpha_bps = 54.80\n[market]\nmode = bs-constant-rate\n")
    assert _run("price", "--config", p, "--out", tmp_path, "--N", 100, "--fA", 100) == 0
    out = capsys.readouterr().out
    value = float(out.split()[1])
    assert value == pytest.approx(108.11, abs=0.1)


def test_files_are_deterministic_with_provenance(tmp_path, bs_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run("fair-fee", "--config", bs_config, "--out", d, "--no-timings") == 0
    fa, = glob.glob(str(a / "fair-fee-tree-*.csv"))
    fb, = glob.glob(str(b / "fair-fee-tree-*.csv"))
    assert os.path.basename(fa) == os.path.basename(fb)
    ta, tb = open(fa).read(), open(fb).read()
    assert ta.replace(str(a), "") == tb.replace(str(b), "")
    assert ta.startswith("# [contract]\n")
    assert "# mode = bs-constant-rate" in ta
    assert "x0,strategy,engine,fair_alpha_bps" in ta


def test_empty_sweep_is_noop(tmp_path, bs_config):
    assert _run("sweep", "--config", bs_config, "--axis", "rho", "--out", tmp_path) == 0
    assert not glob.glob(str(tmp_path / "*.csv"))


def test_sweep_records_errors(tmp_path, bs_config):
    assert _run("sweep", "--config", bs_config, "--axis", "entry-age", "--values", "60,130",
                "--quantity", "price", "--out", tmp_path) == 0
    path, = glob.glob(str(tmp_path / "sweep-entry-age-*.csv"))
    rows = [ln for ln in open(path) if not ln.startswith("#")]
    assert rows[0].strip() == "entry-age,price,seconds,error"
    assert rows[1].split(",")[-1].strip() == ""
    assert "Error" in rows[2]


def test_mc_cv_rejected_under_cir(tmp_path, capsys):
    assert _run("fair-fee", "--engine", "mc-cv", "--paths", 100, "--out", tmp_path) == 2
    assert "mc-cv" in capsys.readouterr().err


def test_mc_needs_static(tmp_path, bs_config):
    assert _run("price", "--config", bs_config, "--engine", "mc", "--strategy", "dynamic",
                "--out", tmp_path) == 2


def test_mc_price_and_validate(tmp_path, bs_config):
    assert _run("price", "--config", bs_config, "--engine", "mc-cv", "--paths", 2000,
                "--out", tmp_path) == 0
    assert glob.glob(str(tmp_path / "price-mc-cv-*.csv"))
    code = _run("validate-mc", "--config", bs_config, "--paths", 20000, "--seed", 2, "--out", tmp_path)
    assert code in (0, 1)
    path, = glob.glob(str(tmp_path / "validate-mc-*.csv"))
    body = [ln for ln in open(path) if not ln.startswith("#")]
    assert body[0].strip() == "config_id,mean,half_width,n_paths,steps_per_year,seed,seconds"
    assert len(body) == 4


def test_action_map_and_dump(tmp_path, bs_config):
    assert _run("action-map", "--config", bs_config, "--n", "1,8", "--h", "1", "--out", tmp_path) == 0
    path, = glob.glob(str(tmp_path / "action-map-*.csv"))
    lines = [ln for ln in open(path) if not ln.startswith("#")]
    assert lines[0].strip() == "n,h,j,k,A,r,gamma"
    assert {ln.split(",")[0] for ln in lines[1:]} == {"1", "8"}
    assert _run("dump-lattice", "--N", 4, "--out", tmp_path) == 0
    assert glob.glob(str(tmp_path / "rate-lattice-*.csv"))
    assert glob.glob(str(tmp_path / "account-grid-*.csv"))


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        cli.main(["hedge"])


def test_inline_comments():
    cfg = parse("[contract]\nalpha_bps = 150 ; basis points\n[market]\nmode = bs-constant-rate # flat\n")
    assert cfg.contract.alpha == pytest.approx(0.015)
    assert not cfg.market.is_cir
