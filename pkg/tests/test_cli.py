import json
import subprocess
import sys
from pathlib import Path

import pytest

from halpern_rates import cli

FAST_VERIFY = """
[verify]
horizon = 20000
oracle_instances = 5
oracle_horizon = 2000
nonexpansive_trials = 100
"""

ROT = """
[operator]
kind = "rotation"
dim = 2
planes = [[0, 1, 90.0]]
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(cmd, cfg, out, *extra):
    args = [cmd, "--out", str(out), "--quiet", *extra]
    if cfg is not None:
        args += ["--config", cfg]
    return cli.main(args)


def load(out, name):
    return json.loads((Path(out) / f"{name}.json").read_text())


def test_certify_harmonic(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n[bounds]\nd_C = 1\n[run]\neps = [1.0, 2.0]\n')
    assert run("certify", cfg, tmp_path / "o") == 0
    rep = load(tmp_path / "o", "certify")
    assert set(rep) >= {"tool_version", "config_digest", "results"}
    good, bad = rep["results"]
    assert good["psi_decreasing"]["value"] == str(4 ** 30)
    assert good["phi_harmonic"]["value"] == str(4 ** 51)
    assert good["phi_harmonic"]["log10"] == pytest.approx(30.7, abs=0.01)
    assert "error" in bad and bad["eps"] == 2.0


def test_certify_missing_theta(tmp_path, capsys):
    cfg = write(tmp_path, '[schedule]\nkind = "custom"\nlambda = "1/n"\ndecreasing = true\n'
                          '[schedule.moduli]\nalpha = "ceil(1/eps) + 1"\n[bounds]\nM = 3\n')
    assert run("certify", cfg, tmp_path / "o") == 1
    assert "schedule.moduli.theta" in capsys.readouterr().err


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n[run]\nhorizn = 5\n')
    assert run("certify", cfg, tmp_path / "o") == 1
    assert "run.horizn" in capsys.readouterr().err


def test_simulate_identity(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n[operator]\nkind = "identity"\ndim = 2\n'
                          '[run]\nanchor = [0.6, 0.8]\nhorizon = 100\neps = [0.5, 0.01]\n')
    assert run("simulate", cfg, tmp_path / "o") == 0
    rep = load(tmp_path / "o", "simulate")
    assert [r["first_crossing"] for r in rep["results"]] == [0, 0]
    assert rep["inequality_check"]["passed"]
    lines = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "n,lambda_n,residual,step_gap,norm_x" and len(lines) == 102


def test_simulate_rotation_harmonic(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n' + ROT +
                '[run]\nanchor = [1.0, 0.0]\nhorizon = 100000\neps = [0.5, 0.1, 0.01]\n'
                '[output]\nformats = ["json"]\n')
    assert run("simulate", cfg, tmp_path / "o") == 0
    rep = load(tmp_path / "o", "simulate")
    assert all(r["first_crossing"] is not None for r in rep["results"])
    assert rep["M"] == 3 and rep["M_source"] == "invariant_ball"


def test_simulate_rejects_eps_3(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n' + ROT +
                '[run]\nanchor = [1.0, 0.0]\neps = [3.0]\n')
    assert run("simulate", cfg, tmp_path / "o") == 1


def test_anchor_dimension_checked(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n' + ROT + '[run]\nanchor = [1.0]\n')
    assert run("simulate", cfg, tmp_path / "o") == 1


def test_compare_identity_sound(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "inverse_sqrt"\n[operator]\nkind = "identity"\ndim = 2\n'
                          '[run]\nanchor = [1.0, 0.0]\nhorizon = 300000\neps = [1.5, 1.0, 0.5]\n')
    assert run("compare", cfg, tmp_path / "o") == 0
    rep = load(tmp_path / "o", "compare")
    # eps = 0.5 certifies an index past the horizon, which stays UNTESTABLE even with r_n = 0
    assert [r["verdict"] for r in rep["results"]] == ["SOUND", "SOUND", "UNTESTABLE"]
    assert all(r["first_crossing"] == 0 for r in rep["results"])


def test_compare_harmonic_untestable(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n' + ROT +
                '[run]\nanchor = [1.0, 0.0]\nhorizon = 10000\neps = [0.25]\n')
    assert run("compare", cfg, tmp_path / "o") == 0
    r = load(tmp_path / "o", "compare")["results"][0]
    assert r["verdict"] == "UNTESTABLE"
    assert r["first_crossing"] is not None


def test_compare_flags_false_bound(tmp_path):
    # a lying theta makes the certified index tiny while residuals are still large
    cfg = write(tmp_path, '[schedule]\nkind = "custom"\nlambda = "1/n"\ndecreasing = true\n'
                          '[schedule.moduli]\nalpha = "1"\ntheta = "1"\n' + ROT +
                '[run]\nanchor = [1.0, 0.0]\nhorizon = 1000\neps = [0.1]\n')
    assert run("compare", cfg, tmp_path / "o") == 2
    assert load(tmp_path / "o", "compare")["results"][0]["verdict"] == "VIOLATION"


def test_outputs_are_deterministic(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "inverse_sqrt"\n' + ROT +
                '[run]\nanchor = [1.0, 0.0]\nhorizon = 5000\neps = [0.5]\nseed = 4\n')
    for out in ("a", "b"):
        assert run("simulate", cfg, tmp_path / out) == 0
        assert run("compare", cfg, tmp_path / out) == 0
    for name in ("trajectory.csv", "simulate.json", "compare.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_digest(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n[bounds]\nM = 1\n')
    run("certify", cfg, tmp_path / "a", "--seed", "1")
    run("certify", cfg, tmp_path / "b", "--seed", "2")
    assert load(tmp_path / "a", "certify")["config_digest"] != load(tmp_path / "b", "certify")["config_digest"]


def test_verify_passes_on_builtins(tmp_path):
    cfg = write(tmp_path, FAST_VERIFY)
    assert run("verify", cfg, tmp_path / "o") == 0
    assert load(tmp_path / "o", "verify")["passed"]


def test_verify_surfaces_false_theta(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "constant"\nc = 0.5\n[schedule.moduli]\ntheta = "n"\n'
                + FAST_VERIFY)
    assert run("verify", cfg, tmp_path / "o") == 2
    rep = load(tmp_path / "o", "verify")
    bad = [r for r in rep["results"] if not r["passed"]]
    assert len(bad) == 1
    fail = [c for c in bad[0]["checks"] if not c["passed"]][0]
    assert fail["name"] == "rate_of_divergence" and fail["first_failure_n"] == 1


def test_shipped_configs_parse():
    from halpern_rates.config import load_config
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.toml")):
        load_config(path)


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, '[schedule]\nkind = "harmonic"\n[bounds]\nM = 3\n[run]\neps = [1.0]\n')
    proc = subprocess.run([sys.executable, "-m", "halpern_rates", "certify", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "psi_decreasing" in proc.stdout
