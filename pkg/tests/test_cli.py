import json
import subprocess
import sys

import pytest

from foerster.cli import main
from foerster.io import read_csv
from foerster.scenarios import CERTIFY_SCHEMA, FIG2_SCHEMA, GATE_SCHEMA, SMFIG1_SCHEMA


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


FIG2 = 'scenario = "fig2"\nseed = 0\n[grid]\nV_over_Omega = [0.01, 0.05]\nfig2_V_MHz = [1.0]\n'
CERT = 'scenario = "certify"\nseed = 2\n[certify]\nn_samples = 2000\ns_values = [0.5]\noracle_starts = 2\n'


def test_gate_schema_contract():
    assert ",".join(GATE_SCHEMA) == (
        "scenario,protocol,model_opt,model_eval,V_over_2pi_MHz,Omega_over_2pi_MHz,F_coh,F_total,eta,T_R_us"
    )


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("fig1d", "fig2", "fig3", "smfig1", "smfig2", "certify"):
        assert name in out


def test_fig2_run_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", write(tmp_path, FIG2), "--out", str(out)]) == 0
    header, rows = read_csv(out / "fig2.csv")
    assert header == list(FIG2_SCHEMA)
    row = [r for r in rows if r["V_over_Omega"] == 0.05][0]
    assert row["eta"] == pytest.approx(1.88496, abs=5e-3)
    assert (out / "fig2.svg").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["scenario"] == "fig2" and "config_hash" in manifest
    assert "fig2.csv" in manifest["outputs"]


def test_no_plots_flag(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", write(tmp_path, FIG2), "--out", str(out), "--no-plots"]) == 0
    assert not list(out.glob("*.svg"))
    assert (out / "fig2.csv").exists()


def test_parallel_and_serial_csv_identical(tmp_path):
    cfg = write(tmp_path, FIG2)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--no-plots"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--no-plots", "--threads", "2"])
    assert (tmp_path / "a" / "fig2.csv").read_bytes() == (tmp_path / "b" / "fig2.csv").read_bytes()


def test_smfig1_anchor(tmp_path):
    cfg = write(tmp_path, 'scenario = "smfig1"\n[grid]\nV_MHz = [1.0, 2.88, 10.0]\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--no-plots"]) == 0
    header, rows = read_csv(tmp_path / "o" / "smfig1.csv")
    assert header == list(SMFIG1_SCHEMA)
    anchor = {r["rank"]: r["F_max"] for r in rows if r["V_over_2pi_MHz"] == 2.88}
    assert anchor[2] == pytest.approx(0.999421, abs=1e-6)
    assert anchor[1] == pytest.approx(0.999053, abs=1e-6)


def test_certify_deterministic(tmp_path):
    cfg = write(tmp_path, CERT)
    assert main(["certify", "--config", cfg, "--out", str(tmp_path / "a"), "--no-plots"]) == 0
    assert main(["certify", "--config", cfg, "--out", str(tmp_path / "b"), "--no-plots"]) == 0
    a = (tmp_path / "a" / "certify.csv").read_bytes()
    assert a == (tmp_path / "b" / "certify.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a" / "certify.csv")
    assert header == list(CERTIFY_SCHEMA)
    assert all(r["passed"] == "true" for r in rows)


def test_certify_requires_seed(tmp_path, capsys):
    assert main(["certify", "--out", str(tmp_path)]) == 1
    assert "seed" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, 'scenario = "fig2"\n[grid]\nV_over_Omega = []\n')
    assert main(["run", "--config", cfg]) == 1
    assert "cfg.toml:3" in capsys.readouterr().err


def test_unwritable_output_is_runtime_error(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    assert main(["run", "--config", write(tmp_path, FIG2), "--out", str(blocker / "x")]) == 2


def test_corrupt_csv_plot_isolated(tmp_path, monkeypatch):
    import foerster.scenarios as sc
    from foerster.io import PlotSpec

    monkeypatch.setattr(sc, "plot_specs", lambda result: [("bad.svg", PlotSpec("nope", "eta"))])
    out = tmp_path / "o"
    assert main(["run", "--config", write(tmp_path, FIG2), "--out", str(out)]) == 0
    assert (out / "fig2.csv").exists() and not (out / "bad.svg").exists()


def test_dump_waveform(tmp_path, capsys):
    assert main(["dump-waveform", "to", "--params", "0,1,1,0", "--samples", "5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "t_us,Omega_A,phi_A,Delta_A,Omega_B,phi_B,Delta_B" and len(lines) == 6
    assert main(["dump-waveform", "arp", "--params", "1.0"]) == 1
    path = tmp_path / "w.csv"
    assert main(["dump-waveform", "rank_two", "--out", str(path)]) == 0
    header, rows = read_csv(path)
    assert len(rows) == 2000


def test_dump_trajectory(tmp_path):
    path = tmp_path / "t.csv"
    assert main(["dump-waveform", "pi2pi", "--trajectory", "two", "--V-mhz", "50", "--samples", "100",
                 "--out", str(path)]) == 0
    header, rows = read_csv(path)
    assert header[:2] == ["t_us", "P_r"] and len(header) == 18
    assert rows[0]["pop_g1_g1"] == pytest.approx(1.0)


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "foerster.cli", "list-scenarios"], capture_output=True, text=True)
    assert res.returncode == 0 and "certify" in res.stdout
