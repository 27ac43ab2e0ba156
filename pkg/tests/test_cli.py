import csv
import json

import pytest
import yaml

from ncmartingale.cli import (
    BOUND_COLUMNS,
    CHECK_COLUMNS,
    EXACT_COLUMNS,
    MC_COLUMNS,
    ConfigError,
    execute,
    load_config,
    main,
    report_json,
)

SMALL = {
    "gt": {"pairs": 20, "dims": [2, 3]},
    "space_verify": {"samples": 20, "spaces": [[2, 2]]},
    "n_paths": 5000,
    "space": [2, 2, 2, 2],
}


def write_cfg(tmp_path, data):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_lemma_check_exits_zero(tmp_path):
    assert main(["lemma-check", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "checks.csv")
    assert rows[0] == CHECK_COLUMNS
    assert rows[1][0] == "lemma" and rows[1][-1] == "True"


def test_saturated_envelope_exits_three(tmp_path):
    assert main(["bounds", "--envelope", "saturated", "--out", str(tmp_path)]) == 3
    report = json.loads((tmp_path / "report.json").read_text())
    assert {e["error"] for e in report["errors"]} == {"NoFiniteIndex"}
    assert report["schema_version"] == 1


def test_missing_seed_is_config_error(tmp_path, capsys):
    assert main(["mc-run", "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_invalid_parameters_rejected(tmp_path):
    cfg = write_cfg(tmp_path, {"params": {"alpha": -1.0}})
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(ConfigError):
        load_config(None, {"preset": "nope"})
    with pytest.raises(ConfigError):
        load_config(None, {"mode": "bounds", "envelope": {"kind": "explicit-grid"}})


def test_flags_override_file_and_env_sets_out_dir(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, {"mode": "lemma-check", "horizon": 4, "output": {"dir": str(tmp_path / "from-file")}})
    monkeypatch.setenv("NCMART_OUT_DIR", str(tmp_path / "from-env"))
    assert main(["bounds", "--config", cfg, "--horizon", "7"]) == 0
    report = json.loads((tmp_path / "from-env" / "report.json").read_text())
    assert report["config"]["mode"] == "bounds"
    assert report["config"]["horizon"] == 7
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "from-flag")]) == 0
    assert (tmp_path / "from-flag" / "report.json").exists()
    monkeypatch.delenv("NCMART_OUT_DIR")
    assert main(["bounds", "--config", cfg]) == 0
    assert (tmp_path / "from-file" / "report.json").exists()


def test_explicit_grid_envelope(tmp_path):
    ts = [0.0, 0.5, 1.0, 2.0, 4.0]
    import math

    fs = [math.cosh(t) for t in ts]  # Rademacher MGF, below exp(t^2/2)
    cfg = write_cfg(tmp_path, {"envelope": {"kind": "explicit-grid", "t": ts, "f": fs}, "params": {"b": 1.0}})
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "bounds.csv")
    assert rows[0] == BOUND_COLUMNS
    eq32 = [r for r in rows[1:] if r[0] == "eq32"]
    assert float(eq32[0][4]) == pytest.approx(math.exp(-2) * math.cosh(2), rel=1e-6)


def test_space_must_match_step_distribution(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "space": [3, 3]})
    assert main(["nc-verify", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 2


def test_full_pipeline_small_and_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["all", "--config", cfg, "--seed", "42", "--horizon", "10", "--out", str(out)]) == 0
    texts = []
    for out in outs:
        report = json.loads((out / "report.json").read_text())
        report.pop("generated_at")
        texts.append(report_json(report))
    assert texts[0] == texts[1]
    for name in ("bounds.csv", "checks.csv", "mc.csv", "exact.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert read_csv(outs[0] / "mc.csv")[0] == MC_COLUMNS
    assert read_csv(outs[0] / "exact.csv")[0] == EXACT_COLUMNS
    tags = {r[0] for name in ("bounds.csv", "checks.csv") for r in read_csv(outs[0] / name)[1:]}
    assert {"eq32", "eq33", "cor_ncbr", "cor_azuma_nc", "gt", "lemma", "tower"} <= tags
    report = json.loads((outs[0] / "report.json").read_text())
    nc = [b for b in report["bounds"] if b["suite"] == "nc-verify"]
    assert all(row["margin"] >= 0 for b in nc for row in b["rows"])


def test_lemma_grid_size_follows_config():
    cfg = load_config(None, {"mode": "lemma-check", "lemma": {"lam_step": 0.5, "x_step": 1.0, "x_max": 2.0}})
    code, report = execute(cfg)
    assert code == 0 and report["checks"][0]["n"] == 3 * 5
