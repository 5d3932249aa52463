import json

import numpy as np

from dichequiv.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_presets_listing(capsys):
    code, out, _ = run(capsys, "presets")
    assert code == 0 and out.split() == ["Cor175", "Cor176", "C2Corollary", "Ex187", "Ex188", "Ex189"]


def test_check_passes_and_fails(capsys):
    code, out, _ = run(capsys, "check", "--preset", "cor176")
    assert code == 0 and "d7" in out
    code, out, _ = run(capsys, "check", "--preset", "COR175", "--format", "json")
    doc = json.loads(out)
    assert code == 1 and doc["report"]["conditions"]["d7"]["status"] == "violated"


def test_check_rejects_inadmissible_override(capsys):
    code, _, err = run(capsys, "check", "--preset", "cor175", "--override", "gamma=0.9")
    assert code == 2 and "M gamma < 1" in err


def test_bad_config_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    code, _, err = run(capsys, "check", "--file", str(bad))
    assert code == 2 and "ConfigError" in err


def test_config_file_scenario(capsys, tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"variant": "Ex188", "constants": {"a": 0.4}}))
    code, out, _ = run(capsys, "check", "--file", str(cfg), "--horizon", "60")
    assert code == 0


def test_usage_errors(capsys):
    assert run(capsys, "check")[0] == 2
    assert run(capsys, "check", "--preset", "nope")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "check", "--preset", "ex188", "--fp-tol", "-1")[0] == 2


def test_map_identity_without_perturbation(capsys):
    code, out, _ = run(capsys, "map", "--preset", "cor175", "-d", "H", "-k", "0", "-p", "1,0,0",
                       "--override", "f_zero=true")
    assert code == 0
    assert np.allclose([float(x) for x in out.strip().split(",")], [1, 0, 0], atol=0)


def test_map_round_trip(capsys):
    code, out, _ = run(capsys, "map", "--preset", "ex188", "-d", "G", "-k", "2", "-p", "1.5,-2,0.25")
    g = out.strip()
    code2, out2, _ = run(capsys, "map", "--preset", "ex188", "-d", "H", "-k", "2", "-p", g)
    back = np.array([float(x) for x in out2.strip().split(",")])
    assert code == code2 == 0
    assert np.max(np.abs(back - [1.5, -2, 0.25])) <= 10 * 1e-10


def test_map_bad_dimension(capsys):
    code, _, err = run(capsys, "map", "--preset", "ex188", "-d", "H", "-k", "0", "-p", "1,2")
    assert code == 2 and "dimension" in err


def test_map_json(capsys):
    code, out, _ = run(capsys, "map", "--preset", "ex189", "-d", "H", "-k", "1", "-p", "0,0,1",
                       "--format", "json")
    doc = json.loads(out)
    assert code == 0 and len(doc["value"]) == 3 and doc["truncation_bound"] < 1e-10


def test_dif_command(capsys):
    assert run(capsys, "dif", "-s", "1")[1].strip() == "Γ_1·π₁"
    assert run(capsys, "dif", "-s", "2")[1].strip() == "Γ_2·π₁² + Γ_1·π₂"
    code, _, err = run(capsys, "dif", "-s", "7", "-r", "6")
    assert code == 2 and "OrderOverflow" in err
    doc = json.loads(run(capsys, "dif", "-s", "3", "--format", "json")[1])
    assert [t["coefficient"] for t in doc["terms"]] == [1, 3, 1]


def test_verify_smoothness(capsys):
    code, out, _ = run(capsys, "verify", "--preset", "cor176", "--suite", "smoothness",
                       "--samples", "4")
    assert code == 0 and "PASS" in out


def test_verify_sabotage(capsys):
    code, out, _ = run(capsys, "verify", "--preset", "ex188", "--suite", "equivalence",
                       "--samples", "3", "--override", 'sabotage={"engine_f_scale": 1.01}',
                       "--format", "json")
    doc = json.loads(out)
    assert code == 1
    bad = doc["suites"]["equivalence"]["properties"]["conjugacy_H"]
    assert not bad["passed"] and bad["counterexample"]


def test_verify_precondition(capsys):
    code, _, err = run(capsys, "verify", "--preset", "cor175", "--suite", "smoothness")
    assert code == 2 and "d7" in err
    code, _, err = run(capsys, "verify", "--preset", "ex188", "--override", "gamma_scale=3",
                       "--suite", "equivalence")
    assert code == 2 and "d4" in err


def test_out_file(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, printed, _ = run(capsys, "verify", "--preset", "ex189", "--suite", "dif", "--format",
                           "json", "--out", str(out))
    assert code == 0 and printed == ""
    assert json.loads(out.read_text())["passed"] is True
