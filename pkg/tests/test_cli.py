import json

import pytest

from momentcert.cli import main, verify_verdict

from conftest import FIXTURES

EXPECTED = {
    "example_3_6.json": 1,
    "uniform_interval_d4.json": 0,
    "example_2_2_unconstrained.json": 2,
    "example_3_7_interval.json": 1,
    "example_3_8_ball.json": 1,
    "dirac_ball_d4.json": 0,
}


def run(tmp_path, *argv):
    out = tmp_path / "out.json"
    code = main([*argv, "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


@pytest.mark.parametrize("name,code", sorted(EXPECTED.items()))
def test_certify_fixtures(tmp_path, name, code):
    got, out = run(tmp_path, "certify", str(FIXTURES / name))
    assert got == code
    assert out["verdict"] == {0: "representable", 1: "unrepresentable", 2: "undetermined"}[code]
    # a saved verdict re-verifies to itself
    verdict, _ = verify_verdict(out)
    if code == 2:
        assert verdict == "undetermined"
    else:
        assert verdict == out["verdict"]
        assert main(["verify", str(tmp_path / "out.json")]) == code


def test_certificate_is_exact(tmp_path):
    _, out = run(tmp_path, "certify", str(FIXTURES / "example_3_8_ball.json"))
    cert = out["certificate"]
    assert cert["exact"] and cert["D_used"] == 6
    assert all(isinstance(v, str) for v in cert["p"].values())


@pytest.mark.parametrize("name", ["example_3_6_known_certificate.json",
                                  "example_3_8_known_certificate.json"])
def test_verify_known_certificates(name, capsys):
    assert main(["verify", str(FIXTURES / name)]) == 1
    assert "unrepresentable" in capsys.readouterr().out


def test_verify_rejects_tampered_certificate(tmp_path):
    obj = json.loads((FIXTURES / "example_3_8_known_certificate.json").read_text())
    obj["certificate"]["p"]["[0,0]"] = "2"
    f = tmp_path / "bad.json"
    f.write_text(json.dumps(obj))
    assert main(["verify", str(f)]) == 2


def test_verify_rejects_bad_measure(tmp_path):
    obj = {"verdict": "representable",
           "problem": {"n": 1, "d": 4, "y": [1, 0, 0, 0, 1], "g": []},
           "measure": {"atoms": [[1.0], [-1.0]], "weights": [0.5, 0.5]}}
    f = tmp_path / "m.json"
    f.write_text(json.dumps(obj))
    assert main(["verify", str(f)]) == 2


def test_deterministic_up_to_timestamp(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    fx = str(FIXTURES / "uniform_interval_d4.json")
    assert main(["certify", fx, "--out", str(a)]) == main(["certify", fx, "--out", str(b)])
    ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
    ja.pop("timestamp")
    jb.pop("timestamp")
    assert ja == jb


def test_find_certificate_single_degree(tmp_path):
    fx = str(FIXTURES / "example_3_7_interval.json")
    code, out = run(tmp_path, "find-certificate", fx, "--degree", "4")
    assert code == 2
    assert out["diagnostics"]["sdp"][0]["status"] == "Infeasible"
    code, out = run(tmp_path, "find-certificate", fx, "--degree", "5")
    assert code == 1 and out["certificate"]["D_used"] == 5


def test_find_measure(tmp_path):
    code, out = run(tmp_path, "find-measure", str(FIXTURES / "dirac_ball_d4.json"))
    assert code == 0 and len(out["measure"]["atoms"]) == 1
    code, out = run(tmp_path, "find-measure", str(FIXTURES / "example_3_6.json"))
    assert code == 2 and not out["diagnostics"]["prescreen"]["passed"]


def test_no_exact_flag(tmp_path):
    code, out = run(tmp_path, "certify", str(FIXTURES / "example_3_6.json"), "--no-exact")
    assert code == 1 and out["certificate"]["exact"] is False


def test_y_as_map(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"n": 1, "d": 2, "y": {"[0]": 1, "[1]": "1"}, "g": []}))
    code, out = run(tmp_path, "certify", str(f), "--schedule", "2")
    assert code == 1 and out["problem"]["y"] == ["1", "1", "0"]


def test_stats(capsys):
    assert main(["stats", str(FIXTURES / "example_3_8_ball.json")]) == 0
    st = json.loads(capsys.readouterr().out)
    assert (st["N"], st["d_g"], st["delta"], st["tau_y"]) == (28, 2, 7, 9)


@pytest.mark.parametrize("text", [
    "{not json",
    '{"n": 1, "d": 2, "y": [1, 0.5, 0], "g": []}',
    '{"n": 1, "d": 2, "y": [1, 0], "g": []}',
    '{"n": 1, "d": 2, "y": [0, 0, 1], "g": []}',
    '{"n": 1, "d": 2, "y": [1, 0, 1], "g": [{"[0,1]": 1}]}',
    '{"n": 1, "d": 2, "y": [1, 0, 1], "g": [], "options": {"schedule": [4, 2]}}',
    '{"n": 1, "d": 2, "y": ["1", "a/b", 1], "g": []}',
    '[1, 2, 3]',
])
def test_malformed_input_exits_3(tmp_path, text, capsys):
    f = tmp_path / "bad.json"
    f.write_text(text)
    assert main(["certify", str(f)]) == 3
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_3(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["certify"])
    assert exc.value.code == 3
    assert main(["certify", str(tmp_path / "missing.json")]) == 3


def test_float_literal_message(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text('{"n": 1, "d": 2, "y": [1, 1e-3, 0], "g": []}')
    assert main(["certify", str(f)]) == 3
    assert "float literal" in capsys.readouterr().err
