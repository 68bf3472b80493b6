"""Scenario parsing, execution and the command line."""

import pytest

from senderkeys import cli, crypto
from senderkeys.cli import ScenarioError, parse_scenario, run_scenario

import oracles


def run_cli(*argv, capsys=None):
    code = cli.main(list(argv))
    out = capsys.readouterr() if capsys else None
    return code, out


def test_bundled_scenarios_listed():
    names = cli.bundled_scenarios()
    assert {"fig1.scn", "attack_q1_q4.scn", "empty.scn"} <= set(names)


def test_empty_scenario_empty_report(capsys):
    code, out = run_cli("run", "empty", capsys=capsys)
    assert code == 0 and out.out == ""


def test_fig1_trace(capsys):
    code, out = run_cli("run", "fig1", capsys=capsys)
    assert code == 0
    text = out.out
    assert "A derive mk[A#0]" in text and "B derive mk[A#0]" in text
    assert "A ratchet ck[A] 1 -> 2" in text and "B ratchet ck[B] 0 -> 1" in text
    assert "erase mk[B#0]" in text


@pytest.mark.parametrize("variant,banner,code", [
    ("baseline", "FORGERY ACCEPTED", 0),
    ("sig-ratchet", "FORGERY REJECTED", 1),
])
def test_attack_scenario(capsys, variant, banner, code):
    got, out = run_cli("run", "attack_q1_q4", "--variant", variant, capsys=capsys)
    assert banner in out.out
    assert got == code


def test_attack_scenario_expect_reject_on_sig_ratchet(capsys):
    code, _ = run_cli("run", "attack_q1_q4", "--variant", "sig-ratchet", "--expect", "reject", capsys=capsys)
    assert code == 0


def test_metadata_attack_scenario(capsys):
    code, out = run_cli("run", "attack_metadata", capsys=capsys)
    assert code == 0 and "FORGERY ACCEPTED" in out.out


def test_dirty_expectation(capsys):
    code, out = run_cli("run", "exposed_challenge", capsys=capsys)
    assert code == 0 and "outcome: dirty" in out.out


def test_removal_scenario_is_clean(capsys):
    code, out = run_cli("run", "removal", capsys=capsys)
    assert code == 0
    assert "* baseline: clean" in out.out
    assert "outcome: dirty" not in out.out


def test_out_of_order_scenario(capsys):
    code, out = run_cli("run", "out_of_order", capsys=capsys)
    assert code == 0
    assert out.out.count("outcome=accepted") == 6
    assert "outcome=skipped-key-missing" in out.out


def test_reports_reproducible(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert cli.main(["run", "removal", "--report", str(a)]) == 0
    assert cli.main(["run", "removal", "--report", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_flag_and_environment(tmp_path, monkeypatch):
    paths = {}
    for name, argv in (("env", []), ("flag", ["--seed", "99"])):
        monkeypatch.setenv(cli.SEED_ENV, "99" if name == "env" else "1")
        paths[name] = tmp_path / name
        cli.main(["run", "fig1", "--report", str(paths[name]), *argv])
    assert paths["env"].read_text() == paths["flag"].read_text()
    assert "seed: 99" in paths["env"].read_text()


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("roster = A B\n\nsetup\nsend A zz\n")
    code, out = run_cli("run", str(bad), capsys=capsys)
    assert code == 2 and "line 4" in out.err


def test_missing_file_exit_code(capsys):
    code, _ = run_cli("run", "no-such-scenario", capsys=capsys)
    assert code == 2


@pytest.mark.parametrize("text,line", [
    ("roster = A\nfly A\n", 2),
    ("roster = A\nsend B 00\n", 2),
    ("variant = nope\n", 1),
    ("roster = A B\nsetup\n\nexpmk A -1\n", 4),
    ("roster = A\nfinalize 2\n", 2),
    ("roster = A\ndeliver A soon\n", 2),
    ("colour = blue\n", 1),
    ("setup\n", 1),
    ("roster = A\nsend A\n", 2),
])
def test_parse_errors_are_line_numbered(text, line):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.line == line


def test_comments_and_headers():
    sc = parse_scenario("# hi\nvariant = sig-ratchet  # inline\nroster = X Y\nkeys = manual\n\nsetup\n")
    assert sc.variant == "sig-ratchet" and sc.roster == ["X", "Y"] and not sc.auto_keys
    assert [c.name for c in sc.commands] == ["setup"]


def test_runtime_errors_are_recorded_not_fatal():
    sc = parse_scenario("roster = A B\nsetup\nremove A A\nsend A 00\n")
    result = run_scenario(sc)
    assert "error cmd=remove line=3" in result.report
    assert "send A index=0" in result.report


def test_receive_command_with_raw_frame():
    sc = parse_scenario("roster = A B\nsetup\nreceive B A 00ff\n")
    assert "outcome=malformed-frame" in run_scenario(sc).report


def test_rng_command_pins_keys():
    sc = parse_scenario("roster = A B\nrng A 01\nsetup\n")
    result = run_scenario(sc)
    from senderkeys.game import predict_sender_key
    assert result.game.users["A"].own_sender_key == predict_sender_key(b"\x01")


def test_gen_vectors(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert cli.main(["gen-vectors", str(a)]) == 0
    cli.main(["gen-vectors", str(b)])
    assert a.read_bytes() == b.read_bytes() and a.stat().st_size > 0
    for line in a.read_text().splitlines():
        name, key, _, _, *out = line.split()
        if name == "kdf_mk":
            assert oracles.hmac_sha256(bytes.fromhex(key), b"\x01").hex() == out[0]
