import os

import pytest

from viscostring.cli import main
import viscostring.forward
import viscostring.kernels
import viscostring.verification as verification


CFG = """
kernel = exp:1.0
L = 1.0
T_max = 0.25
dt = 0.0078125
n_basis = 12
q = const:1
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CFG)
    return str(p)


def test_synthesize_connect_identify_happy_path(tmp_path, cfg_path, capsys):
    bundle = str(tmp_path / "bundle")
    assert main(["synthesize", "--config", cfg_path, "--out", bundle]) == 0
    for name in ("manifest.txt", "kernel.csv", "basis.csv", "response.csv", "q_true.csv"):
        assert os.path.isfile(os.path.join(bundle, name))

    out = str(tmp_path / "run")
    assert main(["connect", bundle, "--out", out]) == 0
    assert os.path.isfile(os.path.join(out, "gram.csv"))

    assert main(["identify", bundle, "--config", cfg_path, "--out", out]) == 0
    assert os.path.isfile(os.path.join(out, "results.csv"))
    report = open(os.path.join(out, "report.txt")).read()
    assert "rel_l2_error=" in report


def test_identify_without_q_true_omits_error_norms(tmp_path, cfg_path):
    bundle = str(tmp_path / "bundle")
    main(["synthesize", "--config", cfg_path, "--out", bundle])
    os.remove(os.path.join(bundle, "q_true.csv"))
    out = str(tmp_path / "run")
    assert main(["identify", bundle, "--config", cfg_path, "--out", out]) == 0
    report = open(os.path.join(out, "report.txt")).read()
    assert "error" not in report or "omitted" in report


def test_corrupted_manifest_exit_code_4(tmp_path, cfg_path):
    bundle = str(tmp_path / "bundle")
    main(["synthesize", "--config", cfg_path, "--out", bundle])
    with open(os.path.join(bundle, "manifest.txt"), "a") as fh:
        fh.write("garbage_key=1\n")
    assert main(["identify", bundle, "--config", cfg_path]) == 4


def test_config_error_exit_code_2(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("kernel = const\nT_max = 0.6\nL = 1.0\ndt = 0.01\n")
    assert main(["synthesize", "--config", str(bad)]) == 2
    missing = str(tmp_path / "nope.cfg")
    assert main(["synthesize", "--config", missing]) == 2


def test_forward_and_resolvent_dumps(tmp_path, cfg_path):
    out = str(tmp_path / "fw")
    assert main(["forward", "--config", cfg_path, "--out", out]) == 0
    assert os.path.isfile(os.path.join(out, "field.csv"))
    assert os.path.isfile(os.path.join(out, "boundary.csv"))
    out2 = str(tmp_path / "kr")
    assert main(["resolvent", "--config", cfg_path, "--out", out2]) == 0
    text = open(os.path.join(out2, "resolvent.txt")).read()
    assert "gamma=-0.5" in text


def test_verify_filter_runs_single_criterion(tmp_path, capsys):
    assert main(["verify", "--filter", "resolvent", "--out", str(tmp_path)]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l and not l.startswith("#")]
    assert len(lines) == 1 and lines[0].startswith("A1 pass")
    saved = open(os.path.join(str(tmp_path), "verify.txt")).read()
    assert saved.startswith("A1 pass")


def test_verify_unknown_filter_is_config_error():
    assert main(["verify", "--filter", "no-such-criterion"]) == 2


def test_verify_reports_failure_exit_code(monkeypatch, capsys):
    # mutation smoke test: flipping the sign of alpha in the transform must
    # make the forward-oracle criterion fail, the report localize it, and the
    # CLI signal it through exit code 1
    from dataclasses import replace

    true_resolvent = viscostring.kernels.resolvent

    def flipped(kernel):
        res = true_resolvent(kernel)
        return replace(res, alpha=-res.alpha)

    monkeypatch.setattr(viscostring.forward, "resolvent", flipped)
    results = verification.run_all("A3")
    assert len(results) == 1
    assert not results[0].passed
    assert results[0].line().startswith("A3 FAIL")
    assert main(["verify", "--filter", "A3"]) == 1
    out = capsys.readouterr().out
    assert "A3 FAIL" in out


def test_numerical_failure_exit_code_3(tmp_path, cfg_path):
    bundle = str(tmp_path / "bundle")
    main(["synthesize", "--config", cfg_path, "--out", bundle])
    bad = tmp_path / "guard.cfg"
    bad.write_text(CFG + "xi_zero_guard = 1e9\n")  # everything under guard
    assert main(["identify", bundle, "--config", str(bad)]) == 3
