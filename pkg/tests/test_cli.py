import csv
import json

import numpy as np

from reglift import io
from reglift.cli import main
from reglift.forms import identity_form


def run_cli(*args):
    return main(list(args))


def test_corpus_flat_zero_dump(tmp_path):
    out = tmp_path / "flat.rtf1"
    rc = run_cli("corpus", "--kind", "flat", "--res", "17", "--out", str(out))
    assert rc == 0
    gamma = io.read_field(out)
    assert np.all(gamma.comps == 0.0)
    spec = json.loads(out.with_suffix(".json").read_text())
    assert spec["kind"] == "flat"


def test_smooth_zero_connection(tmp_path):
    case = tmp_path / "flat.rtf1"
    run_cli("corpus", "--kind", "flat", "--res", "33", "--out", str(case))
    rc = run_cli(
        "smooth", "--input", str(case), "--out", str(tmp_path / "run"),
        "--epsilon", "0.5", "--method", "direct",
    )
    assert rc == 0
    J = io.read_field(tmp_path / "run" / "J.rtf1")
    assert np.array_equal(J.comps, identity_form(J.grid).comps)
    diag = json.loads((tmp_path / "run" / "diagnostics.json").read_text())
    assert diag["converged"] is True
    assert diag["iterations"] == 1


def test_smooth_pure_gauge_end_to_end(tmp_path):
    case = tmp_path / "pg.rtf1"
    run_cli(
        "corpus", "--kind", "pure-gauge", "--res", "33", "--seed", "3",
        "--amplitude", "0.4", "--out", str(case),
    )
    rc = run_cli(
        "smooth", "--input", str(case), "--out", str(tmp_path / "run"),
        "--epsilon", "0.5", "--method", "direct",
    )
    assert rc == 0
    diag = json.loads((tmp_path / "run" / "diagnostics.json").read_text())
    assert diag["riem_flat_res"] < 0.05
    assert diag["curl_res"] < 1e-10
    with open(tmp_path / "run" / "iterations.csv") as fh:
        header = fh.readline().strip()
    assert header == "k,du_w1p,da_lp,ratio,lin_res_a,lin_res_psi,lin_res_y,lin_res_u"


def test_corrupted_magic_exit_code(tmp_path):
    case = tmp_path / "bad.rtf1"
    run_cli("corpus", "--kind", "flat", "--res", "17", "--out", str(case))
    raw = bytearray(case.read_bytes())
    raw[:4] = b"XXXX"
    case.write_bytes(bytes(raw))
    rc = run_cli("smooth", "--input", str(case), "--out", str(tmp_path / "run"))
    assert rc == 1


def test_missing_input_exit_code(tmp_path):
    rc = run_cli(
        "smooth", "--input", str(tmp_path / "nope.rtf1"), "--out", str(tmp_path / "r")
    )
    assert rc == 1


def test_unknown_suite_exit_code():
    assert run_cli("verify", "--suite", "bogus") == 1


def test_usage_error_exit_code():
    assert run_cli("smooth") == 1  # missing required arguments


def test_reproducible_runs(tmp_path):
    case = tmp_path / "pg.rtf1"
    run_cli(
        "corpus", "--kind", "pure-gauge", "--res", "17", "--seed", "9",
        "--amplitude", "0.3", "--out", str(case),
    )
    for d in ("a", "b"):
        rc = run_cli(
            "smooth", "--input", str(case), "--out", str(tmp_path / d),
            "--epsilon", "0.5", "--method", "direct",
        )
        assert rc == 0
    for name in ("J.rtf1", "Jinv.rtf1", "B.rtf1", "y.rtf1", "gamma_y.rtf1"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_inertial_on_smoothed_output(tmp_path):
    case = tmp_path / "pg.rtf1"
    run_cli(
        "corpus", "--kind", "pure-gauge", "--res", "33", "--seed", "3",
        "--amplitude", "0.4", "--out", str(case),
    )
    run_cli(
        "smooth", "--input", str(case), "--out", str(tmp_path / "run"),
        "--epsilon", "0.5", "--method", "direct",
    )
    rc = run_cli(
        "inertial", "--input", str(tmp_path / "run" / "gamma_y.rtf1"),
        "--point", "0.5,0.5", "--out", str(tmp_path / "inert"),
    )
    assert rc == 0
    report = json.loads((tmp_path / "inert" / "inertial.json").read_text())
    # discrete solver output is torsion-free only to O(h^2): the quadratic
    # map shrinks |Gamma(q)| to that level
    assert report["gamma_z_at_q"] <= 2e-2 * report["gamma_y_sup"]
    assert (tmp_path / "inert" / "gamma_z.rtf1").exists()


def test_report_merges_diagnostics(tmp_path):
    case = tmp_path / "flat.rtf1"
    run_cli("corpus", "--kind", "flat", "--res", "17", "--out", str(case))
    inputs = []
    for d in ("r1", "r2", "r3"):
        run_cli(
            "smooth", "--input", str(case), "--out", str(tmp_path / d),
            "--epsilon", "0.5", "--method", "direct",
        )
        inputs.append(str(tmp_path / d / "diagnostics.json"))
    out = tmp_path / "summary.csv"
    rc = run_cli("report", "--inputs", *inputs, "--out", str(out))
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "input" and "riem_flat_res" in rows[0]
    assert len(rows) == 4


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.5, "method": "direct", "tol": 1e-9}))
    case = tmp_path / "pg.rtf1"
    run_cli(
        "corpus", "--kind", "pure-gauge", "--res", "17", "--seed", "9",
        "--amplitude", "0.3", "--out", str(case),
    )
    rc = run_cli(
        "smooth", "--input", str(case), "--out", str(tmp_path / "run"),
        "--config", str(cfg),
    )
    assert rc == 0
    diag = json.loads((tmp_path / "run" / "diagnostics.json").read_text())
    assert diag["epsilon"] == 0.5
