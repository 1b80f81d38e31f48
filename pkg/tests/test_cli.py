import csv
import io
import json
import os
import random
import subprocess
import sys

import pytest

from conftest import admissible_linfty
from corrkernel.kernel import dump_problem

SYMMETRIC = {"n": 1, "alpha": [["0", "1/2", "1/2"], ["1/2", "0", "1/2"], ["1/2", "1/2", "0"]],
             "p": ["2", "2", "2"]}
HLS_PAIR = {"n": 1, "alpha": [["0", "1/2"], ["1/2", "0"]], "p": ["4/3", "4/3"]}
CRITICAL_PAIR = {"n": 1, "alpha": [["0", "1"], ["1", "0"]], "p": ["2", "2"]}
LINFTY_FOLD = {"n": 1, "alpha": [["0", "0", "3/4"], ["0", "0", "3/4"], ["3/4", "3/4", "0"]],
               "p": ["4/3", "4/3", "inf"]}
# a 4-point kernel whose alpha_12 sweep meets a (iii) equality that passes the nested test
EQUALITY_SWEEP = {"n": 1, "p": ["2", "2", "2", "2"],
                  "alpha": [["0", "1/6", "0", "1/12"], ["1/6", "0", "1/12", "1/6"],
                            ["0", "1/12", "0", "1/3"], ["1/12", "1/6", "1/3", "0"]]}


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "corrkernel", *args], capture_output=True,
                          text=True, env=full_env)


@pytest.fixture
def write(tmp_path):
    def _write(doc, name="spec.json"):
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(path)
    return _write


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- check / integrable / endpoint ---------------------------------------------

def test_check_bounded(write):
    res = run("check", "--spec", write(HLS_PAIR))
    assert res.returncode == 0
    assert json.loads(res.stdout)["verdict"] == "bounded"


def test_check_unbounded_with_power_cutoff(write):
    res = run("check", "--spec", write(CRITICAL_PAIR))
    assert res.returncode == 1
    doc = json.loads(res.stdout)
    assert doc["verdict"] == "unbounded"
    assert "power_cutoff" in json.dumps(doc["witness"]).lower()


def test_check_out_of_scope(write):
    spec = dict(HLS_PAIR, p=["1", "inf"])
    assert run("check", "--spec", write(spec)).returncode == 2


def test_check_lists_every_subset(write):
    doc = json.loads(run("check", "--spec", write(SYMMETRIC)).stdout)
    assert sorted(tuple(x["I"]) for x in doc["condition_iii"]) == sorted(
        [(1,), (2,), (3,), (1, 2), (1, 3), (2, 3)])


def test_profile_override(write):
    res = run("check", "--spec", write(SYMMETRIC), "--profile", "3,3,inf")
    assert json.loads(res.stdout)["input"]["p"] == ["3", "3", "inf"]


@pytest.mark.parametrize("doc, field", [
    ({"n": 1}, "alpha"),
    ({"alpha": [["0"]]}, "n"),
    ({"n": 1, "alpha": [["0", "x"], ["x", "0"]], "p": ["2", "2"]}, "alpha[0][1]"),
    ("{not json", "$"),
])
def test_malformed_input_exits_64(write, doc, field):
    res = run("check", "--spec", write(doc))
    assert res.returncode == 64
    assert f"error at {field}" in res.stderr


def test_bad_flag_exits_64(write):
    assert run("check", "--spec", write(HLS_PAIR), "--bogus").returncode == 64
    assert run("check", "--spec", write(HLS_PAIR), "--format", "xml").returncode == 64


def test_missing_file_exits_64(tmp_path):
    assert run("check", "--spec", str(tmp_path / "absent.json")).returncode == 64


def test_integrable(write):
    assert run("integrable", "--spec", write(SYMMETRIC)).returncode == 0
    res = run("integrable", "--spec", write(CRITICAL_PAIR))
    assert res.returncode == 1
    assert json.loads(res.stdout)["violations"] == [{"J": [1, 2], "slack": "0"}]


def test_endpoint(write):
    res = run("endpoint", "--spec", write(LINFTY_FOLD))
    assert res.returncode == 0
    assert json.loads(res.stdout)["status"] == "l1_eligible"
    res = run("endpoint", "--spec", write(SYMMETRIC))
    assert res.returncode == 2
    assert json.loads(res.stdout)["status"] == "out_of_scope"


def test_output_is_byte_identical(write):
    path = write(SYMMETRIC)
    for fmt in ("json", "text"):
        a = run("check", "--spec", path, "--format", fmt)
        b = run("check", "--spec", path, "--format", fmt)
        assert a.stdout == b.stdout and a.returncode == b.returncode


def test_rationals_stay_strings(write):
    doc = json.loads(run("check", "--spec", write(SYMMETRIC)).stdout)

    def walk(x):
        if isinstance(x, float):
            raise AssertionError(f"float {x} in output")
        if isinstance(x, dict):
            for v in x.values():
                walk(v)
        elif isinstance(x, list):
            for v in x:
                walk(v)
    walk(doc)


# -- fold / find-profile -------------------------------------------------------

def test_fold_single_output_round_trips(write, tmp_path):
    out = tmp_path / "out"
    res = run("fold", "--spec", write(LINFTY_FOLD), "--mode", "linfty", "--out", str(out))
    assert res.returncode == 0
    assert json.loads(res.stdout)["files"] == ["fold_01.json"]
    reduced = json.loads((out / "fold_01.json").read_text())
    assert reduced["alpha"][0][1] == "1/2"
    assert reduced["mode"] == "linfty" and reduced["fold"]
    assert run("check", "--spec", str(out / "fold_01.json")).returncode == 0


def test_fold_inadmissible_exits_1(write):
    spec = {"n": 1, "alpha": [["0", "7/10", "7/10"], ["7/10", "0", "7/10"], ["7/10", "7/10", "0"]]}
    res = run("fold", "--spec", write(spec))
    assert res.returncode == 1
    assert "error" in json.loads(res.stdout)


def test_fold_recursion_outputs_pass_check(write, tmp_path):
    rng = random.Random(77)
    spec, prof = admissible_linfty(rng)
    while spec.m != 5:
        spec, prof = admissible_linfty(rng)
    out = tmp_path / "rec"
    res = run("fold", "--spec", write(dump_problem(spec, prof)), "--mode", "linfty",
              "--out", str(out), "--dump-system")
    assert res.returncode == 0
    summary = json.loads(res.stdout)
    assert summary["count"] >= 1 and summary["systems"]
    for name in summary["files"]:
        chk = run("check", "--spec", str(out / name))
        doc = json.loads(chk.stdout)
        assert chk.returncode == 0
        assert doc["homogeneity"]["holds"] and doc["integrability_violations"] == []
        assert all(x["kind"] == "strict_a" for x in doc["condition_iii"])


def test_find_profile(write):
    res = run("find-profile", "--spec", write(SYMMETRIC), "--dump-system")
    assert res.returncode == 0
    doc = json.loads(res.stdout)
    assert doc["outcome"]["feasible"] and "system" in doc
    prof = doc["profile"]
    assert run("check", "--spec", write(SYMMETRIC), "--profile", ",".join(prof)).returncode == 0


def test_find_profile_reducible(write):
    # two decoupled critical pairs: each block is an equality subset
    spec = {"n": 1, "alpha": [["0", "1", "0", "0"], ["1", "0", "0", "0"],
                              ["0", "0", "0", "1"], ["0", "0", "1", "0"]]}
    res = run("find-profile", "--spec", write(spec))
    assert res.returncode == 1
    assert json.loads(res.stdout)["profile"] is None


# -- process -------------------------------------------------------------------

STATE = {"ground": [1, 2, 3], "theta": [1, 2, 3], "family": "Fm",
         "mu": [{"J": [1, 2], "w": "1"}, {"J": [2, 3], "w": "1"}, {"J": [1, 3], "w": "1"}],
         "steps": [[[1, 2], [2, 3]]],
         "n": 1, "alpha": SYMMETRIC["alpha"], "objective": {"c0": "0"}}


def test_process_replay(write):
    res = run("process", "--state", write(STATE, "state.json"))
    assert res.returncode == 0
    doc = json.loads(res.stdout)
    assert [r["omega"] for r in doc["trace"]] == ["0", "1"]
    # {2} meets Theta once, so it leaves the family and its share is dropped
    assert doc["final"]["mu"] == [{"J": [1, 3], "w": "1"}, {"J": [1, 2, 3], "w": "1"}]


def test_process_csv_and_text(write):
    path = write(STATE, "state.json")
    table = rows(run("process", "--state", path, "--format", "csv").stdout)
    assert list(table[0]) == ["step", "J1", "J2", "omega", "lambda_min", "objective"]
    assert len(table) == 2
    text = run("process", "--state", path, "--format", "text").stdout
    assert text.splitlines()[0].split() == ["step", "J1", "J2", "omega", "lambda_min", "objective"]


def test_process_greedy_reaches_ceiling(write):
    state = dict(STATE)
    del state["steps"]
    doc = json.loads(run("process", "--state", write(state, "state.json"), "--greedy").stdout)
    s = doc["summary"]
    assert s["reached_stable"] and s["ceiling_reached"]
    assert s["omega"] == s["ceiling"] == "1"


def test_process_bad_state(write):
    state = dict(STATE, mu=[{"J": [1], "w": "1"}])
    res = run("process", "--state", write(state, "state.json"))
    assert res.returncode == 64 and "error at mu" in res.stderr


# -- verify --------------------------------------------------------------------

def test_verify_selberg():
    res = run("verify", "--suite", "selberg", "--samples", "100000")
    assert res.returncode == 0, res.stdout
    doc = json.loads(res.stdout)
    names = [c["name"] for c in doc["suites"][0]["checks"]]
    assert "matches_quadrature" in names


def test_verify_witness_on_unbounded(write):
    res = run("verify", "--suite", "witness", "--spec", write(CRITICAL_PAIR), "--samples", "50000")
    assert res.returncode == 0, res.stdout


def test_verify_envelope_reports_constant():
    res = run("verify", "--suite", "envelope")
    assert res.returncode == 0, res.stdout
    details = json.loads(res.stdout)["suites"][0]["checks"][0]["details"]
    assert details["fitted_C"] > 0 and details["spread"] < 2


def test_verify_homogeneity_and_csv_columns():
    res = run("verify", "--suite", "homogeneity", "--samples", "50000", "--format", "csv")
    assert res.returncode == 0
    table = rows(res.stdout)
    assert list(table[0]) == ["instance", "method", "seed", "samples", "mean", "stderr", "diagnostics"]


def test_verify_failure_exits_nonzero(write):
    # a bounded kernel has nothing to diverge
    res = run("verify", "--suite", "witness", "--spec", write(HLS_PAIR), "--samples", "10000")
    assert res.returncode == 1


def test_verify_resource_cap():
    res = run("verify", "--suite", "selberg", "--samples", "100000",
              env={"CORRKERNEL_MAX_SAMPLES": "1000"})
    assert res.returncode == 3


def test_verify_is_deterministic():
    a = run("verify", "--suite", "selberg", "--samples", "20000", "--seed", "5", "--format", "csv")
    b = run("verify", "--suite", "selberg", "--samples", "20000", "--seed", "5", "--format", "csv")
    assert a.stdout == b.stdout


# -- scan ----------------------------------------------------------------------

def test_scan_single_bounded_window(write):
    res = run("scan", "--spec", write(SYMMETRIC), "--grid", "alpha[1][2]=0:1:11", "--rebalance", "r")
    assert res.returncode == 0
    verdicts = [r["verdict"] for r in rows(res.stdout)]
    changes = sum(a != b for a, b in zip(verdicts, verdicts[1:]))
    assert "bounded" in verdicts and changes <= 2
    inside = [v == "bounded" for v in verdicts]
    first, last = inside.index(True), len(inside) - 1 - inside[::-1].index(True)
    assert all(inside[first:last + 1])


def test_scan_broken_homogeneity(write):
    table = rows(run("scan", "--spec", write(SYMMETRIC), "--grid", "r[1]=1/8:7/8:5").stdout)
    off = [r for r in table if r["value"] != "1/2"]
    assert off and all(r["verdict"] == "unbounded" and r["first_failure"] == "homogeneity" for r in off)


def test_scan_hits_equality_once(write):
    table = rows(run("scan", "--spec", write(EQUALITY_SWEEP), "--grid", "alpha[1][2]=0:1:13",
                     "--rebalance", "r").stdout)
    hits = [r for r in table if r["equality_b"]]
    assert len(hits) == 1
    assert hits[0]["value"] == "2/3" and hits[0]["verdict"] == "bounded"


@pytest.mark.parametrize("grid", ["n=1:2:2", "alpha[1][1]=0:1:3", "alpha[1][9]=0:1:3", "r[1]=0:1"])
def test_scan_bad_grid(write, grid):
    res = run("scan", "--spec", write(SYMMETRIC), "--grid", grid)
    assert res.returncode == 64 and "error at grid" in res.stderr
