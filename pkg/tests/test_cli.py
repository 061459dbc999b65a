import io
import json

import numpy as np
import pytest

from hssm.cli import (
    EXIT_OK,
    EXIT_VALIDATION,
    RunConfig,
    ingest_partition,
    main,
    parse_config,
)
from hssm.epm_core import PartitionStats, estimate_alpha
from hssm.errors import DuplicateObservation, MalformedRow, ParseError, ValidationError
from hssm.exact_oracle import exact_K_pmf
from hssm.epm_core import EpmParams
from hssm.hierarchy import HierParams, sample_hier
from hssm.rng import RngSpec

MINIMAL = {"subcommand": "simulate", "case": "HPYP", "alpha0": 0.5, "theta0": 1.0,
           "beta": 0.5, "theta": 1.0, "d": 2, "N": 100}


def run(argv):
    buf = io.StringIO()
    rc = main(argv, buf)
    return rc, buf.getvalue()


def write_rows(path, rows, header="group,observation,label"):
    path.write_text(header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


# ------------------------------------------------------------- config


def test_minimal_config_is_valid():
    cfg = parse_config(MINIMAL)
    assert isinstance(cfg, RunConfig)
    assert cfg.resolved_case == "HPYP"
    assert cfg.group_sizes() == [50, 50]


def test_concentration_constraint_is_named():
    with pytest.raises(ValidationError, match=r"theta > -alpha"):
        parse_config({**MINIMAL, "theta0": -0.5, "alpha0": 0.25})


def test_unknown_key_is_parse_error():
    with pytest.raises(ParseError, match="gamma"):
        parse_config({**MINIMAL, "gamma": 1})


def test_json_syntax_error_reports_location(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"subcommand": "simulate",\n "N": }')
    with pytest.raises(ParseError, match="line 2"):
        parse_config(p)


def test_case_must_match_discounts():
    with pytest.raises(ValidationError):
        parse_config({**MINIMAL, "case": "HDP"})


def test_overrides_win(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(MINIMAL))
    assert parse_config(p, {"N": 40, "seed": None}).N == 40


# ------------------------------------------------------------- ingestion


def test_ingest_example(tmp_path):
    ing = ingest_partition(write_rows(tmp_path / "p.csv", [(1, 1, "a"), (1, 2, "a"), (2, 1, "b")]))
    assert ing.pooled.K == 2
    assert ing.pooled.spectrum == {1: 1, 2: 1}
    assert ing.group_K == (1, 1)


@pytest.mark.parametrize("body,exc", [
    ("", MalformedRow),
    ("group,obs,label\n1,1,a\n", MalformedRow),
    ("group,observation,label\n1,1\n", MalformedRow),
    ("group,observation,label\nx,1,a\n", MalformedRow),
    ("group,observation,label\n1,1,\n", MalformedRow),
    ("group,observation,label\n2,1,a\n", MalformedRow),
    ("group,observation,label\n1,1,a\n1,1,b\n", DuplicateObservation),
    ("group,observation,label\n", MalformedRow),
])
def test_ingest_rejects(tmp_path, body, exc):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(exc):
        ingest_partition(p)


def test_labels_round_trip(tmp_path):
    hp = HierParams.make(0.5, 1.0, 0.5, 1.0, 3)
    hs = sample_hier([100, 100, 100], None, hp, RngSpec(20261015), emit_labels=True)
    rows = [(g + 1, j + 1, f"c{lab}") for g, arr in enumerate(hs.labels) for j, lab in enumerate(arr)]
    ing = ingest_partition(write_rows(tmp_path / "p.csv", rows))
    assert ing.pooled.K == hs.K
    assert ing.pooled.spectrum == hs.obs_spectrum
    assert ing.group_K == tuple(len(np.unique(arr)) for arr in hs.labels)


def test_simulate_labels_feed_estimate(tmp_path):
    out = tmp_path / "sim"
    rc, _ = run(["simulate", "--case", "HPYP", "--alpha0", "0.5", "--beta", "0.5", "--d", "2",
                 "--N", "60", "--replicates", "2", "--emit-labels", "true",
                 "--output-dir", str(out)])
    assert rc == EXIT_OK
    table = (out / "simulate.csv").read_text().splitlines()
    K0 = int(table[1].split(",")[3])
    rc, text = run(["estimate", "--input", str(out / "labels_r0.csv")])
    assert rc == EXIT_OK
    report = json.loads(text)
    assert report["K"] == K0 and report["n"] == 60
    pooled = PartitionStats.from_json(report["pooled"])
    assert report["alpha_hat"] == estimate_alpha(pooled)


# ------------------------------------------------------------- subcommands


def test_simulate_single_csv():
    rc, text = run(["simulate", "--case", "single", "--alpha0", "0.5", "--n", "30", "--replicates", "3",
                    "--r-max", "2"])
    assert rc == EXIT_OK
    lines = text.splitlines()
    assert lines[0] == "replicate,n,K,M_1,M_2,overflow"
    assert len(lines) == 4
    for line in lines[1:]:
        _, n, K, m1, m2, over = map(int, line.split(","))
        assert n == 30 and m1 + m2 + over == K


def test_pmf_K_matches_oracle():
    rc, text = run(["pmf", "--kind", "K", "--case", "single", "--alpha0", "0.5", "--n", "5"])
    assert rc == EXIT_OK
    rows = [line.split(",") for line in text.splitlines()[1:]]
    pmf = exact_K_pmf(5, EpmParams(0.5, 1.0))
    assert [float(p) for _, p in rows] == pytest.approx(pmf.probs.tolist(), abs=0)
    assert float(rows[0][1]) == pytest.approx(7 / 128)


@pytest.mark.parametrize("kind", ["hier_K", "xi", "Mr", "joint"])
def test_pmf_kinds_sum_to_one(kind):
    argv = ["pmf", "--kind", kind, "--alpha0", "0.5", "--beta", "0.5", "--sizes", "2,3"]
    if kind == "joint":
        argv = ["pmf", "--kind", "joint", "--case", "single", "--alpha0", "0.5", "--n", "4"]
    rc, text = run(argv)
    assert rc == EXIT_OK
    probs = [float(line.rsplit(",", 1)[1]) for line in text.splitlines()[1:]]
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)


def test_rates_grid():
    rc, text = run(["rates", "--fn", "I_alpha", "--alpha0", "0.5", "--x-min", "0.5",
                    "--x-max", "1", "--x-num", "3"])
    assert rc == EXIT_OK
    last = text.splitlines()[-1].split(",")
    assert float(last[0]) == 1.0
    assert float(last[1]) == pytest.approx(np.log(2.0))


def test_verify_prints_status(tmp_path):
    rc, text = run(["verify", "--suites", "ldp", "--case", "single", "--alpha0", "0.5",
                    "--grid", "50,100,200", "--output-dir", str(tmp_path)])
    assert rc == EXIT_OK
    assert text == "ldp: PASS\n"
    assert (tmp_path / "ldp_exact_tail.csv").exists()


# ------------------------------------------------------------- exit codes and determinism


@pytest.mark.parametrize("argv", [
    ["simulate", "--gamma", "1"],
    ["simulate", "--case", "single", "--alpha0", "0.25", "--theta0", "-0.5", "--n", "10"],
    ["estimate", "--input", "/nonexistent/file.csv"],
    ["frobnicate"],
    ["pmf", "--kind", "joint", "--case", "single", "--alpha0", "0.5", "--n", "100000"],
])
def test_validation_exit_code(argv):
    rc, _ = run(argv)
    assert rc == EXIT_VALIDATION


def test_reruns_are_byte_identical(tmp_path, monkeypatch):
    base = ["simulate", "--case", "HDPYP", "--beta", "0.5", "--d", "3", "--N", "500",
            "--replicates", "20", "--format", "json"]
    outputs = []
    for threads in ("1", "4", "8"):
        monkeypatch.setenv("HSSM_THREADS", threads)
        out = tmp_path / threads
        assert run(base + ["--output-dir", str(out)])[0] == EXIT_OK
        outputs.append((out / "simulate.json").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_config_file_alone_selects_subcommand(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**MINIMAL, "replicates": 2, "r_max": 1}))
    rc, text = run(["--config", str(p)])
    assert rc == EXIT_OK
    assert text.splitlines()[0] == "replicate,N,xi,K,K_1,K_2,M_1,overflow"
    rc, again = run(["simulate", "--config", str(p)])
    assert again == text
    assert run([])[0] == EXIT_VALIDATION
