import csv
import glob
import json
import os

import numpy as np
import pytest

from coel.cli import main
from coel.errors import ConfigError
from coel.grid import read_profile_csv
from coel.tiers import parse_tier_table, tier


def _records(path):
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]


def _payload(d):
    return {k: v for k, v in d.items() if k != "timestamp"}


def test_selftest(tmp_path):
    assert main(["selftest", "--out", str(tmp_path)]) == 0


@pytest.mark.parametrize("dim", [6, 8])
def test_profiles_writes_csv_and_fits(tmp_path, dim):
    assert main(["profiles", "--dim", str(dim), "--out", str(tmp_path)]) == 0
    gam = glob.glob(str(tmp_path / f"profile_Gamma_dim{dim}_*.csv"))
    assert len(gam) == 1
    prof = read_profile_csv(gam[0])
    assert prof.dimension == dim
    if dim == 6:
        i = np.flatnonzero(prof.r == 1.0)
        assert i.size == 1 and abs(prof.values[i[0]]) < 1e-10
    fits = glob.glob(str(tmp_path / f"fits_dim{dim}_*.csv"))
    with open(fits[0]) as fh:
        rows = list(csv.DictReader(fh))
    lw = [r for r in rows if r["profile"] == "LambdaW" and r["end"] == "infinity"]
    assert float(lw[0]["exponent"]) == pytest.approx(2 - dim, abs=0.05)


def test_verify_writes_records(tmp_path):
    assert main(["verify", "theorem6d", "--samples", "10", "--tier", "draft",
                 "--out", str(tmp_path)]) == 0
    files = glob.glob(str(tmp_path / "records_theorem6d_*.jsonl"))
    recs = _records(files[0])
    assert len(recs) == 10
    assert len({r["config_hash"] for r in recs}) == 1
    assert glob.glob(str(tmp_path / "summary_theorem6d_*.md"))


def test_verify_reproducible_and_parallel(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    args = ["verify", "theorem", "--samples", "4", "--kernels"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert main(args + ["--parallel", "2", "--out", str(c)]) == 0
    ra, rb, rc = (_records(glob.glob(str(d / "*.jsonl"))[0]) for d in (a, b, c))
    assert len(ra) == 6
    assert [_payload(x) for x in ra] == [_payload(x) for x in rb]
    assert [_payload(x) for x in ra] == [_payload(x) for x in rc]


def test_report_refuses_mixed_hashes(tmp_path):
    for s in ("0", "5"):
        assert main(["verify", "theorem6d", "--samples", "2", "--seed", s,
                     "--out", str(tmp_path / "runs")]) == 0
    assert main(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "rep")]) == 2
    assert main(["report", str(tmp_path / "runs"), "--force", "--out", str(tmp_path / "rep")]) == 0
    rows = list(csv.DictReader(open(glob.glob(str(tmp_path / "rep" / "report_*.csv"))[0])))
    assert rows[0]["experiment"] == "theorem6d" and rows[0]["count"] == "4"


def test_report_single_hash(tmp_path):
    assert main(["verify", "theorem6d", "--samples", "2", "--out", str(tmp_path)]) == 0
    assert main(["report", str(tmp_path), "--out", str(tmp_path)]) == 0


def test_bad_arguments_exit_2(tmp_path):
    out = ["--out", str(tmp_path)]
    assert main(["verify", "nonsense"] + out) == 2
    assert main(["profiles", "--dim", "7"] + out) == 2
    assert main(["profiles", "--tier", "coarse"] + out) == 2
    assert main(["verify", "theorem6d", "--sweep", "a,b"] + out) == 2
    assert main(["report", str(tmp_path / "missing.jsonl")] + out) == 2
    assert main(["bogus"]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["evolve", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_bad_config_values_exit_2(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[evolve]\npotential = quartic\n")
    assert main(["evolve", "--config", str(ini), "--out", str(tmp_path)]) == 2
    ini.write_text("[evolve]\nh = fine\n")
    assert main(["evolve", "--config", str(ini), "--out", str(tmp_path)]) == 2


def test_evolve_from_config(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[evolve]\ndim = 6\nh = 0.05\nt = 2\nsupport = 3\ndata = bump\n")
    assert main(["evolve", "--config", str(ini), "--out", str(tmp_path)]) == 0
    man = glob.glob(str(tmp_path / "evolve_*" / "*.json"))
    assert man


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("COEL_OUT_DIR", str(tmp_path / "env"))
    assert main(["verify", "theorem6d", "--samples", "1"]) == 0
    assert glob.glob(str(tmp_path / "env" / "records_*.jsonl"))


def test_counterexample(tmp_path):
    assert main(["counterexample", "--sweep", "2,4", "--out", str(tmp_path)]) == 0
    recs = _records(glob.glob(str(tmp_path / "records_counterexample_*.jsonl"))[0])
    assert [r["n"] for r in recs] == [2, 4]
    assert all(r["E_out_superposition"] <= r["young_bound"] for r in recs)


def test_tier_lookup():
    assert tier("theorem6d", "draft")["h"] == 0.04
    assert tier("counterexample", "reference")["r_max"] == 64.0
    assert tier("theorem6d", "draft")["T"] is None
    with pytest.raises(ConfigError):
        tier("theorem6d", "coarse")
    with pytest.raises(ConfigError):
        tier("no_such_experiment", "draft")


def test_parse_tier_table_errors():
    head = "| experiment | tier | h | T | r_max | per_octave | h_factor |\n|---|---|---|---|---|---|---|\n"
    ok = parse_tier_table(head + "| x | draft | 0.1 | | | | |\n")
    assert ok[("x", "draft")]["h"] == 0.1
    with pytest.raises(ConfigError):
        parse_tier_table("no table here")
    with pytest.raises(ConfigError):
        parse_tier_table("| experiment | tier |\n|---|---|\n| x | draft |\n")
    with pytest.raises(ConfigError):
        parse_tier_table(head + "| x | huge | 0.1 | | | | |\n")
    with pytest.raises(ConfigError):
        parse_tier_table(head + "| x | draft | small | | | | |\n")
    with pytest.raises(ConfigError):
        parse_tier_table(head + "| x | draft | 0.1 |\n")
