import csv
import json
import math

import numpy as np
import pytest

from artifact.harness import cli
from artifact.harness import experiments as ex
from artifact.harness.config import (ConfigError, ExperimentConfig, FactorSpec, Query, config_hash,
                                     load_config)
from artifact.harness.report import ExperimentReport, write_csv
from artifact.harness.stats import ks_2samp, mean_stderr, pairwise_sum, z_score
from artifact.measures import EmpiricalMeasure, centering


def small_universality(**kw):
    d = dict(experiment="universality", N=6, replicas=120, seed=4,
             factors=[FactorSpec(atoms=[0.5, 2.0])], queries=[Query(c=[0.5], t=[1.0])])
    d.update(kw)
    return ExperimentConfig(**d).validate()


def test_config_round_trip(tmp_path):
    cfg = small_universality()
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    back = load_config(p)
    assert back.to_dict() == cfg.to_dict()
    assert config_hash(back) == config_hash(cfg)
    assert len(config_hash(cfg)) == 40


def test_config_hash_changes():
    assert config_hash(small_universality()) != config_hash(small_universality(seed=5))


@pytest.mark.parametrize("bad", [
    {"N": 0},
    {"replicas": 0},
    {"queries": [{"c": [0.6, 0.6], "t": [1.0, 0.5]}]},
    {"factors": [{"kind": "fixed_spectrum", "atoms": [0.01, 2.0]}]},
    {"factors": [{"kind": "ginibre_polar", "ambient_ratio": 1.0}]},
    {"factors": [{"kind": "fixed_spectrum", "atoms": [1.0, 2.0, 3.0, 4.0]}]},
    {"bogus": 1},
])
def test_config_errors(bad):
    d = small_universality().to_dict()
    d.update(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.json")


def test_pairwise_sum_order_fixed():
    v = np.random.default_rng(0).standard_normal(1000)
    assert pairwise_sum(v) == pytest.approx(math.fsum(v), abs=1e-12)
    m, se = mean_stderr(v)
    assert se == pytest.approx(np.std(v, ddof=1) / math.sqrt(1000))


def test_z_score_deterministic():
    assert z_score(2.0, 0.0, 2.0 + 1e-14) == 0.0
    assert math.isinf(z_score(2.0, 0.0, 3.0))
    assert z_score(1.0, 0.5, 0.0) == 2.0


def test_ks_same_law():
    g = np.random.default_rng(1)
    assert ks_2samp(g.normal(size=500), g.normal(size=500))[1] > 0.001


def test_seed_plan():
    plan = ex.seed_plan(7, 5, workers=3)
    assert [s.stream_id for s in plan] == list(range(5))
    assert ex.seed_plan(7, 1)[0].stream_id == 0
    firsts = {ex.seed_plan(s, 1)[0].generator().standard_normal() for s in range(100)}
    assert len(firsts) == 100
    with pytest.raises(ValueError):
        ex.seed_plan(1, 0)


def test_report_rules(tmp_path):
    rep = ExperimentReport("x", {}, "h")
    with pytest.raises(ValueError):
        rep.add_query(z=1.0, replicas=50)
    rep.add_query(z=4.5, replicas=200)
    assert rep.exit_code == 1
    rep = ExperimentReport("x", {}, "h", statistics=[{"p_value": 0.5}])
    assert rep.exit_code == 0
    paths = rep.write(tmp_path / "o")
    assert json.loads(open(paths[0]).read())["config_hash"] == "h"


def test_csv_format(tmp_path):
    p = write_csv(tmp_path / "a.csv", [{"a": 1.5, "b": [1, 2]}, {"a": "x,y"}])
    raw = open(p, "rb").read()
    assert raw.startswith(b"a,b\r\n") and b'"x,y"' in raw
    rows = list(csv.reader(open(p, newline="")))
    assert rows[1] == ["1.5", "1 2"]


def test_universality_workers_invariant():
    a = ex.run_universality(small_universality(workers=1, replicas=250))
    b = ex.run_universality(small_universality(workers=2, replicas=250))
    assert a.payload_bytes() != b"" and a.payload()["queries"] == b.payload()["queries"]


def test_universality_centering_exact():
    cfg = small_universality()
    prof = centering([EmpiricalMeasure(cfg.factors[0].spectrum(6))] * 6, 6)
    Ms, L, E, V = ex.simulate_products(cfg, [6])
    assert np.allclose(E[:, 0], prof.E_N[6], rtol=1e-13)
    assert np.allclose(V[:, 0], prof.V_N[6], rtol=1e-13)


def test_universality_degenerate_spectrum():
    cfg = small_universality(factors=[FactorSpec(atoms=[1.5])], queries=[Query(c=[0.4], t=[1.0])])
    rep = ex.run_universality(cfg)
    q = rep.queries[0]
    assert q["flag"] == "gamma_zero"
    assert q["estimate"] == pytest.approx(6 ** 0.6, rel=1e-10)
    assert q["stderr"] == pytest.approx(0.0, abs=1e-12)
    assert q["z"] == 0.0


def test_random_spectrum_kinds():
    for f in (FactorSpec(kind="ginibre_polar", ambient_ratio=2.0),
              FactorSpec(kind="truncated_unitary", ambient_ratio=3.0)):
        rep = ex.run_universality(small_universality(factors=[f], replicas=100))
        q = rep.queries[0]
        assert q["gamma"][0] > 0 and np.isfinite(q["estimate"])


def test_oracle_single_size():
    cfg = ExperimentConfig(experiment="oracle-smalln", N=1, replicas=100,
                           factors=[FactorSpec(atoms=[2.0])], queries=[Query(c=[0.5], M=[3])]).validate()
    q = ex.run_oracle_smalln(cfg).queries[0]
    assert q["estimate"] == pytest.approx(q["formula"], rel=1e-12) and q["z"] == 0.0


def test_convergence_sweep_exact_at_c_one():
    rep = ex.run_convergence_sweep(1.0, 1.0, [10, 20])
    assert all(r["order"] == "exact" for r in rep.queries)


def test_sample_paths_single():
    t, v = ex.sample_paths(1, 1.0, 100, seed=0)
    assert v.shape == (1, 100, 1)
    # one path started at zero: the first value is a small Brownian step
    assert abs(v[0, 0, 0]) < 1.0


def test_cli_commands(tmp_path, capsys):
    out = str(tmp_path)
    assert cli.main(["laplace-limit", "--c", "0.5", "--t", "1", "--out", out]) == 0
    rep = json.load(open(tmp_path / "laplace_limit.json"))
    assert rep["queries"][0]["value"] == pytest.approx(1.587496587885348)
    assert set(rep) >= {"config_hash", "queries", "statistics", "runtime"}
    assert cli.main(["laplace-finite-n", "--n", "30", "--out", out]) == 0
    assert cli.main(["convergence", "--n-list", "10,20,40", "--out", out]) == 0
    assert cli.main(["sample-paths", "--n", "4", "--out", out, "--seed", "3"]) == 0
    rows = list(csv.reader(open(tmp_path / "sample_paths_paths.csv", newline="")))
    assert rows[0] == ["replica", "time", "j", "value"] and len(rows) == 1 + 100 * 4


def test_cli_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"N": -3}')
    assert cli.main(["universality", "--config", str(p)]) == 2
    p.write_text("not json")
    assert cli.main(["universality", "--config", str(p)]) == 2


def test_cli_deterministic_payload(tmp_path):
    args = ["universality", "--n", "6", "--replicas", "120", "--seed", "2"]
    cli.main(args + ["--out", str(tmp_path / "a")])
    cli.main(args + ["--out", str(tmp_path / "b"), "--workers", "2"])
    pa = json.load(open(tmp_path / "a" / "universality.json"))
    pb = json.load(open(tmp_path / "b" / "universality.json"))
    for d in (pa, pb):
        d.pop("runtime")
        d["config"].pop("workers")
    assert pa["queries"] == pb["queries"] and pa["statistics"] == pb["statistics"]
    assert open(tmp_path / "a" / "universality.csv", "rb").read() == open(tmp_path / "b" / "universality.csv", "rb").read()
