import json
import math

import numpy as np
import pytest

from eqzlab import cli
from eqzlab import experiments as X

SMALL = {"grid": {"n_r": 120, "n_theta": 120}, "latlong": {"n_lat": 46, "n_lon": 90}, "dictionary_degree": 4}


def cfg(**kw):
    return X.ExperimentConfig.from_dict({**SMALL, **kw})


def _bodies(out):
    return {p.name: X.csv_body(p) for p in sorted(out.glob("*.csv"))}


@pytest.mark.parametrize("bad", [
    {"nonsense": 1},
    {"grid": {"n_r": 10, "bogus": 2}},
    {"weight": {"name": "nope", "params": {}}},
    {"p": [0, 5]},
    {"p": 5},
    {"seed": -1},
    {"seed": 2 ** 64},
    {"k": 0},
    {"samples": 0},
    {"dictionary_degree": 40},
    {"envelope": {"method": "magic"}},
    {"envelope": {"tol": 0}},
    {"region": {"center": [0, 0, 0], "radius": 1}},
])
def test_config_rejected(bad):
    with pytest.raises(X.ConfigError):
        X.ExperimentConfig.from_dict(bad)


def test_config_round_trip_and_hash(tmp_path):
    a = cfg(seed=3, region={"center": [0, 0, -1], "radius": 1.0})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(a.to_dict()))
    b = X.ExperimentConfig.from_json(path)
    assert b.to_dict() == a.to_dict() and b.hash == a.hash
    assert a.replace(out="elsewhere", threads=4, cache="c").hash == a.hash
    assert a.replace(seed=4).hash != a.hash
    path.write_text("{not json")
    with pytest.raises(X.ConfigError):
        X.ExperimentConfig.from_json(path)


def test_k_above_one_rejected():
    with pytest.raises(X.ConfigError):
        X.run_equidistribution(cfg(k=2))


def test_convergence_flat_closed_form():
    rep = X.run_convergence(cfg(p=[5, 10, 20, 40, 80]))
    for p, sup, l1, pmin, ratio, trace in rep.tables["errors"].rows:
        assert abs(sup - math.log(p + 1) / (2 * p)) <= 1e-6
        assert abs(ratio - math.log(p + 1) / (2 * math.log(p))) <= 1e-6
        assert 0.5 < ratio < 0.6
    assert rep.passed


def test_convergence_scaled_fs_exact_envelope():
    rep = X.run_convergence(cfg(weight={"name": "scaled_fs", "params": {"beta": 0.5}}, p=[5, 10, 20, 40, 80]))
    assert rep.claims["rate"]["passed"] and rep.claims["lower_bound"]["passed"]


def test_convergence_needs_holder_certificate(tmp_path):
    path = tmp_path / "w.csv"
    xs = np.linspace(-1.1, 1.1, 5)
    rows = [f"{ch},{a},{b},0.0" for ch in "zw" for a in xs for b in xs]
    path.write_text("chart,re,im,value\n" + "\n".join(rows) + "\n")
    with pytest.raises(X.ExperimentError):
        X.run_convergence(cfg(weight={"csv": str(path)}, p=[5]))


def test_lower_bound_constant():
    C, C_half, ok = X.lower_bound_constant([10, 20, 40, 80], [-1.0, -1.1, -1.2, -1.3])
    assert C == 1.3 and C_half == 1.1 and ok
    C, _, ok = X.lower_bound_constant([10, 20, 40, 80], [-1.0, -1.0, -3.0, -9.0])
    assert not ok
    C, _, ok = X.lower_bound_constant([10, 20], [0.5, 0.2])
    assert C == 0.0 and ok


def test_equidistribution_mass_and_region():
    rep = X.run_equidistribution(cfg(p=[5, 10, 20], samples=20, m=-2))
    for row in rep.tables["summary"].rows:
        p = row[0]
        assert row[7] == row[8] == (p - 2) / p
    assert rep.claims["mass"]["passed"]
    reg = X.run_equidistribution(cfg(p=[5, 10, 20], samples=20, region={"center": [0, 0, -1], "radius": 1.2}))
    assert reg.tables["summary"].meta["dictionary"].startswith("harm-L4-cap")
    assert len(reg.tables["samples"].rows) == 60


def test_deviation_tail_edges():
    with pytest.raises(X.ConfigError):
        X.run_deviation(cfg(p=[10], samples=999))
    with pytest.raises(X.ConfigError):
        X.run_deviation(cfg(p=[10, 20], samples=1000))
    rep = X.run_deviation(cfg(p=[10], samples=1000, lambdas=[0.0, 1e9]))
    tail = [r[1] for r in rep.tables["tail"].rows]
    assert tail == [1.0, 0.0]
    assert rep.claims["exponential_tail"]["degenerate"] and not rep.passed


def test_sequence_deterministic_and_reported_only():
    c = cfg(p=[5, 10, 20], sequences=6, rate_constant=1.0, threads=1)
    a = X.run_sequence(c)
    b = X.run_sequence(c.replace(threads=3))
    assert a.tables["discrepancies"].rows == b.tables["discrepancies"].rows
    assert a.claims["onset"]["asserted"] is False
    assert a.passed
    with pytest.raises(X.ConfigError):
        X.run_sequence(cfg(p=[], rate_constant=1.0))


def test_twisted_flat_kernel():
    rep = X.run_twisted(cfg(p=[5, 10, 20], m=-2, samples=10))
    for row in rep.tables["kernel"].rows:
        p, trace, dim = row[0], row[4], row[5]
        assert dim == p - 1 and abs(trace / dim - 1) <= 1e-9
    with pytest.raises(X.ConfigError):
        X.run_twisted(cfg(p=[3], m=-4))


def test_twisted_flat_kernel_is_constant():
    from eqzlab import bergman as B, weights as W
    from eqzlab.sphere import make_grid
    s = B.build_space(12, -2, W.constant(0.0), make_grid(120, 120))
    b = B.bergman_function(s, make_grid(120, 120))
    assert np.abs(b / 11 - 1).max() <= 1e-10


@pytest.mark.parametrize("name,kw", [
    ("bergman", {"p": [5, 12]}),
    ("envelope", {"weight": {"name": "gauss_bump", "params": {"a": 2.0, "s": 0.7}}}),
    ("equidistribution", {"p": [5, 10], "samples": 15}),
    ("sample-zeros", {"p": [4], "samples": 3}),
])
def test_determinism_threads_and_cache(tmp_path, name, kw):
    c = cfg(**kw)
    runner = X.RUNNERS[name]
    outs = []
    for i, (threads, cache) in enumerate([(1, None), (3, str(tmp_path / "cache")), (2, str(tmp_path / "cache"))]):
        out = tmp_path / f"run{i}"
        runner(c.replace(threads=threads, cache=cache)).write(out)
        outs.append(_bodies(out))
    assert outs[0] and outs[0] == outs[1] == outs[2]


def test_report_headers(tmp_path):
    rep = X.run_bergman(cfg(p=[5]))
    out = rep.write(tmp_path)
    text = (out / "bergman_kernel.csv").read_text()
    for key in ("config_hash", "grid_hash", "weight_hash", "provenance"):
        assert f"# {key} = " in text
    summary = json.loads((out / "bergman_summary.json").read_text())
    assert summary["config_hash"] == rep.config.hash and summary["passed"] is True


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({**SMALL, "p": [5, 10]}))
    assert cli.main(["bergman", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert "bergman.trace: pass" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert cli.main(["bergman", "--config", str(bad)]) == 1
    assert "unknown configuration keys" in capsys.readouterr().err
    fail = tmp_path / "fail.json"
    fail.write_text(json.dumps({**SMALL, "p": [10], "samples": 1000, "lambdas": [0.0, 0.0, 0.0]}))
    assert cli.main(["deviation", "--config", str(fail), "--out", str(tmp_path / "f")]) == 2
    assert cli.main(["envelope", "--config", str(tmp_path / "missing.json")]) == 1


def test_cli_mp_constant(capsys):
    assert cli.main(["mp-constant", "--d", "1", "--k", "2"]) == 0
    assert float(capsys.readouterr().out) == 2 ** -0.5
    assert cli.main(["mp-constant", "--d", "0", "--k", "2"]) == 1


def test_cli_overrides(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["sample-zeros", "--seed", "7", "--threads", "2", "--out", str(out)]) in (0,)
    summary = json.loads((out / "zeros_summary.json").read_text())
    assert summary["config"]["seed"] == 7
