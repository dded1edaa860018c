import json
from pathlib import Path

import pytest

from softbolt import io
from softbolt.cli import dispatch
from softbolt.config import DEFAULTS, from_dict, parse_config
from softbolt.errors import ParseError, ValidationError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SMALL_RUN = """
seed = 3
[domain]
kind = "slab"
[grid]
nx = 8
nv = 6
vmax = 4.0
[collision]
mode = "damping"
[bc]
kind = "{bc}"
[time]
dt = 0.02
n_steps = 20
sample_every = 2
[initial]
kind = "random"
"""


# ---------------------------------------------------------------- config
def test_minimal_config_fills_defaults(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 5\n")
    cfg = parse_config(p)
    assert cfg.seed == 5
    assert cfg["grid"] == DEFAULTS["grid"]
    assert json.loads(cfg.echo())["weights"]["q"] == 0.5
    assert len(cfg.hash()) == 64


def test_weight_set_violation_cites_admissible_set():
    with pytest.raises(ValidationError) as exc:
        from_dict({"weights": {"q": 1.0, "theta": 2.0}})
    assert any("A_(q,theta)" in v for v in exc.value.violations)


def test_vartheta_bound_is_strict():
    # -theta / varrho = 2 at theta = 2, varrho = -1
    with pytest.raises(ValidationError) as exc:
        from_dict({"weights": {"vartheta": 2.0}})
    assert any("vartheta" in v for v in exc.value.violations)
    from_dict({"weights": {"vartheta": 1.99}})


def test_all_violations_reported_together():
    with pytest.raises(ValidationError) as exc:
        from_dict({"bogus": 1, "grid": {"nv": 7, "colour": "red"}, "collision": {"varrho": 0.5},
                   "time": {"dt": -1.0}, "collision_extra": {}})
    text = "\n".join(exc.value.violations)
    for needle in ("bogus", "grid.colour", "grid.nv", "varrho", "time.dt", "collision_extra"):
        assert needle in text


def test_interpolation_key_is_validated():
    assert from_dict({"collision": {"interpolation": "direct"}})["collision"]["interpolation"] == "direct"
    with pytest.raises(ValidationError):
        from_dict({"collision": {"interpolation": "spline"}})


def test_parse_errors_carry_location(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n "grid": }')
    with pytest.raises(ParseError, match="line 2"):
        parse_config(bad)
    bad_toml = tmp_path / "bad.toml"
    bad_toml.write_text("seed = 1\n[grid\n")
    with pytest.raises(ParseError, match="line 2"):
        parse_config(bad_toml)
    with pytest.raises(ParseError):
        parse_config(tmp_path / "missing.toml")
    other = tmp_path / "c.yaml"
    other.write_text("seed: 1")
    with pytest.raises(ParseError):
        parse_config(other)


def test_shipped_scenarios_parse():
    files = sorted(SCENARIOS.glob("*.toml")) + sorted(SCENARIOS.glob("*.json"))
    assert files
    for f in files:
        parse_config(f)


# ------------------------------------------------------------------- cli
def test_exit_codes(tmp_path, capsys):
    assert dispatch(["frobnicate"]) == 2
    assert dispatch([]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[weights]\nq = 1.0\n")
    assert dispatch(["run", "--config", str(bad)]) == 2
    assert "A_(q,theta)" in capsys.readouterr().err
    assert dispatch(["fit", "--in", str(tmp_path / "nope.ndjson")]) == 1
    ball = tmp_path / "ball.toml"
    ball.write_text('[domain]\nkind = "ball"\n')
    assert dispatch(["run", "--config", str(ball)]) == 1


def _run_cli(tmp_path, name, bc="diffuse"):
    cfg = tmp_path / f"{name}.toml"
    cfg.write_text(SMALL_RUN.format(bc=bc))
    out = tmp_path / name
    assert dispatch(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_run_fit_audit_pipeline(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    out = _run_cli(tmp_path, "a")
    diag = out / "diagnostics.ndjson"
    meta, recs = io.read_ndjson(diag)
    assert set(meta) >= {"version", "config_hash", "seed", "timestamp"}
    assert meta["seed"] == 3 and meta["timestamp"] == "2023-11-14T22:13:20Z"
    assert len(recs) == 11
    head, data = io.read_field(out / "field.bin")
    assert head["metadata"]["config_hash"] == meta["config_hash"] and data.shape == (8, 216)
    report = tmp_path / "fit.json"
    assert dispatch(["fit", "--in", str(diag), "--norm", "l2", "--window", "0", "1", "--out", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["metadata"]["config_hash"] == meta["config_hash"]
    assert 0 < rep["rho_hat"] <= 1 and rep["norm_kind"] == "l2"
    # damping removes mass, so a strict conservation audit must fail
    assert dispatch(["audit", "--in", str(diag), "--bc", "diffuse", "--out", str(tmp_path / "au.json")]) == 1


def test_outputs_are_bit_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    a = _run_cli(tmp_path, "a", "specular")
    b = _run_cli(tmp_path, "b", "specular")
    for name in ("diagnostics.ndjson", "field.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    c1, c2 = tmp_path / "c1.ndjson", tmp_path / "c2.ndjson"
    for c in (c1, c2):
        assert dispatch(["cycles", "--k", "2", "4", "--samples", "2000", "--seed", "7", "--out", str(c)]) == 0
    assert c1.read_bytes() == c2.read_bytes()
    _, recs = io.read_ndjson(c1)
    assert [r["k"] for r in recs] == [2, 4] and recs[0]["seed"] == 7


def test_geom_trace_and_kernel(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    g = tmp_path / "g.json"
    assert dispatch(["geom", "--domain", "slab", "--x", "0.1", "--v", "2,1,0", "--out", str(g)]) == 0
    rep = json.loads(g.read_text())
    assert rep["exit_time"] == pytest.approx(0.3) and rep["metadata"]["timestamp"] == "1970-01-01T00:00:00Z"
    t = tmp_path / "t.ndjson"
    assert dispatch(["trace", "--domain", "ball", "--x", "0,0,0", "--v", "1,0,0", "--t", "5", "--out", str(t)]) == 0
    meta, recs = io.read_ndjson(t)
    assert meta["terminated_by"] == "reached_time_zero" and len(recs) == 4
    k = tmp_path / "k.json"
    csv = tmp_path / "nu.csv"
    assert dispatch(["kernel", "--nv", "6", "--vmax", "4", "--n-omega", "32", "--split-eps", "0.3",
                     "--csv", str(csv), "--out", str(k)]) == 0
    rep = json.loads(k.read_text())
    assert rep["nodes"] == 216 and rep["interpolation"] == "direct"  # h * V_max = 6.4
    assert max(abs(x) for x in rep["null_eigenvalues"]) < 1e-10
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("# {") and lines[1].startswith("index,") and len(lines) == 218
