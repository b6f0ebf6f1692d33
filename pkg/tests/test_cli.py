import json
from pathlib import Path

import pytest

from relbgk import __version__
from relbgk.cli import EXIT_CONFIG, main
from relbgk.errors import ConfigError
from relbgk.scenarios import (KINDS, SCHEMAS, list_scenarios, random_zetas, run_scenario,
                              validate_config)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _nr(tmp_path, **params):
    return {"schema_version": 1, "kind": "nr-limit", "seed": 0,
            "output_dir": str(tmp_path), "params": params}


def test_catalog_lists_every_kind_and_field():
    text = list_scenarios()
    for kind in ("closure-verify", "bgk-run", "nr-limit", "ur-limit", "euler-limit",
                 "linearized-diag", "semigroup"):
        assert kind in text
    for schema in SCHEMAS.values():
        for name in schema:
            assert name in text


def test_no_arguments_prints_catalog(capsys):
    assert main([]) == 0
    assert "scenario kinds" in capsys.readouterr().out


def test_unknown_kind_names_kind_and_catalog():
    with pytest.raises(ConfigError) as exc:
        validate_config({"schema_version": 1, "kind": "warp-drive"})
    assert "warp-drive" in str(exc.value) and "closure-verify" in str(exc.value)


def test_field_level_messages(tmp_path):
    raw = _nr(tmp_path, eps=[0.1], n=-1.0, bogus=3)
    raw["seed"] = -4
    with pytest.raises(ConfigError) as exc:
        validate_config(raw)
    msg = str(exc.value)
    for token in ("params.eps", "params.n", "params.bogus", "seed"):
        assert token in msg


def test_schema_version_required(tmp_path):
    raw = _nr(tmp_path)
    raw["schema_version"] = 2
    with pytest.raises(ConfigError, match="schema_version"):
        validate_config(raw)


def test_cross_field_checks(tmp_path):
    raw = {"schema_version": 1, "kind": "bgk-run",
           "params": {"x_cells": 10, "length": 1.0, "dt": 0.5}}
    with pytest.raises(ConfigError, match="dt"):
        validate_config(raw)
    raw = {"schema_version": 1, "kind": "semigroup", "params": {"n_nodes": 20}}
    with pytest.raises(ConfigError, match="n_nodes"):
        validate_config(raw)


def test_defaults_filled_and_hash_stable(tmp_path):
    a = validate_config(_nr(tmp_path))
    b = validate_config(_nr(tmp_path / "elsewhere"))
    assert a.params["eps"] == [0.3, 0.2, 0.15, 0.1, 0.05]
    assert a.sha256() == b.sha256()
    c = validate_config(dict(_nr(tmp_path), seed=3))
    assert c.sha256() != a.sha256()


def test_run_is_deterministic(tmp_path):
    r1 = run_scenario(_nr(tmp_path / "a"))
    r2 = run_scenario(_nr(tmp_path / "b"))
    assert r1.passed and r1.exit_code == 0
    for name in ("nr_ladder.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_contents(tmp_path):
    res = run_scenario(_nr(tmp_path))
    man = json.loads(res.manifest.read_text())
    assert man["library_version"] == __version__
    assert man["prng"] == "numpy PCG64" and man["seed"] == 0
    assert len(man["config_sha256"]) == 64
    assert set(man["outputs"]) == {"nr_ladder.csv"}
    assert man["tolerances"]["order_D"]["limit"] == 1.7
    assert man["status"] == "pass"


def test_seeded_scenarios_reproduce(tmp_path):
    raw = {"schema_version": 1, "kind": "semigroup",
           "params": {"n_nodes": 6, "half_width": 5.0, "n_zeta": 2, "t_end": 1.0, "n_times": 4}}
    r1 = run_scenario(raw, output_dir=tmp_path / "a", seed=7)
    r2 = run_scenario(raw, output_dir=tmp_path / "b", seed=7)
    r3 = run_scenario(raw, output_dir=tmp_path / "c", seed=8)
    a, b, c = ((tmp_path / d / "norms.csv").read_bytes() for d in "abc")
    assert r1.passed and r2.passed and r3.passed
    assert a == b and a != c


def test_bgk_run_writes_snapshots(tmp_path):
    from relbgk.io import load_field
    raw = {"schema_version": 1, "kind": "bgk-run",
           "params": {"half_width": 6.0, "n_nodes": 8, "t_end": 0.5, "dt": 0.1}}
    res = run_scenario(raw, output_dir=tmp_path)
    assert res.passed
    f = load_field(tmp_path / "final.rbgk")
    assert f.values.shape == (1, 512)
    lines = (tmp_path / "ledger.csv").read_text().splitlines()
    assert len(lines) == 7 and lines[0].startswith("t,mass,energy")


def test_cli_run_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_nr(tmp_path / "ignored")))
    assert main([str(cfg), "--out", str(tmp_path / "o"), "--seed", "5"]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["seed"] == 5
    assert not (tmp_path / "ignored").exists()
    assert "PASS" in capsys.readouterr().out


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_nr(tmp_path, n="one")))
    assert main([str(cfg)]) == EXIT_CONFIG
    assert "params.n" in capsys.readouterr().err
    assert main([str(tmp_path / "missing.json")]) == EXIT_CONFIG
    cfg.write_text("{not json")
    assert main([str(cfg)]) == EXIT_CONFIG


def test_verify_only(capsys):
    assert main(["--verify-only"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "P_idempotence" in out


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = validate_config(json.loads(path.read_text()))
    assert cfg.kind in KINDS


def test_every_kind_has_a_shipped_config():
    kinds = {json.loads(p.read_text())["kind"] for p in CONFIGS.glob("*.json")}
    assert kinds == set(KINDS)


def test_random_zetas_respect_bound():
    import numpy as np
    z = random_zetas(np.random.Generator(np.random.PCG64(0)), 50, 10.0)
    assert z.shape == (50, 3) and np.all(np.linalg.norm(z, axis=1) <= 10.0)
