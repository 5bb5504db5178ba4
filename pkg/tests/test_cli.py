import json
from pathlib import Path

import pytest

from rkit import __version__
from rkit.cli import main
from rkit.errors import ConfigError, FamilyError
from rkit.experiments import family_from_config, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def family_obj(schedule):
    obj = json.loads((CONFIGS / "family.json").read_text())
    obj["lattices"]["family"]["schedule"] = schedule
    return obj


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_basis_task_returns_adapted_vector(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "basis", "--config", str(CONFIGS / "basis.json"), "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((Path(json.loads(out)["dir"]) / "report.json").read_text())
    assert rep["results"]["basis"][1] == [0, 5, 1] and rep["results"]["norms"] == [1, 5]


def test_report_carries_version_and_hash_but_no_clock(tmp_path, capsys):
    run_cli(capsys, "basis", "--config", str(CONFIGS / "basis.json"), "--out", str(tmp_path))
    (d,) = list(tmp_path.iterdir())
    rep = json.loads((d / "report.json").read_text())
    assert rep["version"] == __version__ and rep["config_hash"] == d.name
    assert not any("clock" in k for k in rep) and "wall_clock_seconds" in json.loads((d / "timing.json").read_text())


def test_hash_is_deterministic_and_seed_sensitive():
    a = load_config(CONFIGS / "basis.json", "basis")
    b = load_config(CONFIGS / "basis.json", "basis")
    c = load_config(CONFIGS / "basis.json", "basis", seed=7)
    assert a.hash == b.hash != c.hash


def test_free_weakkam_passes(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "weakkam", "--config", str(CONFIGS / "weakkam_free.json"), "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["passed"]


def test_malformed_json_exits_two_without_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, '{"schema": "rkit.experiment/1", ')
    out_dir = tmp_path / "out"
    code, _, err = run_cli(capsys, "basis", "--config", cfg, "--out", str(out_dir))
    assert code == 2 and not out_dir.exists()
    assert json.loads(err.strip().splitlines()[-1])["error"] == "validation"


def test_unknown_key_and_missing_file(tmp_path, capsys):
    obj = json.loads((CONFIGS / "basis.json").read_text())
    obj["bogus"] = 1
    assert run_cli(capsys, "basis", "--config", write(tmp_path, obj), "--out", str(tmp_path))[0] == 2
    assert run_cli(capsys, "basis", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path))[0] == 2
    assert run_cli(capsys, "nonsense", "--config", str(CONFIGS / "basis.json"))[0] == 2


def test_task_mismatch_is_config_error():
    obj = json.loads((CONFIGS / "basis.json").read_text())
    with pytest.raises(ConfigError):
        parse_config(obj, "slow")


def test_member_not_exceeding_strong_norm(tmp_path, capsys):
    with pytest.raises(FamilyError):
        family_from_config(parse_config(family_obj([1, 5]), "rescale-scan"))
    code, _, err = run_cli(capsys, "rescale-scan", "--config", write(tmp_path, family_obj([1, 5])),
                           "--out", str(tmp_path / "o"))
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["type"] == "FamilyError"


def test_empty_schedule_gives_empty_family():
    members, _ = family_from_config(parse_config(family_obj([]), "rescale-scan"))
    assert members == []


def test_family_members_all_certified():
    members, kappa = family_from_config(parse_config(family_obj([5, 11, 23, 47]), "rescale-scan"))
    assert [m.mu for m in members] == [5, 11, 23, 47] and kappa > 1
    assert [m.basis.vectors[1] for m in members] == [(0, mu, 1) for mu in (5, 11, 23, 47)]


def test_rescale_scan_cli(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "rescale-scan", "--config", str(CONFIGS / "family.json"), "--out", str(tmp_path))
    assert code == 0
    d = Path(json.loads(out)["dir"])
    assert (d / "rescale_scan.csv").exists()
