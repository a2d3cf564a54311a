import json
import subprocess
import sys
from pathlib import Path

import pytest

from mflocal.cli import build_parser, main

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.json"


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_every_subcommand_takes_common_flags():
    parser = build_parser()
    for cmd in ("train", "sweep-n", "sweep-q", "verify-bounds", "demo-decentralized"):
        ns = parser.parse_args([cmd, "--config", "c.json", "--seed", "18446744073709551615", "--out", "o",
                                "--episodes", "3", "--threads", "2"])
        assert ns.seed == 2**64 - 1 and ns.episodes == 3 and ns.threads == 2
    with pytest.raises(SystemExit):
        parser.parse_args(["train", "--seed", "-1"])
    with pytest.raises(SystemExit):
        parser.parse_args(["explode"])


def test_train_then_sweep_from_checkpoint(tmp_path, capsys):
    code, out = run(capsys, "train", "--config", str(SMOKE), "--out", str(tmp_path), "--seed", "2")
    assert code == 0
    summary = json.loads(out.out)
    ckpt = Path(summary["checkpoint"])
    assert ckpt.exists() and (tmp_path / "training_curve.csv").exists()
    cfg = json.loads(SMOKE.read_text())
    cfg["trainer"].update(train=False, checkpoint=str(ckpt))
    cfg["sweep"]["q_values"] = [cfg["env"]["Q"]]
    cfg_path = tmp_path / "from_ckpt.json"
    cfg_path.write_text(json.dumps(cfg))
    code, out = run(capsys, "sweep-q", "--config", str(cfg_path), "--out", str(tmp_path / "q"), "--json")
    assert code == 0
    assert (tmp_path / "q" / "sweep_q.csv").exists() and (tmp_path / "q" / "sweep_q.json").exists()


def test_sweep_n_and_verify_and_demo(tmp_path, capsys):
    code, _ = run(capsys, "sweep-n", "--config", str(SMOKE), "--out", str(tmp_path), "--episodes", "5")
    assert code == 0 and (tmp_path / "sweep_n.csv").exists()
    assert json.loads((tmp_path / "config.json").read_text())["evaluation"]["episodes"] == 5
    code, out = run(capsys, "verify-bounds", "--config", str(SMOKE), "--out", str(tmp_path))
    assert code == 0 and json.loads(out.out)["lemma_failures"] == 0
    code, out = run(capsys, "demo-decentralized", "--config", str(SMOKE), "--out", str(tmp_path), "--seed", "4")
    result = json.loads(out.out)
    assert code == 0 and result["flows_identical"] and result["matches_compute_flow"]
    assert (tmp_path / "demo_seed4.json").exists()


def test_errors_give_nonzero_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"unexpected": 1}')
    code, out = run(capsys, "sweep-n", "--config", str(bad), "--out", str(tmp_path))
    assert code == 2 and "unknown" in out.err
    cfg = json.loads(SMOKE.read_text())
    cfg["trainer"].update(train=False, checkpoint=str(tmp_path / "none.json"))
    nock = tmp_path / "nock.json"
    nock.write_text(json.dumps(cfg))
    code, out = run(capsys, "sweep-n", "--config", str(nock), "--out", str(tmp_path))
    assert code == 1 and "checkpoint" in out.err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mflocal", "demo-decentralized", "--config", str(SMOKE),
                           "--out", str(tmp_path)], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["policy_saw_only_local_flow"]
