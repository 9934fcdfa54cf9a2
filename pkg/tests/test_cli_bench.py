import json
import subprocess
import sys

import pytest
import yaml

from cerberus import bench, cli, keys
from cerberus.bench import BenchConfig, BenchRecord
from cerberus.modnode import Moderator, ModeratorHTTPServer


def run(capsys, *argv):
    code = cli.main(["--log-level", "WARNING", *argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def keydir(tmp_path, capsys):
    code, out, _ = run(capsys, "keygen", "--k", "2", "--n", "3", "--out", str(tmp_path / "k"), "--self-check")
    assert code == 0 and "self-check" in out
    return tmp_path / "k"


def test_keygen_writes_everything(keydir):
    assert sorted(p.name for p in keydir.iterdir()) == [
        "moderator-1.json", "moderator-1.share", "moderator-2.json",
        "moderator-2.share", "moderator-3.json", "moderator-3.share", "roster.txt",
    ]
    assert (keydir / "moderator-1.share").stat().st_mode & 0o777 == 0o600
    roster = keys.Roster.load(keydir / "roster.txt")
    assert roster.params.k == 2 and roster.addresses == {i: f"127.0.0.1:{8100 + i}" for i in (1, 2, 3)}
    cfg = json.loads((keydir / "moderator-2.json").read_text())
    assert cfg["index"] == 2 and cfg["share_file"] == "moderator-2.share"


def test_keygen_refuses_bad_params_and_overwrites(keydir, capsys):
    code, _, err = run(capsys, "keygen", "--k", "4", "--n", "3", "--out", str(keydir.parent / "x"))
    assert code == 2 and "k <= n" in err
    code, _, err = run(capsys, "keygen", "--k", "2", "--n", "3", "--out", str(keydir))
    assert code == 2 and "--force" in err
    before = (keydir / "roster.txt").read_text()
    code, _, _ = run(capsys, "keygen", "--k", "1", "--n", "2", "--out", str(keydir), "--force", "--suite", "toy23")
    assert code == 0
    assert (keydir / "roster.txt").read_text() != before
    assert not (keydir / "moderator-3.share").exists()


def test_demo_approve(keydir, capsys):
    code, out, _ = run(capsys, "demo", "--roster", str(keydir / "roster.txt"), "--message", "hi there",
                       "--policy", "always-approve", "--identity", "carol")
    assert code == 0
    assert "recovered identity" in out and "(carol)" in out
    assert out.count(": approve") == 3
    assert "x2 " in out and "sig_mod" in out


def test_demo_deny_and_tamper(keydir, capsys, tmp_path):
    code, out, _ = run(capsys, "demo", "--roster", str(keydir / "roster.txt"), "--message", "m",
                       "--policy", "always-deny")
    assert code == 1 and out.count(": deny") == 3 and "insufficient votes: 0 of 2" in out
    saved = tmp_path / "env.json"
    code, out, _ = run(capsys, "demo", "--roster", str(keydir / "roster.txt"), "--message", "m",
                       "--policy", "always-approve", "--tamper", "--save-envelope", str(saved))
    assert code == 1 and "x2-mismatch" in out and saved.exists()


def test_demo_without_addresses_is_a_config_error(tmp_path, capsys):
    run(capsys, "keygen", "--k", "1", "--n", "1", "--out", str(tmp_path), "--base-port", "0")
    code, _, err = run(capsys, "demo", "--roster", str(tmp_path / "roster.txt"), "--message", "m")
    assert code == 2 and "addresses" in err


def test_report_command_against_live_moderators(keydir, capsys, tmp_path):
    saved = tmp_path / "env.json"
    code, _, _ = run(capsys, "demo", "--roster", str(keydir / "roster.txt"), "--message", "report me",
                     "--identity", "dana", "--policy", "always-approve", "--save-envelope", str(saved))
    assert code == 0
    roster = keys.Roster.load(keydir / "roster.txt")
    servers = []
    for i in roster.indices:
        mk = keys.ModeratorKeys.from_bytes((keydir / f"moderator-{i}.share").read_bytes())
        srv = ModeratorHTTPServer(Moderator(mk), ("127.0.0.1", 0))
        srv.start_background()
        roster.addresses[i] = srv.url
        servers.append(srv)
    live = tmp_path / "live-roster.txt"
    live.write_text(roster.dumps())
    try:
        code, out, _ = run(capsys, "report", "--roster", str(live), "--envelope-file", str(saved))
        assert code == 0 and "(dana)" in out
        servers[0].stop()
        servers[1].stop()
        code, out, _ = run(capsys, "report", "--roster", str(live), "--envelope-file", str(saved), "--deadline", "1")
        assert code == 1 and "unreachable: [1, 2]" in out
    finally:
        servers[2].stop()
    code, _, err = run(capsys, "report", "--roster", str(live), "--envelope-file", str(tmp_path / "missing.json"))
    assert code == 2


def test_moderator_bad_config(tmp_path, capsys):
    cfg = tmp_path / "m.json"
    cfg.write_text('{"index": 1, "share_file": "nope.share", "policy": "sometimes"}')
    code, _, err = run(capsys, "moderator", "--config", str(cfg))
    assert code == 2 and "sometimes" in err
    code, _, err = run(capsys, "moderator", "--config", str(tmp_path / "absent.json"))
    assert code == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "cerberus", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("keygen", "moderator", "bench", "demo", "report"):
        assert cmd in out.stdout


def test_bench_config_and_csv(tmp_path):
    assert BenchConfig().params_for(5).k == 3
    assert BenchConfig(k_rule="all").params_for(5).k == 5
    assert BenchConfig(k_rule="2").params_for(5).k == 2
    with pytest.raises(ValueError):
        BenchConfig(reps=0)
    with pytest.raises(ValueError):
        BenchConfig(batch_sizes=())
    recs = [BenchRecord("token-creation", 3, 2, 1, 1.5, 0.25, 4)]
    bench.write_csv(tmp_path / "b.csv", recs)
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "scenario,n,k,batch,mean_ms,std_ms,reps"
    assert bench.read_csv(tmp_path / "b.csv") == recs


def test_compose_file():
    doc = yaml.safe_load(bench.compose_file(3))
    assert sorted(doc["services"]) == ["moderator-1", "moderator-2", "moderator-3"]
    assert doc["services"]["moderator-2"]["ports"] == ["8102:8102"]


@pytest.mark.slow
def test_bench_cli_small_sweep(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    compose = tmp_path / "compose.yaml"
    code, out, _ = run(capsys, "bench", "--n-list", "3", "--batch-list", "1,4", "--reps", "3", "--warmup", "1",
                       "--out", str(out_csv), "--compose-out", str(compose))
    assert code == 0
    rows = bench.read_csv(out_csv)
    assert len(rows) == 4
    assert {(r.scenario, r.batch) for r in rows} == {
        ("token-creation", 1), ("report-handling", 1), ("token-creation", 4), ("report-handling", 4)
    }
    assert all(r.n == 3 and r.k == 2 and r.reps == 3 and r.mean_ms > 0 for r in rows)
    assert yaml.safe_load(compose.read_text())["services"]


@pytest.mark.slow
def test_cluster_stop_makes_moderator_unreachable(tmp_path):
    roster = bench.write_key_dir(tmp_path, bench.DEFAULT_SUITE, bench.ThresholdParams(2, 3))
    with bench.Cluster(tmp_path, roster) as cluster, cluster.client(deadline=2.0) as client:
        assert sorted(roster.addresses) == [1, 2, 3]
        cluster.stop(2)
        (tok, sk), = client.obtain_tokens(bench.Identity.from_label("c"))
        assert client.report_and_recover(client.seal(b"m", tok, sk)).label() == b"c"
