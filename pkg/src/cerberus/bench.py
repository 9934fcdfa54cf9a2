"""Latency benchmark: one OS process per moderator, HTTP in between.

For every (n, batch) cell the harness deals fresh keys, starts n daemons,
warms up, then times

* token creation: ``obtain_tokens`` for a whole batch, reported per token;
* report handling: ``batch`` sequential ``report_and_recover`` calls,
  reported per report.

Timings cover every protocol round trip and exclude daemon start-up.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import yaml

from cerberus.client import Client, HttpTransport
from cerberus.elgamal import Identity
from cerberus.errors import CerberusError
from cerberus.group import DEFAULT_SUITE, Group
from cerberus.keys import Roster, deal_keys
from cerberus.shamir import ThresholdParams

CSV_FIELDS = ["scenario", "n", "k", "batch", "mean_ms", "std_ms", "reps"]
READY_PREFIX = "READY "


@dataclass
class BenchConfig:
    n_values: Sequence[int] = (3, 5, 7)
    batch_sizes: Sequence[int] = (1, 8, 32)
    reps: int = 20
    warmup: int = 3
    out: str | None = "bench.csv"
    k_rule: str = "majority"
    suite: Group = DEFAULT_SUITE
    policy: str = "always-approve"

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.batch_sizes or any(b < 1 for b in self.batch_sizes):
            raise ValueError("batch sizes must be >= 1")
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ValueError("n values must be >= 1")

    def params_for(self, n: int) -> ThresholdParams:
        if self.k_rule == "majority":
            return ThresholdParams.majority(n)
        if self.k_rule == "all":
            return ThresholdParams(n, n)
        return ThresholdParams(int(self.k_rule), n)


@dataclass
class BenchRecord:
    scenario: str
    n: int
    k: int
    batch: int
    mean_ms: float
    std_ms: float
    reps: int


def write_key_dir(out_dir: Path, group: Group, params: ThresholdParams, policy: str = "always-approve",
                  base_port: int = 0) -> Roster:
    """Deal keys and write share files, moderator configs and a roster into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    dealing = deal_keys(group, params)
    addresses = {}
    for m in dealing.moderators:
        share = out_dir / f"moderator-{m.index}.share"
        share.write_bytes(m.to_bytes())
        os.chmod(share, 0o600)
        port = base_port + m.index if base_port else 0
        addresses[m.index] = f"127.0.0.1:{port}"
        cfg = {"index": m.index, "share_file": share.name, "listen": addresses[m.index], "policy": policy}
        (out_dir / f"moderator-{m.index}.json").write_text(json.dumps(cfg, indent=2) + "\n")
    roster = Roster(dealing.setup, addresses if base_port else {})
    (out_dir / "roster.txt").write_text(roster.dumps())
    return roster


class Cluster:
    """n moderator daemons running as child processes."""

    def __init__(self, key_dir: Path, roster: Roster, startup_timeout: float = 30.0):
        self.key_dir = Path(key_dir)
        self.roster = roster
        self.procs: dict[int, subprocess.Popen] = {}
        self.startup_timeout = startup_timeout

    def start(self) -> "Cluster":
        env = dict(os.environ)
        env.pop("CERBERUS_LISTEN", None)
        for i in self.roster.indices:
            self.procs[i] = subprocess.Popen(
                [sys.executable, "-m", "cerberus", "--log-level", "WARNING", "moderator",
                 "--config", str(self.key_dir / f"moderator-{i}.json"),
                 "--listen", "127.0.0.1:0", "--announce"],
                stdout=subprocess.PIPE,
                text=True,
                env=env,
            )
        deadline = time.monotonic() + self.startup_timeout
        for i, proc in self.procs.items():
            line = proc.stdout.readline()
            if not line.startswith(READY_PREFIX) or time.monotonic() > deadline:
                self.close()
                raise CerberusError(f"moderator {i} failed to start: {line.strip()!r}")
            self.roster.addresses[i] = line[len(READY_PREFIX):].strip()
        return self

    def stop(self, index: int) -> None:
        proc = self.procs.get(index)
        if proc and proc.poll() is None:
            proc.terminate()
            proc.wait(timeout=10)

    def close(self) -> None:
        for i in list(self.procs):
            self.stop(i)
            if self.procs[i].stdout:
                self.procs[i].stdout.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def client(self, **kwargs) -> Client:
        return Client(self.roster, HttpTransport(self.roster.addresses), **kwargs)


def _stats(samples: list[float]) -> tuple[float, float]:
    mean = statistics.fmean(samples)
    std = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return mean, std


def bench_cell(client: Client, params: ThresholdParams, batch: int, reps: int, warmup: int) -> list[BenchRecord]:
    ident = Identity.from_label("bench-sender")
    for _ in range(warmup):
        tok, sk = client.obtain_tokens(ident, batch)[0]
        client.report_and_recover(client.seal(b"warmup", tok, sk))

    token_ms = []
    issued = []
    for _ in range(reps):
        t0 = time.perf_counter()
        toks = client.obtain_tokens(ident, batch)
        token_ms.append((time.perf_counter() - t0) * 1000 / batch)
        issued.extend(toks)

    envelopes = [client.seal(f"report {j}".encode(), tok, sk) for j, (tok, sk) in enumerate(issued)]
    report_ms = []
    for r in range(reps):
        chunk = envelopes[r * batch:(r + 1) * batch]
        t0 = time.perf_counter()
        for env in chunk:
            got = client.report_and_recover(env)
            if got != ident:
                raise CerberusError("benchmark recovered the wrong identity")
        report_ms.append((time.perf_counter() - t0) * 1000 / batch)

    n, k = params.n, params.k
    return [
        BenchRecord("token-creation", n, k, batch, *_stats(token_ms), reps),
        BenchRecord("report-handling", n, k, batch, *_stats(report_ms), reps),
    ]


def run_bench(config: BenchConfig, progress=None) -> list[BenchRecord]:
    records: list[BenchRecord] = []
    with tempfile.TemporaryDirectory(prefix="cerberus-bench-") as tmp:
        for n in config.n_values:
            params = config.params_for(n)
            key_dir = Path(tmp) / f"n{n}"
            roster = write_key_dir(key_dir, config.suite, params, config.policy)
            with Cluster(key_dir, roster) as cluster, cluster.client() as client:
                for batch in config.batch_sizes:
                    cell = bench_cell(client, params, batch, config.reps, config.warmup)
                    records.extend(cell)
                    if progress:
                        for rec in cell:
                            progress(rec)
    if config.out:
        write_csv(config.out, records)
    return records


def write_csv(path: str | Path, records: Sequence[BenchRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for rec in records:
            row = asdict(rec)
            row["mean_ms"] = f"{rec.mean_ms:.4f}"
            row["std_ms"] = f"{rec.std_ms:.4f}"
            w.writerow(row)


def read_csv(path: str | Path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        return [
            BenchRecord(r["scenario"], int(r["n"]), int(r["k"]), int(r["batch"]),
                        float(r["mean_ms"]), float(r["std_ms"]), int(r["reps"]))
            for r in csv.DictReader(fh)
        ]


def compose_file(n: int, image: str = "cerberus:latest", base_port: int = 8100) -> str:
    """docker-compose document running one container per moderator."""
    services = {}
    for i in range(1, n + 1):
        services[f"moderator-{i}"] = {
            "image": image,
            "command": ["python", "-m", "cerberus", "moderator",
                        "--config", f"/keys/moderator-{i}.json", "--listen", f"0.0.0.0:{base_port + i}"],
            "volumes": ["./keys:/keys:ro"],
            "ports": [f"{base_port + i}:{base_port + i}"],
        }
    return yaml.safe_dump({"services": services}, sort_keys=False)
