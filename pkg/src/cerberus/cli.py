"""Command-line entry point: ``cerberus {keygen,moderator,bench,demo,report}``.

Exit codes: 0 success, 1 protocol failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from cerberus import bench, keys, protocol, wire
from cerberus.client import Client, HttpTransport
from cerberus.elgamal import Identity
from cerberus.errors import CerberusError, EncodingError, InsufficientVotesError, ParameterError
from cerberus.group import SUITES, get_suite
from cerberus.modnode import Moderator, ModeratorConfig, ModeratorHTTPServer, run
from cerberus.shamir import ThresholdParams

EXIT_OK, EXIT_PROTOCOL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_keygen(args) -> int:
    out = Path(args.out)
    try:
        params = ThresholdParams(args.k, args.n)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    existing = [p for p in out.glob("moderator-*")] + ([out / "roster.txt"] if (out / "roster.txt").exists() else [])
    if existing and not args.force:
        raise ConfigError(f"{out} already holds key material; pass --force to overwrite")
    for p in existing:
        p.unlink()
    group = get_suite(args.suite)
    roster = bench.write_key_dir(out, group, params, args.policy, base_port=args.base_port)
    if args.self_check:
        loaded = [keys.ModeratorKeys.from_bytes((out / f"moderator-{i}.share").read_bytes()) for i in roster.indices]
        keys.self_check(keys.Roster.load(out / "roster.txt").setup, loaded)
        print("self-check: shares reconstruct both group keys")
    print(f"wrote {params.n} share files and roster.txt to {out} (k={params.k}, n={params.n}, suite {group.name})")
    return EXIT_OK


def cmd_moderator(args) -> int:
    try:
        cfg = ModeratorConfig.load(
            args.config,
            listen=args.listen,
            share_file=args.share_file,
            policy=args.policy,
            skew_secs=args.skew_secs,
        )
        protocol.policy_from_spec(cfg.policy)
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad moderator config: {exc}") from None

    def ready(server):
        if args.announce:
            print(bench.READY_PREFIX + server.url, flush=True)

    run(cfg, ready)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.compose_out:
        Path(args.compose_out).write_text(bench.compose_file(max(args.n_list)))
    config = bench.BenchConfig(
        n_values=args.n_list,
        batch_sizes=args.batch_list,
        reps=args.reps,
        warmup=args.warmup,
        out=args.out,
        k_rule=args.k_rule,
        suite=get_suite(args.suite),
    )

    def progress(rec):
        print(f"{rec.scenario:16s} n={rec.n} k={rec.k} batch={rec.batch:<4d} "
              f"{rec.mean_ms:8.3f} ms ± {rec.std_ms:.3f}", flush=True)

    bench.run_bench(config, progress)
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_roster(path) -> keys.Roster:
    try:
        return keys.Roster.load(path)
    except (OSError, EncodingError, ParameterError) as exc:
        raise ConfigError(f"cannot load roster {path}: {exc}") from None


def _local_moderators(roster: keys.Roster, roster_path: Path, policy: str) -> list[ModeratorHTTPServer]:
    servers = []
    for i in roster.indices:
        share = roster_path.parent / f"moderator-{i}.share"
        try:
            mk = keys.ModeratorKeys.from_bytes(share.read_bytes())
        except (OSError, EncodingError) as exc:
            raise ConfigError(f"--policy needs share files next to the roster: {exc}") from None
        srv = ModeratorHTTPServer(Moderator(mk, protocol.policy_from_spec(policy)), ("127.0.0.1", 0))
        srv.start_background()
        roster.addresses[i] = srv.url
        servers.append(srv)
    return servers


def cmd_demo(args) -> int:
    roster_path = Path(args.roster)
    roster = _load_roster(roster_path)
    group = roster.group
    servers = _local_moderators(roster, roster_path, args.policy) if args.policy else []
    try:
        if len(roster.addresses) < len(roster.indices):
            raise ConfigError("roster lacks moderator addresses; start daemons or pass --policy")
        with Client(roster, HttpTransport(roster.addresses, args.auth_token), deadline=args.deadline) as client:
            return _demo(client, group, roster, args)
    finally:
        for srv in servers:
            srv.stop()


def _demo(client: Client, group, roster, args) -> int:
    k, n = roster.params.k, roster.params.n
    ident = Identity.from_label(args.identity)
    print(f"== moderators: k={k} of n={n}, suite {group.name}")
    print(f"sender identity      {ident.value.hex()}  ({args.identity})")

    (token, sk_eph), = client.obtain_tokens(ident, 1)
    print("== token issued (2 rounds, FROST)")
    print(f"x1.c1                {group.encode_element(token.x1.c1).hex()}")
    print(f"x1.c2                {token.x1.c2.hex()}")
    print(f"pk_eph               {group.encode_element(token.pk_eph).hex()}")
    print(f"issued_at            {token.issued_at}")
    print(f"sig_mod              {token.sig_mod.to_bytes(group).hex()}")

    message = args.message.encode()
    env = client.seal(message, token, sk_eph)
    print("== message sealed")
    print(f"message              {message!r}")
    print(f"x2                   {env.x2.hex()}")
    print(f"sig_src              {env.sig_src.to_bytes(group).hex()}")

    if args.tamper:
        env = protocol.MessageEnvelope(message + b" (edited)", env.token, env.x2, env.sig_src)
        print(f"== tampered: message replaced with {env.message!r}")
    if args.save_envelope:
        Path(args.save_envelope).write_text(json.dumps(wire.envelope_to_json(group, env), indent=2) + "\n")
        print(f"envelope written to {args.save_envelope}")

    reason = protocol.verify_envelope(group, env, roster.setup.sign_pk)
    print(f"== local envelope check: {'ok' if reason is None else 'rejected (' + reason.value + ')'}")

    print("== report sent to all moderators")
    votes = client.collect_votes(env, need=n)
    for i in roster.indices:
        if i in votes.ok:
            print(f"moderator {i}: approve   d={group.encode_element(votes.ok[i][1].d).hex()}")
        elif i in votes.rejected:
            kind, detail = votes.rejected[i]
            print(f"moderator {i}: {kind}" + (f" ({detail})" if detail else ""))
        elif i in votes.failed:
            print(f"moderator {i}: unreachable")
        else:
            print(f"moderator {i}: no answer before deadline")
    if reason is not None:
        print(f"envelope rejected: {reason.value}")
        return EXIT_PROTOCOL
    if len(votes.ok) < k:
        print(f"insufficient votes: {len(votes.ok)} of {k}")
        return EXIT_PROTOCOL
    shares = [v[1] for v in votes.ok.values()][:k]
    recovered = protocol.recover_identity(group, protocol.ReportRequest(env), shares, roster.params)
    print(f"recovered identity   {recovered.value.hex()}  ({recovered})")
    return EXIT_OK if recovered == ident else EXIT_PROTOCOL


def cmd_report(args) -> int:
    roster = _load_roster(args.roster)
    try:
        env = wire.envelope_from_json(roster.group, json.loads(Path(args.envelope_file).read_text()))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read envelope: {exc}") from None
    with Client(roster, HttpTransport(roster.addresses, args.auth_token), deadline=args.deadline) as client:
        try:
            ident = client.report_and_recover(env)
        except InsufficientVotesError as exc:
            print(str(exc))
            return EXIT_PROTOCOL
    print(f"recovered identity {ident.value.hex()} ({ident})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cerberus", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("keygen", help="deal key shares to n moderators")
    kg.add_argument("--k", type=int, required=True)
    kg.add_argument("--n", type=int, required=True)
    kg.add_argument("--out", required=True)
    kg.add_argument("--force", action="store_true")
    kg.add_argument("--suite", default="ristretto255", choices=sorted(SUITES))
    kg.add_argument("--policy", default="always-approve")
    kg.add_argument("--base-port", type=int, default=8100, help="moderator i listens on base+i (0: unset)")
    kg.add_argument("--self-check", action="store_true")
    kg.set_defaults(func=cmd_keygen)

    md = sub.add_parser("moderator", help="run one moderator daemon")
    md.add_argument("--config", required=True)
    md.add_argument("--listen")
    md.add_argument("--share-file")
    md.add_argument("--policy")
    md.add_argument("--skew-secs", type=int)
    md.add_argument("--announce", action="store_true", help="print 'READY host:port' once listening")
    md.set_defaults(func=cmd_moderator)

    bn = sub.add_parser("bench", help="token/report latency sweep, CSV output")
    bn.add_argument("--n-list", type=_int_list, default=[3, 5, 7])
    bn.add_argument("--batch-list", type=_int_list, default=[1, 8, 32])
    bn.add_argument("--reps", type=int, default=20)
    bn.add_argument("--warmup", type=int, default=3)
    bn.add_argument("--k-rule", default="majority", help="majority | all | <int>")
    bn.add_argument("--suite", default="ristretto255", choices=sorted(SUITES))
    bn.add_argument("--out", default="bench.csv")
    bn.add_argument("--compose-out", help="also write a docker-compose file for the largest n")
    bn.set_defaults(func=cmd_bench)

    for name, func, help_ in (("demo", cmd_demo, "walk through issuance, sending and reporting"),
                              ("report", cmd_report, "report a saved envelope")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--roster", required=True)
        sp.add_argument("--deadline", type=float, default=2.0)
        sp.add_argument("--auth-token")
        sp.set_defaults(func=func)
        if name == "demo":
            sp.add_argument("--message", required=True)
            sp.add_argument("--identity", default="demo-user")
            sp.add_argument("--policy", help="run local moderators from the roster's share files with this policy")
            sp.add_argument("--tamper", action="store_true")
            sp.add_argument("--save-envelope")
        else:
            sp.add_argument("--envelope-file", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    logging.getLogger("httpx").setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CerberusError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
