"""Client side: fan requests out to moderators, collect the first k good answers.

Two transports share one interface: :class:`HttpTransport` talks to real
daemons, :class:`InMemoryTransport` calls :class:`~cerberus.modnode.Moderator`
objects directly (still through the JSON codec) so protocol tests need no
sockets.
"""

from __future__ import annotations

import logging
import random
import threading
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import httpx

from cerberus import protocol, wire
from cerberus.elgamal import DecryptionShare, Identity
from cerberus.errors import (
    CerberusError,
    CollectionError,
    EncodingError,
    InsufficientVotesError,
    ShareVerificationError,
    TransportError,
)
from cerberus.frost import NonceCommitment
from cerberus.group import Scalar
from cerberus.keys import Roster
from cerberus.modnode import AUTH_HEADER, Moderator
from cerberus.protocol import MessageEnvelope, ReportRequest, Token, TokenLedger

log = logging.getLogger(__name__)

DEFAULT_DEADLINE = 2.0


class Transport:
    def post(self, index: int, path: str, body: dict, timeout: float) -> Any:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InMemoryTransport(Transport):
    """Loopback to in-process moderators. ``down`` simulates stopped daemons."""

    def __init__(self, moderators: Iterable[Moderator]):
        self.moderators = {m.index: m for m in moderators}
        self.down: set[int] = set()

    def post(self, index, path, body, timeout):
        mod = self.moderators.get(index)
        if mod is None or index in self.down:
            raise TransportError(f"moderator {index} unreachable")
        try:
            reply = mod.dispatch(path, wire.loads(wire.dumps(body)))
        except (EncodingError, ValueError) as exc:
            raise TransportError(f"moderator {index} refused request: malformed ({exc})") from exc
        return wire.loads(wire.dumps(reply))


class HttpTransport(Transport):
    def __init__(self, addresses: dict[int, str], auth_token: str | None = None):
        self.addresses = dict(addresses)
        headers = {AUTH_HEADER: auth_token} if auth_token else {}
        self._http = httpx.Client(
            headers=headers,
            limits=httpx.Limits(max_connections=256, max_keepalive_connections=64),
            trust_env=False,
        )

    def post(self, index, path, body, timeout):
        addr = self.addresses.get(index)
        if addr is None:
            raise TransportError(f"no address for moderator {index}")
        try:
            resp = self._http.post(f"http://{addr}{path}", content=wire.dumps(body), timeout=timeout)
        except httpx.HTTPError as exc:
            raise TransportError(f"moderator {index} unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"moderator {index} answered HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return wire.loads(resp.content)
        except EncodingError as exc:
            raise TransportError(f"moderator {index} sent a non-JSON body") from exc

    def close(self):
        self._http.close()


@dataclass
class _Gathered:
    ok: dict[int, Any]
    failed: dict[int, BaseException]
    rejected: dict[int, Any]
    pending: set[int]


class Client:
    """Token issuance and reporting against one moderator roster."""

    def __init__(
        self,
        roster: Roster,
        transport: Transport,
        *,
        deadline: float = DEFAULT_DEADLINE,
        clock: protocol.Clock = protocol.system_clock,
        rng: random.Random | None = None,
        ledger: TokenLedger | None = None,
    ):
        self.roster = roster
        self.setup = roster.setup
        self.group = roster.group
        self.transport = transport
        self.deadline = deadline
        self.clock = clock
        self.rng = rng or random.SystemRandom()
        self.ledger = ledger or TokenLedger()
        self._pool = ThreadPoolExecutor(max_workers=max(8, 2 * self.setup.params.n))
        self._rng_lock = threading.Lock()

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- fan-out ---------------------------------------------------------------

    def _gather(
        self,
        indices: Iterable[int],
        call: Callable[[int], Any],
        good: Callable[[int, Any], bool],
        need: int,
    ) -> _Gathered:
        """Run ``call`` on every index concurrently and return once ``need``
        results satisfy ``good``, all calls finished, or the deadline passed.

        A failing or misbehaving moderator never stops collection from the others.
        """
        futures: dict[Future, int] = {self._pool.submit(call, i): i for i in indices}
        out = _Gathered({}, {}, {}, set(futures.values()))
        remaining = set(futures)
        while remaining and len(out.ok) < need:
            done, remaining = wait(remaining, timeout=self.deadline, return_when=FIRST_COMPLETED)
            if not done:
                break
            for fut in done:
                i = futures[fut]
                out.pending.discard(i)
                try:
                    value = fut.result()
                except Exception as exc:
                    out.failed[i] = exc
                    continue
                if good(i, value):
                    out.ok[i] = value
                else:
                    out.rejected[i] = value
        return out

    # -- token issuance --------------------------------------------------------

    def _round1(self, index: int, reqs: list[protocol.TokenRequest]) -> list:
        body = wire.round1_request(self.group, reqs)
        reply = self.transport.post(index, "/v1/token/round1", body, self.deadline)
        try:
            return wire.parse_round1_response(self.group, reply, len(reqs))
        except EncodingError as exc:
            raise TransportError(f"moderator {index}: bad round-1 response: {exc}") from exc

    def _round2(self, index: int, items: list[tuple[bytes, list[NonceCommitment]]]) -> list:
        body = wire.round2_request(self.group, items)
        reply = self.transport.post(index, "/v1/token/round2", body, self.deadline)
        try:
            return wire.parse_round2_response(self.group, reply, len(items))
        except EncodingError as exc:
            raise TransportError(f"moderator {index}: bad round-2 response: {exc}") from exc

    def begin_tokens(self, id_src: Identity, batch_size: int) -> list[tuple[protocol.TokenRequest, Scalar]]:
        with self._rng_lock:
            return [
                protocol.begin_token(self.group, id_src, self.setup.enc_pk, self.clock, self.rng)
                for _ in range(batch_size)
            ]

    def obtain_tokens(self, id_src: Identity, batch_size: int = 1) -> list[tuple[Token, Scalar]]:
        """Issue ``batch_size`` tokens for ``id_src``; returns (token, ephemeral secret) pairs.

        One round-1 and one round-2 request per moderator carry the whole batch.
        Moderators that are unreachable or return bad data are excluded and the
        batch is retried with the rest until fewer than k remain.
        """
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        k = self.setup.params.k
        pending = self.begin_tokens(id_src, batch_size)
        reqs = [req for req, _ in pending]
        unreachable: set[int] = set()
        faulty: set[int] = set()
        causes: dict[int, str] = {}

        def round1_ok(i, results):
            return all(isinstance(r, tuple) and r[1].index == i for r in results)

        while True:
            live = [i for i in self.roster.indices if i not in unreachable | faulty]
            if len(live) < k:
                detail = "; ".join(f"{i}: {causes[i]}" for i in sorted(causes))
                raise CollectionError(
                    f"token issuance needs {k} moderators, {len(live)} usable"
                    + (f" [{detail}]" if detail else ""),
                    unreachable,
                    faulty,
                )
            r1 = self._gather(live, lambda i: self._round1(i, reqs), round1_ok, k)
            causes.update({i: str(e) for i, e in r1.failed.items()})
            unreachable |= set(r1.failed)
            faulty |= set(r1.rejected)
            if len(r1.ok) < k:
                unreachable |= r1.pending
                continue
            chosen = list(r1.ok)[:k]
            rosters = [[r1.ok[i][t][1] for i in chosen] for t in range(batch_size)]

            def call2(i):
                return self._round2(i, [(r1.ok[i][t][0], rosters[t]) for t in range(batch_size)])

            def round2_ok(i, results):
                return all(not isinstance(r, str) and r.index == i for r in results)

            r2 = self._gather(chosen, call2, round2_ok, k)
            causes.update({i: str(e) for i, e in r2.failed.items()})
            unreachable |= set(r2.failed)
            faulty |= set(r2.rejected)
            if len(r2.ok) < k:
                unreachable |= r2.pending
                continue
            tokens = []
            bad: set[int] = set()
            for t, (req, sk_eph) in enumerate(pending):
                shares = [r2.ok[i][t] for i in chosen]
                try:
                    tokens.append((protocol.finalize_token(self.setup, req, rosters[t], shares), sk_eph))
                except ShareVerificationError as exc:
                    bad.update(exc.indices)
            if not bad:
                return tokens
            log.warning("discarding signature shares from moderators %s", sorted(bad))
            faulty |= bad

    # -- sending ---------------------------------------------------------------

    def seal(self, message: bytes, token: Token, sk_eph: Scalar) -> MessageEnvelope:
        with self._rng_lock:
            return protocol.seal_message(self.group, message, token, sk_eph, self.ledger, self.rng)

    # -- reporting -------------------------------------------------------------

    def _report(self, index: int, env: MessageEnvelope) -> tuple[str, DecryptionShare | str | None]:
        reply = self.transport.post(index, "/v1/report", wire.report_request(self.group, env), self.deadline)
        vote = reply.get("vote") if isinstance(reply, dict) else None
        extra = {"approve": {"share"}, "reject": {"error"}, "deny": set()}.get(vote)
        try:
            if extra is None:
                raise EncodingError(f"unknown vote {vote!r}")
            o = wire.versioned(reply, {"vote"} | extra)
            if vote == "approve":
                share = wire.share_from_json(self.group, o["share"])
                if share.index != index:
                    raise EncodingError("share index does not match moderator")
                return "approve", share
        except EncodingError as exc:
            raise TransportError(f"moderator {index}: bad report response: {exc}") from exc
        return vote, o.get("error")

    def collect_votes(self, env: MessageEnvelope, need: int | None = None) -> _Gathered:
        """Fan the report out; stop after ``need`` approvals (default k)."""
        return self._gather(
            self.roster.indices,
            lambda i: self._report(i, env),
            lambda i, v: v[0] == "approve",
            need or self.setup.params.k,
        )

    def report_and_recover(self, env: MessageEnvelope) -> Identity:
        """Ask every moderator to vote; recover the sender once k approve.

        Raises :class:`InsufficientVotesError` otherwise. Deny, reject and
        unreachable all count as non-approval.
        """
        params = self.setup.params
        votes = self.collect_votes(env)
        if len(votes.ok) < params.k:
            raise InsufficientVotesError(
                len(votes.ok),
                params.k,
                unreachable=set(votes.failed) | votes.pending,
                denied=[i for i, v in votes.rejected.items() if v[0] == "deny"],
                rejected=[i for i, v in votes.rejected.items() if v[0] == "reject"],
            )
        shares = [v[1] for v in votes.ok.values()][: params.k]
        return protocol.recover_identity(self.group, ReportRequest(env), shares, params)


def connect(roster: Roster, *, auth_token: str | None = None, **kwargs) -> Client:
    missing = [i for i in roster.indices if i not in roster.addresses]
    if missing:
        raise CerberusError(f"roster has no address for moderator(s) {missing}")
    return Client(roster, HttpTransport(roster.addresses, auth_token), **kwargs)
