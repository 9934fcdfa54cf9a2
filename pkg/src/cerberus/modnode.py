"""Moderator daemon: key shares, FROST sessions, report voting, HTTP front end.

The daemon never logs identities, encryption randomness or decryption results.
"""

from __future__ import annotations

import json
import logging
import os
import random
import secrets
import socket
import sys
import threading
import time
from dataclasses import dataclass, replace
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable

from cerberus import frost, protocol, wire
from cerberus.errors import EncodingError, ParameterError, RosterError, SessionError
from cerberus.frost import NonceCommitment, SignatureShare, SigningNonces
from cerberus.keys import ModeratorKeys
from cerberus.protocol import (
    DEFAULT_SKEW_SECS,
    ReportRequest,
    TokenRequest,
    Vote,
    VoteOutcome,
    VotePolicy,
    policy_from_spec,
)

log = logging.getLogger(__name__)

SESSION_ID_LEN = 16
DEFAULT_SESSION_TTL = 60.0
AUTH_HEADER = "X-Cerberus-Auth"
MAX_BODY = 64 * 1024 * 1024


@dataclass
class ModeratorConfig:
    index: int
    share_file: str
    listen: str = "127.0.0.1:0"
    policy: str = "always-approve"
    skew_secs: int = DEFAULT_SKEW_SECS
    nonce_pool_size: int = 4096
    session_ttl: float = DEFAULT_SESSION_TTL
    auth_token: str | None = None

    def __post_init__(self):
        if self.nonce_pool_size < 1:
            raise ParameterError("nonce_pool_size must be >= 1")
        if self.skew_secs < 0:
            raise ParameterError("skew_secs must be >= 0")

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "ModeratorConfig":
        path = Path(path)
        raw = json.loads(path.read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**raw)
        if not Path(cfg.share_file).is_absolute():
            cfg = replace(cfg, share_file=str(path.parent / cfg.share_file))
        return cfg


@dataclass
class _Session:
    request: TokenRequest
    nonces: SigningNonces
    commitment: NonceCommitment
    expires: float
    consumed: bool = False


class SessionStore:
    """Round-1 state keyed by opaque session id. Check-and-consume is atomic."""

    def __init__(self, capacity: int, ttl: float = DEFAULT_SESSION_TTL, now: Callable[[], float] = time.monotonic):
        self.capacity = capacity
        self.ttl = ttl
        self._now = now
        self._sessions: dict[bytes, _Session] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._sessions)

    def _purge(self, now: float) -> None:
        expired = [sid for sid, s in self._sessions.items() if s.expires <= now]
        for sid in expired:
            del self._sessions[sid]

    def open(self, request: TokenRequest, nonces: SigningNonces, commitment: NonceCommitment) -> bytes:
        sid = secrets.token_bytes(SESSION_ID_LEN)
        with self._lock:
            now = self._now()
            self._purge(now)
            live = sum(1 for s in self._sessions.values() if not s.consumed)
            if live >= self.capacity:
                raise SessionError("nonce-pool-exhausted")
            self._sessions[sid] = _Session(request, nonces, commitment, now + self.ttl)
        return sid

    def take(self, sid: bytes) -> _Session:
        with self._lock:
            s = self._sessions.get(sid)
            if s is None:
                raise SessionError("unknown-session")
            if s.expires <= self._now():
                del self._sessions[sid]
                raise SessionError("unknown-session")
            if s.consumed:
                raise SessionError("session-consumed")
            s.consumed = True
            return s


class Moderator:
    """One moderator's request handlers, independent of the transport."""

    def __init__(
        self,
        keys: ModeratorKeys,
        policy: VotePolicy | None = None,
        *,
        skew_secs: int = DEFAULT_SKEW_SECS,
        nonce_pool_size: int = 4096,
        session_ttl: float = DEFAULT_SESSION_TTL,
        clock: protocol.Clock = protocol.system_clock,
        rng: random.Random | None = None,
    ):
        self.keys = keys
        self.group = keys.group
        self.index = keys.index
        self.policy = policy or protocol.AlwaysApprove()
        self.skew_secs = skew_secs
        self.clock = clock
        self.rng = rng or random.SystemRandom()
        self.sessions = SessionStore(nonce_pool_size, session_ttl)

    @classmethod
    def from_config(cls, cfg: ModeratorConfig, **kwargs) -> "Moderator":
        keys = ModeratorKeys.from_bytes(Path(cfg.share_file).read_bytes())
        if keys.index != cfg.index:
            raise ParameterError(f"config index {cfg.index} does not match share file index {keys.index}")
        return cls(
            keys,
            policy_from_spec(cfg.policy),
            skew_secs=cfg.skew_secs,
            nonce_pool_size=cfg.nonce_pool_size,
            session_ttl=cfg.session_ttl,
            **kwargs,
        )

    def handle_token_round1(self, req: TokenRequest) -> tuple[bytes, NonceCommitment]:
        reason = protocol.check_token_request(self.group, req, self.keys.enc_pk, self.clock(), self.skew_secs)
        if reason is not None:
            raise SessionError(reason.value)
        nonces, commitment = frost.round1_commit(self.group, self.index, self.rng)
        return self.sessions.open(req, nonces, commitment), commitment

    def handle_token_round2(self, sid: bytes, roster: list[NonceCommitment]) -> SignatureShare:
        session = self.sessions.take(sid)
        try:
            indices = [c.index for c in roster]
            n = self.keys.params.n
            if len(set(indices)) != len(indices) or not all(1 <= i <= n for i in indices):
                raise SessionError("roster-invalid")
            if len(roster) < self.keys.params.k:
                raise SessionError("roster-too-small")
            if session.commitment not in roster:
                raise SessionError("roster-mismatch")
            msg = protocol.request_transcript(self.group, session.request)
            return frost.round2_sign(self.group, self.keys.sign_share, session.nonces, msg, roster)
        except RosterError:
            raise SessionError("roster-mismatch") from None
        finally:
            # single-use even when the roster was refused
            if not session.nonces.used:
                session.nonces.consume()

    def handle_report(self, req: ReportRequest) -> VoteOutcome:
        return protocol.moderator_vote(self.group, req, self.keys.enc_share, self.policy, self.keys.sign_pk)

    # -- JSON-level entry points shared by HTTP and in-memory transports --------

    def round1_json(self, body: Any) -> dict:
        reqs = wire.parse_round1_request(self.group, body)
        results = []
        for req in reqs:
            try:
                sid, commitment = self.handle_token_round1(req)
            except SessionError as exc:
                results.append({"error": exc.reason})
            else:
                results.append({"session": sid.hex(), "commitment": wire.commitment_to_json(self.group, commitment)})
        return {"v": wire.VERSION, "results": results}

    def round2_json(self, body: Any) -> dict:
        items = wire.parse_round2_request(self.group, body)
        results = []
        for sid, roster in items:
            try:
                share = self.handle_token_round2(sid, roster)
            except SessionError as exc:
                results.append({"error": exc.reason})
            else:
                results.append(wire.sig_share_to_json(self.group, share))
        return {"v": wire.VERSION, "results": results}

    def report_json(self, body: Any) -> dict:
        env = wire.parse_report_request(self.group, body)
        outcome = self.handle_report(ReportRequest(env))
        out: dict = {"v": wire.VERSION, "vote": outcome.vote.value}
        if outcome.vote is Vote.APPROVE:
            out["share"] = wire.share_to_json(self.group, outcome.share)
        elif outcome.vote is Vote.REJECT:
            out["error"] = outcome.reason.value
        return out

    ROUTES = {
        "/v1/token/round1": "round1_json",
        "/v1/token/round2": "round2_json",
        "/v1/report": "report_json",
    }

    def dispatch(self, path: str, body: Any) -> dict:
        name = self.ROUTES.get(path)
        if name is None:
            raise KeyError(path)
        return getattr(self, name)(body)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "ModeratorHTTPServer"

    def setup(self):
        super().setup()
        self.connection.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def log_message(self, fmt, *args):
        log.debug("moderator %d: " + fmt, self.server.moderator.index, *args)

    def _send(self, status: int, obj: dict) -> None:
        body = wire.dumps(obj)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        # one write per response; headers and body in separate segments stall on delayed ACKs
        self._headers_buffer.append(b"\r\n" + body)
        self.flush_headers()

    def do_GET(self):
        if self.path == "/v1/health":
            mod = self.server.moderator
            self._send(HTTPStatus.OK, {"v": wire.VERSION, "index": mod.index, "suite": mod.group.name})
        else:
            self._send(HTTPStatus.NOT_FOUND, {"error": "not-found"})

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            self.close_connection = True
            self._send(HTTPStatus.REQUEST_ENTITY_TOO_LARGE, {"error": "too-large"})
            return
        raw = self.rfile.read(length)
        token = self.server.auth_token
        if token is not None and not secrets.compare_digest(self.headers.get(AUTH_HEADER, ""), token):
            self._send(HTTPStatus.UNAUTHORIZED, {"error": "unauthorized"})
            return
        mod = self.server.moderator
        if self.path not in mod.ROUTES:
            self._send(HTTPStatus.NOT_FOUND, {"error": "not-found"})
            return
        try:
            out = mod.dispatch(self.path, wire.loads(raw))
        except (EncodingError, ValueError) as exc:
            log.debug("moderator %d: malformed request: %s", mod.index, exc)
            self._send(HTTPStatus.BAD_REQUEST, {"error": "malformed"})
            return
        except Exception:
            log.exception("moderator %d: internal error", mod.index)
            self._send(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": "internal"})
            return
        self._send(HTTPStatus.OK, out)


class ModeratorHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128

    def handle_error(self, request, client_address):
        exc = sys.exc_info()[1]
        if isinstance(exc, (ConnectionError, TimeoutError)):
            log.debug("client %s went away: %s", client_address, exc)
        else:
            log.exception("error handling request from %s", client_address)

    def __init__(self, moderator: Moderator, address: tuple[str, int], auth_token: str | None = None):
        self.moderator = moderator
        self.auth_token = auth_token
        super().__init__(address, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name=f"moderator-{self.moderator.index}", daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


def run(cfg: ModeratorConfig, ready: Callable[[ModeratorHTTPServer], None] | None = None) -> None:
    """Serve until interrupted."""
    mod = Moderator.from_config(cfg)
    listen = os.environ.get("CERBERUS_LISTEN") or cfg.listen
    host, _, port = listen.rpartition(":")
    server = ModeratorHTTPServer(mod, (host or "127.0.0.1", int(port)), cfg.auth_token)
    log.info("moderator %d listening on %s (policy %r)", mod.index, server.url, mod.policy)
    if ready is not None:
        ready(server)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
