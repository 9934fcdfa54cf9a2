"""JSON wire format for the moderator endpoints (version 1).

Binary values are lowercase hex of their canonical byte encodings. Objects
with missing or unknown fields are rejected with :class:`EncodingError`.

Endpoints and bodies::

    POST /v1/token/round1
      {"v": 1, "requests": [TokenRequest, ...]}
      -> {"v": 1, "results": [{"session": hex, "commitment": Commitment}
                              | {"error": reason}, ...]}
    POST /v1/token/round2
      {"v": 1, "items": [{"session": hex, "roster": [Commitment, ...]}, ...]}
      -> {"v": 1, "results": [{"index": int, "z": hex} | {"error": reason}, ...]}
    POST /v1/report
      {"v": 1, "envelope": Envelope}
      -> {"v": 1, "vote": "approve", "share": {"index": int, "d": hex}}
       | {"v": 1, "vote": "deny"}
       | {"v": 1, "vote": "reject", "error": reason}

    TokenRequest = {"id_src": hex, "x1": hex, "r": hex, "pk_eph": hex, "issued_at": int}
    Commitment   = {"index": int, "D": hex, "E": hex}
    Envelope     = {"message": hex, "token": Token, "x2": hex, "sig_src": hex}
    Token        = {"x1": hex, "pk_eph": hex, "issued_at": int, "sig_mod": hex}

Whole-request failures answer with an HTTP error status and ``{"error": code}``.
"""

from __future__ import annotations

import json
from typing import Any

from cerberus.elgamal import DecryptionShare, Identity, IdentityCiphertext
from cerberus.errors import EncodingError
from cerberus.frost import NonceCommitment, Signature, SignatureShare
from cerberus.group import Group
from cerberus.protocol import MessageEnvelope, Token, TokenRequest

VERSION = 1


def _obj(value: Any, required: set[str], optional: frozenset[str] = frozenset()) -> dict:
    if not isinstance(value, dict):
        raise EncodingError("expected a JSON object")
    keys = set(value)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise EncodingError(f"missing field(s) {sorted(missing)}")
    if unknown:
        raise EncodingError(f"unknown field(s) {sorted(unknown)}")
    return value


def _hex(value: Any) -> bytes:
    if not isinstance(value, str) or value != value.lower():
        raise EncodingError("expected lowercase hex string")
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise EncodingError("invalid hex") from None


def _int(value: Any, lo: int = 0, hi: int = 2**64 - 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not lo <= value <= hi:
        raise EncodingError("expected an integer in range")
    return value


def _list(value: Any, max_len: int = 100_000) -> list:
    if not isinstance(value, list) or len(value) > max_len:
        raise EncodingError("expected a JSON array")
    return value


def versioned(body: Any, required: set[str]) -> dict:
    obj = _obj(body, required | {"v"})
    if obj["v"] != VERSION:
        raise EncodingError(f"unsupported wire version {obj['v']!r}")
    return obj


def loads(raw: bytes) -> Any:
    try:
        return json.loads(raw)
    except (ValueError, UnicodeDecodeError):
        raise EncodingError("body is not JSON") from None


def dumps(obj: Any) -> bytes:
    return json.dumps(obj, separators=(",", ":")).encode()


# -- objects -------------------------------------------------------------------


def token_request_to_json(group: Group, req: TokenRequest) -> dict:
    return {
        "id_src": req.id_src.value.hex(),
        "x1": req.x1.to_bytes(group).hex(),
        "r": group.encode_scalar(req.r).hex(),
        "pk_eph": group.encode_element(req.pk_eph).hex(),
        "issued_at": req.issued_at,
    }


def token_request_from_json(group: Group, value: Any) -> TokenRequest:
    o = _obj(value, {"id_src", "x1", "r", "pk_eph", "issued_at"})
    return TokenRequest(
        Identity(_hex(o["id_src"])),
        IdentityCiphertext.from_bytes(group, _hex(o["x1"])),
        group.decode_scalar(_hex(o["r"])),
        group.decode_element(_hex(o["pk_eph"])),
        _int(o["issued_at"]),
    )


def commitment_to_json(group: Group, c: NonceCommitment) -> dict:
    return {"index": c.index, "D": group.encode_element(c.D).hex(), "E": group.encode_element(c.E).hex()}


def commitment_from_json(group: Group, value: Any) -> NonceCommitment:
    o = _obj(value, {"index", "D", "E"})
    return NonceCommitment(
        _int(o["index"], 1, 2**31),
        group.decode_element(_hex(o["D"])),
        group.decode_element(_hex(o["E"])),
    )


def token_to_json(group: Group, t: Token) -> dict:
    return {
        "x1": t.x1.to_bytes(group).hex(),
        "pk_eph": group.encode_element(t.pk_eph).hex(),
        "issued_at": t.issued_at,
        "sig_mod": t.sig_mod.to_bytes(group).hex(),
    }


def token_from_json(group: Group, value: Any) -> Token:
    o = _obj(value, {"x1", "pk_eph", "issued_at", "sig_mod"})
    return Token(
        IdentityCiphertext.from_bytes(group, _hex(o["x1"])),
        group.decode_element(_hex(o["pk_eph"])),
        _int(o["issued_at"]),
        Signature.from_bytes(group, _hex(o["sig_mod"])),
    )


def envelope_to_json(group: Group, env: MessageEnvelope) -> dict:
    return {
        "message": env.message.hex(),
        "token": token_to_json(group, env.token),
        "x2": env.x2.hex(),
        "sig_src": env.sig_src.to_bytes(group).hex(),
    }


def envelope_from_json(group: Group, value: Any) -> MessageEnvelope:
    o = _obj(value, {"message", "token", "x2", "sig_src"})
    return MessageEnvelope(
        _hex(o["message"]),
        token_from_json(group, o["token"]),
        _hex(o["x2"]),
        Signature.from_bytes(group, _hex(o["sig_src"])),
    )


def share_to_json(group: Group, s: DecryptionShare) -> dict:
    return {"index": s.index, "d": group.encode_element(s.d).hex()}


def share_from_json(group: Group, value: Any) -> DecryptionShare:
    o = _obj(value, {"index", "d"})
    return DecryptionShare(_int(o["index"], 1, 2**31), group.decode_element(_hex(o["d"]), allow_identity=True))


def sig_share_to_json(group: Group, s: SignatureShare) -> dict:
    return {"index": s.index, "z": group.encode_scalar(s.z).hex()}


def sig_share_from_json(group: Group, value: Any) -> SignatureShare:
    o = _obj(value, {"index", "z"})
    return SignatureShare(_int(o["index"], 1, 2**31), group.decode_scalar(_hex(o["z"])))


# -- request/response bodies ---------------------------------------------------


def round1_request(group: Group, reqs) -> dict:
    return {"v": VERSION, "requests": [token_request_to_json(group, r) for r in reqs]}


def parse_round1_request(group: Group, body: Any) -> list[TokenRequest]:
    o = versioned(body, {"requests"})
    return [token_request_from_json(group, r) for r in _list(o["requests"])]


def parse_round1_response(group: Group, body: Any, expected: int) -> list[tuple[bytes, NonceCommitment] | str]:
    o = versioned(body, {"results"})
    results = _list(o["results"])
    if len(results) != expected:
        raise EncodingError(f"expected {expected} results, got {len(results)}")
    out: list = []
    for item in results:
        if isinstance(item, dict) and "error" in item:
            out.append(str(_obj(item, {"error"})["error"]))
        else:
            item = _obj(item, {"session", "commitment"})
            out.append((_hex(item["session"]), commitment_from_json(group, item["commitment"])))
    return out


def round2_request(group: Group, items) -> dict:
    return {
        "v": VERSION,
        "items": [
            {"session": sid.hex(), "roster": [commitment_to_json(group, c) for c in roster]}
            for sid, roster in items
        ],
    }


def parse_round2_request(group: Group, body: Any) -> list[tuple[bytes, list[NonceCommitment]]]:
    o = versioned(body, {"items"})
    items = []
    for item in _list(o["items"]):
        item = _obj(item, {"session", "roster"})
        roster = [commitment_from_json(group, c) for c in _list(item["roster"], 1024)]
        items.append((_hex(item["session"]), roster))
    return items


def parse_round2_response(group: Group, body: Any, expected: int) -> list[SignatureShare | str]:
    o = versioned(body, {"results"})
    results = _list(o["results"])
    if len(results) != expected:
        raise EncodingError(f"expected {expected} results, got {len(results)}")
    return [
        str(_obj(item, {"error"})["error"]) if isinstance(item, dict) and "error" in item
        else sig_share_from_json(group, item)
        for item in results
    ]


def report_request(group: Group, env: MessageEnvelope) -> dict:
    return {"v": VERSION, "envelope": envelope_to_json(group, env)}


def parse_report_request(group: Group, body: Any) -> MessageEnvelope:
    return envelope_from_json(group, versioned(body, {"envelope"})["envelope"])
