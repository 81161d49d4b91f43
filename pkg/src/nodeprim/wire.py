"""Byte-exact framing and payload codecs for the data plane.

Frame layout (see docs/wire.md)::

    +----------------+---------------+------+------------------+
    | length (4B BE) | topic (UTF-8) | 0x20 | payload bytes    |
    +----------------+---------------+------+------------------+

``length`` counts the body only (topic + separator + payload).  The
topic is everything before the first 0x20 byte, so topics may not
contain spaces or control characters.  Payloads are either canonical
JSON objects (``json`` encoding) or raw UTF-8 text (``string``).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Any, Union

MAX_BODY = 2**32 - 1

Document = dict
RawText = str
Payload = Union[Document, RawText]


class WireError(Exception):
    """Base class for framing and payload codec errors."""


class InvalidTopic(WireError):
    pass


class Oversize(WireError):
    pass


class Truncated(WireError):
    pass


class NoSeparator(WireError):
    pass


class BadUtf8(WireError):
    pass


class Unserializable(WireError):
    pass


class MalformedJson(WireError):
    pass


def validate_topic(topic: str) -> str:
    """Check the topic charset (printable ASCII minus space); return it."""
    if not topic:
        raise InvalidTopic("topic is empty")
    for ch in topic:
        if not (0x21 <= ord(ch) <= 0x7E):
            raise InvalidTopic(f"topic contains forbidden character {ch!r}")
    return topic


@dataclass(frozen=True)
class Message:
    """A topic plus a payload: a Document (dict) or RawText (str)."""

    topic: str
    payload: Payload

    def __post_init__(self):
        validate_topic(self.topic)


_LEN = struct.Struct(">I")


def encode_frame(topic: str, payload_bytes: bytes) -> bytes:
    """Frame a payload for one topic: length prefix + topic + 0x20 + payload."""
    validate_topic(topic)
    body = topic.encode("utf-8") + b" " + payload_bytes
    if len(body) > MAX_BODY:
        raise Oversize(f"frame body is {len(body)} bytes, max {MAX_BODY}")
    return _LEN.pack(len(body)) + body


def _read_exact(stream, n: int, allow_clean_eof: bool = False) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            if not buf and allow_clean_eof:
                return None
            raise Truncated(f"stream ended after {len(buf)} of {n} bytes")
        buf += chunk
    return buf


def decode_frame(stream) -> tuple[str, bytes]:
    """Read one frame from a byte source (anything with ``.read(n)``).

    Inverse of :func:`encode_frame`.  Raises ``Truncated`` if the stream
    ends mid-frame, ``NoSeparator`` if the body has no 0x20 byte, and
    ``BadUtf8`` if the topic bytes are not valid UTF-8.
    """
    header = _read_exact(stream, 4)
    (length,) = _LEN.unpack(header)
    body = _read_exact(stream, length) if length else b""
    sep = body.find(b" ")
    if sep < 0:
        raise NoSeparator("frame body has no 0x20 separator")
    try:
        topic = body[:sep].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadUtf8(f"topic bytes are not valid UTF-8: {exc}") from exc
    return topic, body[sep + 1 :]


def read_frame(stream) -> tuple[str, bytes] | None:
    """Like :func:`decode_frame`, but returns None on a clean end-of-stream.

    A stream that ends exactly on a frame boundary is a closed channel,
    not a protocol violation; reader loops use this to exit.
    """
    header = _read_exact(stream, 4, allow_clean_eof=True)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    body = _read_exact(stream, length) if length else b""
    sep = body.find(b" ")
    if sep < 0:
        raise NoSeparator("frame body has no 0x20 separator")
    try:
        topic = body[:sep].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadUtf8(f"topic bytes are not valid UTF-8: {exc}") from exc
    return topic, body[sep + 1 :]


def dump_document(doc: Document) -> str:
    """Canonical JSON text: lexicographic keys, no whitespace, real UTF-8."""
    try:
        return json.dumps(
            doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        )
    except (TypeError, ValueError) as exc:
        raise Unserializable(str(exc)) from exc


def encode_payload(message: Message) -> bytes:
    """Serialize a message payload: Documents to canonical JSON, RawText as-is."""
    if isinstance(message.payload, dict):
        return dump_document(message.payload).encode("utf-8")
    return message.payload.encode("utf-8")


def decode_payload(data: bytes, encoding: str) -> Payload:
    """Decode payload bytes per the topic's declared encoding (json|string)."""
    if encoding == "string":
        return data.decode("utf-8", errors="replace")
    if encoding != "json":
        raise ValueError(f"unknown encoding {encoding!r}")
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    if not isinstance(doc, dict):
        raise MalformedJson(f"payload is {type(doc).__name__}, not a JSON object")
    return doc


def encode_message(message: Message) -> bytes:
    """Frame a full message (topic + encoded payload) in one step."""
    return encode_frame(message.topic, encode_payload(message))


def document_payload(data: bytes) -> Document:
    doc = decode_payload(data, "json")
    assert isinstance(doc, dict)
    return doc
