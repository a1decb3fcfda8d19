"""Short stable digests for change detection and cache keying."""

from __future__ import annotations

import hashlib

DIGEST_SIZE = 16  # 128 bits


def response_digest(payload: bytes) -> bytes:
    """Digest of a response body, used only for equality comparison."""
    return hashlib.blake2b(payload, digest_size=DIGEST_SIZE).digest()


def cache_key(method: str, payload: bytes) -> bytes:
    """Key identifying a request: method plus its full payload."""
    h = hashlib.blake2b(digest_size=DIGEST_SIZE)
    h.update(method.encode("ascii"))
    h.update(b"\x00")
    h.update(payload)
    return h.digest()
