"""Canonical JSON encoding.

Signatures and hash anchors are computed over these bytes, so the profile is
fixed: UTF-8, lexicographically sorted object keys, no insignificant
whitespace, integers in decimal, floats in shortest round-trip decimal form.
Binary values (keys, signatures, digests) are always hex strings.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import EncodingError

_SCALARS = (str, int, float, bool, type(None))


def _check(value: Any, path: str) -> None:
    if isinstance(value, bool) or value is None or isinstance(value, (str, int)):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise EncodingError(f"non-finite float at {path or '$'}")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise EncodingError(f"non-string key at {path or '$'}")
            _check(item, f"{path}.{key}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    raise EncodingError(f"unencodable type {type(value).__name__} at {path or '$'}")


def canonical_json_bytes(value: Any) -> bytes:
    """Encode a JSON-compatible value to the canonical byte form."""
    _check(value, "")
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def from_canonical(data: bytes) -> Any:
    return json.loads(data.decode("utf-8"))
