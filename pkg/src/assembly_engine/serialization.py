"""Canonical JSON serialization and hashing.

All replay / determinism checks compare sha256 digests of canonical dumps:
sorted keys, tight separators, no NaN/Inf. Floats keep full repr precision
so a replay on the same platform hashes identically.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest(obj: Any) -> str:
    """Canonical sha256 digest of a JSON-able object."""
    return sha256_hex(canonical_dumps(obj))
