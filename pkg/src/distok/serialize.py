"""Bit-exact JSON encoding of float64 payloads.

All reals are written as decimal strings produced by ``repr(float)``, which
Python guarantees to round-trip exactly for 64-bit floats.  Canonical dumps
(sorted keys, fixed separators) make artifact files byte-reproducible.
"""

import hashlib
import json

import numpy as np


def f2s(x):
    return repr(float(x))


def s2f(s):
    return float(s)


def arr2j(a):
    """Encode a 1-D or 2-D float array as nested lists of decimal strings."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        return [f2s(v) for v in a]
    if a.ndim == 2:
        return [[f2s(v) for v in row] for row in a]
    raise ValueError(f"unsupported ndim {a.ndim}")


def j2arr(obj):
    """Decode nested lists of decimal strings back into a float64 array."""
    if obj and isinstance(obj[0], list):
        return np.array([[s2f(v) for v in row] for row in obj], dtype=np.float64)
    return np.array([s2f(v) for v in obj], dtype=np.float64)


def canonical_dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dump_json(obj, path):
    with open(path, "w") as fh:
        fh.write(canonical_dumps(obj))
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def digest(obj):
    """Content hash of a JSON-serializable object (config fingerprinting)."""
    return hashlib.sha256(canonical_dumps(obj).encode()).hexdigest()
