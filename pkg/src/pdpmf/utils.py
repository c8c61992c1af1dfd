"""Seed derivation and input validation helpers."""
from __future__ import annotations

import numbers
import zlib

import numpy as np

from .exceptions import ValidationError

# Stream roles: distinct integers so streams for different purposes never
# coincide under the same master seed.
ROLE_USER_INIT = 1
ROLE_ITEM_INIT = 2
ROLE_NOISE = 3
ROLE_SAMPLE = 4
ROLE_SPEC = 5
ROLE_SPLIT = 6
ROLE_CELL = 7


def _key(value):
    if isinstance(value, (numbers.Integral, np.integer)) and value >= 0:
        return int(value)
    # stable across processes, unlike hash()
    return zlib.crc32(repr(value).encode()) + (1 << 32)


def derive_seed(*keys):
    """Counter-style child seed: a pure function of the key tuple."""
    seq = np.random.SeedSequence([_key(k) for k in keys])
    return int(seq.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def stream(seed, role, *keys):
    """Independent generator for ``(seed, role, *keys)``."""
    return np.random.default_rng([_key(seed), role, *(_key(k) for k in keys)])


def entity_rng(seed, role, entity_id):
    return stream(seed, role, entity_id)


def random_unit_columns(d, ids, seed, role):
    """One uniform random unit vector per entity, keyed by entity id.

    Keying by id (not by position) makes initialization equivariant under
    any permutation of the entities.
    """
    out = np.empty((d, len(ids)))
    for k, ident in enumerate(ids):
        g = stream(seed, role, ident).standard_normal(d)
        out[:, k] = g / np.linalg.norm(g)
    return out


def check_positive(name, value, strict=True):
    if not isinstance(value, (numbers.Real, np.floating)) or not np.isfinite(value):
        raise ValidationError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        raise ValidationError(f"{name} must be {'>' if strict else '>='} 0, got {value}")
    return float(value)


def check_count(name, value, minimum=1):
    if not isinstance(value, (numbers.Integral, np.integer)) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_fraction(name, value):
    value = check_positive(name, value, strict=False)
    if value > 1:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")
    return value
