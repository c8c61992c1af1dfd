"""CSV persistence for factor models.

Layout::

    # pdpmf-model
    # mode: dp
    # publishable: V-only
    # rating_range: 1.0,5.0
    # config: {"d": 20, ...}
    U,20,943
    <one comma-separated line per user vector>
    V,20,1682
    <one line per item vector>

A public export omits the ``U`` block entirely.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import PrivacyPolicyError, ValidationError
from .pmf import FactorModel

MAGIC = "# pdpmf-model"


def _fmt(vec):
    return ",".join(repr(float(x)) for x in vec)


def publishable_flag(publishable):
    return "V-only" if tuple(publishable) == ("V",) else ",".join(publishable)


def atomic_write_text(path, text):
    """Write through a temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dump_model(model, blocks=("U", "V"), extra=None):
    lines = [
        MAGIC,
        f"# mode: {model.mode}",
        f"# publishable: {publishable_flag(model.publishable)}",
        f"# rating_range: {model.rating_min!r},{model.rating_max!r}",
        f"# config: {json.dumps(model.config, sort_keys=True)}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {value!r}")
    for name in blocks:
        mat = getattr(model, name)
        lines.append(f"{name},{mat.shape[0]},{mat.shape[1]}")
        lines.extend(_fmt(mat[:, k]) for k in range(mat.shape[1]))
    return "\n".join(lines) + "\n"


def write_model(model, path, extra=None):
    """Persist the full model (both matrices) for use between pipeline stages."""
    atomic_write_text(path, dump_model(model, extra=extra))


def export_public(model, path, include_user_profiles=False):
    """Write the releasable part of a model.

    Private-mode models export ``V`` only; asking for ``U`` is refused
    regardless of any flag.
    """
    if model.is_private and include_user_profiles:
        raise PrivacyPolicyError(
            f"{model.mode} model: user profiles U stay with the recommender; "
            "only the perturbed item profiles V may be published"
        )
    blocks = tuple(b for b in ("U", "V") if b in model.publishable)
    atomic_write_text(path, dump_model(model, blocks=blocks))
    return blocks


def read_blocks(path):
    """Parse a model file into ``(meta, {name: d x K array})``."""
    meta, blocks = {}, {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValidationError(f"{path}: not a pdpmf model file")
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        key, _, value = lines[k][1:].strip().partition(":")
        meta[key.strip()] = value.strip()
        k += 1
    while k < len(lines):
        if not lines[k].strip():
            k += 1
            continue
        name, d, count = lines[k].split(",")
        d, count = int(d), int(count)
        rows = lines[k + 1 : k + 1 + count]
        if len(rows) != count:
            raise ValidationError(f"{path}: block {name} truncated")
        mat = np.array([[float(x) for x in row.split(",")] for row in rows]).reshape(count, d)
        blocks[name] = mat.T.copy()
        k += 1 + count
    return meta, blocks


def read_model(path):
    meta, blocks = read_blocks(path)
    if "U" not in blocks or "V" not in blocks:
        raise ValidationError(f"{path}: a full model needs both U and V blocks")
    lo, hi = (float(x) for x in meta["rating_range"].split(","))
    publishable = ("V",) if meta["publishable"] == "V-only" else tuple(meta["publishable"].split(","))
    return FactorModel(
        blocks["U"], blocks["V"], lo, hi, publishable=publishable,
        mode=meta.get("mode", "plain"), config=json.loads(meta.get("config", "{}")),
    )
