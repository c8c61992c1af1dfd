"""Rating datasets: parsing, sparse storage, synthetic instances, folds."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import DuplicateEntryError, ParseError, ValidationError

SEPARATORS = {"tsv": "\t", "tab": "\t", "dcolon": "::", "double-colon": "::"}


@dataclass(frozen=True, eq=False)
class SparseRatings:
    """Observed (user, item, rating) triples of an ``N x M`` rating matrix.

    Unobserved cells are implicitly zero, so every stored rating must be
    strictly positive.  ``user_ids`` / ``item_ids`` map dense indices back
    to the raw identifiers of the source file.
    """

    num_users: int
    num_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    rating_min: float = 1.0
    rating_max: float = 5.0
    user_ids: np.ndarray = field(default=None)
    item_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        users = np.ascontiguousarray(self.users, dtype=np.int64).reshape(-1)
        items = np.ascontiguousarray(self.items, dtype=np.int64).reshape(-1)
        ratings = np.ascontiguousarray(self.ratings, dtype=np.float64).reshape(-1)
        if not (len(users) == len(items) == len(ratings)):
            raise ValidationError("users, items and ratings must have equal length")
        if self.num_users < 0 or self.num_items < 0:
            raise ValidationError("matrix dimensions must be non-negative")
        if not 0 < self.rating_min <= self.rating_max:
            raise ValidationError(
                "rating range must satisfy 0 < rating_min <= rating_max "
                "(zero marks an unobserved cell)"
            )
        if len(users):
            if users.min() < 0 or users.max() >= self.num_users:
                raise ValidationError("user index out of range")
            if items.min() < 0 or items.max() >= self.num_items:
                raise ValidationError("item index out of range")
            if not np.all(np.isfinite(ratings)):
                raise ValidationError("ratings must be finite")
            bad = (ratings < self.rating_min) | (ratings > self.rating_max)
            if bad.any():
                k = int(np.flatnonzero(bad)[0])
                raise ValidationError(
                    f"rating {ratings[k]} at entry {k} outside "
                    f"[{self.rating_min}, {self.rating_max}]"
                )
            keys = users * max(self.num_items, 1) + items
            uniq, counts = np.unique(keys, return_counts=True)
            if (counts > 1).any():
                dup = uniq[counts > 1][0]
                raise DuplicateEntryError(
                    f"duplicate rating for (user={dup // max(self.num_items, 1)}, "
                    f"item={dup % max(self.num_items, 1)})"
                )
        user_ids = (
            np.arange(self.num_users, dtype=np.int64)
            if self.user_ids is None
            else np.asarray(self.user_ids, dtype=np.int64)
        )
        item_ids = (
            np.arange(self.num_items, dtype=np.int64)
            if self.item_ids is None
            else np.asarray(self.item_ids, dtype=np.int64)
        )
        if len(user_ids) != self.num_users or len(item_ids) != self.num_items:
            raise ValidationError("id maps must have one entry per user / item")
        for name, value in [
            ("users", users), ("items", items), ("ratings", ratings),
            ("user_ids", user_ids), ("item_ids", item_ids),
        ]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self):
        return len(self.ratings)

    @property
    def shape(self):
        return (self.num_users, self.num_items)

    def subset(self, mask_or_index):
        """Entries selected by a boolean mask or index array; same matrix shape."""
        sel = np.asarray(mask_or_index)
        return SparseRatings(
            self.num_users, self.num_items,
            self.users[sel], self.items[sel], self.ratings[sel],
            self.rating_min, self.rating_max, self.user_ids, self.item_ids,
        )

    def to_csr(self):
        """Rating matrix with unobserved cells as zeros."""
        return sp.csr_matrix(
            (self.ratings, (self.users, self.items)), shape=self.shape
        )

    def entry_set(self):
        return {
            (int(u), int(i), float(r))
            for u, i, r in zip(self.users, self.items, self.ratings)
        }


def parse_movielens(path, format="tsv", rating_min=1.0, rating_max=5.0):
    """Read ``user<sep>item<sep>rating<sep>timestamp`` lines.

    Parameters
    ----------
    path : str or Path
        Ratings file (ML-100K ``u.data`` or ML-1M ``ratings.dat``).
    format : {"tsv", "dcolon"}
        Tab separated or ``::`` separated fields.

    Returns
    -------
    SparseRatings
        Users and items re-indexed densely in order of sorted raw id.
    """
    try:
        sep = SEPARATORS[format]
    except KeyError:
        raise ValueError(f"unknown format {format!r}; use 'tsv' or 'dcolon'") from None
    raw_u, raw_i, vals = [], [], []
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(sep)
            if len(parts) not in (3, 4):
                raise ParseError(
                    f"expected 4 fields separated by {sep!r}, got {len(parts)}", lineno
                )
            try:
                u, i, r = int(parts[0]), int(parts[1]), float(parts[2])
                if len(parts) == 4:
                    int(parts[3])  # timestamps are validated, then dropped
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if not rating_min <= r <= rating_max:
                raise ValidationError(
                    f"line {lineno}: rating {r} outside [{rating_min}, {rating_max}]"
                )
            raw_u.append(u)
            raw_i.append(i)
            vals.append(r)
    user_ids, users = np.unique(np.asarray(raw_u, dtype=np.int64), return_inverse=True)
    item_ids, items = np.unique(np.asarray(raw_i, dtype=np.int64), return_inverse=True)
    return SparseRatings(
        len(user_ids), len(item_ids), users, items, np.asarray(vals, dtype=float),
        rating_min, rating_max, user_ids, item_ids,
    )


def write_tsv(data, path):
    """Write raw-id triples in ML-100K layout (timestamp column set to 0)."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i, r in zip(data.users, data.items, data.ratings):
            fh.write(f"{data.user_ids[u]}\t{data.item_ids[i]}\t{float(r)!r}\t0\n")


def synth_lowrank(n, m, d, density, seed, rating_min=1.0, rating_max=5.0):
    """Noiseless rank-``d`` ratings with a known generating model.

    Ground-truth profiles are standard normal; every product ``u_i . v_j``
    is mapped affinely onto ``[rating_min, rating_max]`` and a
    ``round(density * n * m)`` subset of cells is observed.

    Returns
    -------
    data : SparseRatings
    truth : FactorModel
        Generating profiles; ``truth.affine`` holds ``(scale, offset)`` such
        that ``rating = scale * u_i . v_j + offset``.
    """
    from .pmf import FactorModel

    if n < 1 or m < 1 or d < 1 or d > min(n, m):
        raise ValidationError(f"degenerate dimensions n={n}, m={m}, d={d}")
    if not 0 < density <= 1:
        raise ValidationError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((d, n))
    V = rng.standard_normal((d, m))
    prod = U.T @ V
    lo, hi = prod.min(), prod.max()
    if hi - lo <= 0:
        raise ValidationError("generated products are constant")
    scale = (rating_max - rating_min) / (hi - lo)
    offset = rating_min - scale * lo
    full = np.clip(scale * prod + offset, rating_min, rating_max)
    count = int(round(density * n * m))
    cells = np.sort(rng.choice(n * m, size=count, replace=False))
    users, items = np.divmod(cells, m)
    data = SparseRatings(n, m, users, items, full[users, items], rating_min, rating_max)
    truth = FactorModel(U, V, rating_min, rating_max, affine=(scale, offset))
    return data, truth


def write_truth_csv(truth, path):
    """Dump a generating model (plus its affine map) for inspection."""
    from .io import write_model

    write_model(truth, path, extra={"affine_scale": truth.affine[0],
                                    "affine_offset": truth.affine[1]})


@dataclass(frozen=True)
class FoldSplit:
    """Per-entry fold labels of a balanced random partition."""

    fold_count: int
    assignments: np.ndarray

    def train_test(self, fold):
        test = self.assignments == fold
        return ~test, test

    def sizes(self):
        return np.bincount(self.assignments, minlength=self.fold_count)


def split_folds(data, k=10, seed=0):
    """Uniform random entry-level ``k``-fold partition, sizes within one."""
    n = len(data)
    if k < 2:
        raise ValidationError("need at least 2 folds")
    if k > n:
        raise ValidationError(f"cannot split {n} entries into {k} folds")
    rng = np.random.default_rng(seed)
    labels = np.empty(n, dtype=np.int64)
    labels[rng.permutation(n)] = np.arange(n) % k
    return FoldSplit(k, labels)


def write_id_map(data, path):
    """Dense-index to raw-id mapping written alongside experiment outputs."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", "raw_id"])
        for k, raw in enumerate(data.user_ids):
            w.writerow(["user", k, int(raw)])
        for k, raw in enumerate(data.item_ids):
            w.writerow(["item", k, int(raw)])


__all__ = [
    "SparseRatings", "FoldSplit", "parse_movielens", "write_tsv",
    "synth_lowrank", "split_folds", "write_id_map",
]
