"""Category taxonomy, items, outfits, tuple sequences and the dataset file.

Dataset file grammar, one record per line (UTF-8)::

    H <d_img>
    T coarse <coarse_id> <name>
    T fine <fine_id> <name> <coarse_id>
    I <item_id> <fine_id> <f_1> ... <f_dimg>
    O <outfit_id> <split> <item_id> ...

``split`` is one of ``train``, ``val``, ``test`` or ``none``. Reals are written
with 17 significant digits so a save/load round trip is exact.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import CategoryLookupError, ParseError, ValidationError

Granularity = Literal["fine", "coarse"]
GRANULARITIES: tuple[str, str] = ("fine", "coarse")
SPLITS: tuple[str, ...] = ("train", "val", "test")


def fmt_real(x: float) -> str:
    return "%.17g" % x


def check_granularity(g: str) -> str:
    if g not in GRANULARITIES:
        raise ValueError(f"granularity must be 'fine' or 'coarse', got {g!r}")
    return g


@dataclass(frozen=True)
class CategoryTaxonomy:
    fine_names: tuple[str, ...]
    coarse_names: tuple[str, ...]
    fine_to_coarse: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "fine_names", tuple(self.fine_names))
        object.__setattr__(self, "coarse_names", tuple(self.coarse_names))
        object.__setattr__(self, "fine_to_coarse", tuple(int(c) for c in self.fine_to_coarse))
        if len(self.fine_names) != len(self.fine_to_coarse):
            raise ValidationError("fine_to_coarse must cover every fine category")
        for names, kind in ((self.fine_names, "fine"), (self.coarse_names, "coarse")):
            if len(set(names)) != len(names):
                raise ValidationError(f"duplicate {kind} category name")
            for n in names:
                if not n or any(ch.isspace() for ch in n):
                    raise ValidationError(f"category name {n!r} must be a non-empty token")
        for f, c in enumerate(self.fine_to_coarse):
            if not 0 <= c < len(self.coarse_names):
                raise ValidationError(f"fine category {f} maps to unknown coarse {c}")

    @property
    def n_fine(self) -> int:
        return len(self.fine_names)

    @property
    def n_coarse(self) -> int:
        return len(self.coarse_names)

    def size(self, granularity: str) -> int:
        return self.n_fine if check_granularity(granularity) == "fine" else self.n_coarse


def coarse_of(t: CategoryTaxonomy, fine_id: int) -> int:
    if not 0 <= fine_id < t.n_fine:
        raise CategoryLookupError(f"unknown fine category {fine_id}")
    return t.fine_to_coarse[fine_id]


@dataclass(frozen=True, eq=False)
class Item:
    item_id: int
    features: np.ndarray
    fine_category: int

    def __eq__(self, other):
        if not isinstance(other, Item):
            return NotImplemented
        return (
            self.item_id == other.item_id
            and self.fine_category == other.fine_category
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass(frozen=True)
class Outfit:
    outfit_id: int
    item_ids: tuple[int, ...]


@dataclass(frozen=True)
class TupleSeq:
    """An ordered list of ``(item_id, granularity)`` tuples."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("a tuple sequence needs at least one entry")
        for _, g in self.entries:
            check_granularity(g)

    @classmethod
    def of(cls, item_ids: Iterable[int], granularity: str | Sequence[str] = "fine") -> "TupleSeq":
        ids = [int(i) for i in item_ids]
        grans = [granularity] * len(ids) if isinstance(granularity, str) else list(granularity)
        return cls(tuple(zip(ids, grans)))

    @property
    def item_ids(self) -> list[int]:
        return [i for i, _ in self.entries]

    @property
    def granularities(self) -> list[str]:
        return [g for _, g in self.entries]

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, key):
        if isinstance(key, slice):
            return TupleSeq(self.entries[key])
        return self.entries[key]

    def permuted(self, order: Sequence[int]) -> "TupleSeq":
        return TupleSeq(tuple(self.entries[i] for i in order))


class Dataset:
    """Validated, immutable collection of items and outfits."""

    def __init__(
        self,
        taxonomy: CategoryTaxonomy,
        items: Iterable[Item],
        outfits: Iterable[Outfit],
        splits: dict[str, Iterable[int]] | None = None,
        d_img: int | None = None,
    ):
        self.taxonomy = taxonomy
        items = sorted(items, key=lambda it: it.item_id)
        self.items: dict[int, Item] = {}
        for it in items:
            if it.item_id in self.items:
                raise ValidationError(f"duplicate item id {it.item_id}")
            self.items[it.item_id] = it
        if d_img is None:
            d_img = len(items[0].features) if items else 0
        self.d_img = int(d_img)
        self.outfits: dict[int, Outfit] = {}
        for o in sorted(outfits, key=lambda o: o.outfit_id):
            if o.outfit_id in self.outfits:
                raise ValidationError(f"duplicate outfit id {o.outfit_id}")
            self.outfits[o.outfit_id] = o
        splits = splits or {}
        self.splits: dict[str, tuple[int, ...]] = {
            s: tuple(sorted(int(i) for i in splits.get(s, ()))) for s in SPLITS
        }
        self._validate()

    def _validate(self):
        t = self.taxonomy
        for it in self.items.values():
            f = np.asarray(it.features)
            if f.shape != (self.d_img,):
                raise ValidationError(f"item {it.item_id}: expected {self.d_img} features, got {f.shape}")
            if not np.all(np.isfinite(f)):
                raise ValidationError(f"item {it.item_id}: non-finite feature value")
            if not 0 <= it.fine_category < t.n_fine:
                raise ValidationError(f"item {it.item_id}: unknown fine category {it.fine_category}")
        for o in self.outfits.values():
            if len(o.item_ids) < 2:
                raise ValidationError(f"outfit {o.outfit_id}: needs at least 2 items")
            seen = set()
            for i in o.item_ids:
                if i not in self.items:
                    raise ValidationError(f"outfit {o.outfit_id}: unknown item {i}")
                c = self.items[i].fine_category
                if c in seen:
                    raise ValidationError(f"outfit {o.outfit_id}: duplicate fine category {c}")
                seen.add(c)
        owner: dict[int, str] = {}
        for s, ids in self.splits.items():
            for oid in ids:
                if oid not in self.outfits:
                    raise ValidationError(f"split {s}: unknown outfit {oid}")
                if oid in owner:
                    raise ValidationError(f"outfit {oid} is in both {owner[oid]} and {s}")
                owner[oid] = s

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.taxonomy == other.taxonomy
            and self.d_img == other.d_img
            and self.items == other.items
            and self.outfits == other.outfits
            and self.splits == other.splits
        )

    __hash__ = None

    def __repr__(self):
        sizes = ", ".join(f"{s}={len(v)}" for s, v in self.splits.items())
        return (
            f"Dataset(items={len(self.items)}, outfits={len(self.outfits)}, "
            f"fine={self.taxonomy.n_fine}, coarse={self.taxonomy.n_coarse}, {sizes})"
        )

    # dense views used by the model

    @cached_property
    def item_ids(self) -> np.ndarray:
        return np.fromiter(self.items, dtype=np.int64, count=len(self.items))

    @cached_property
    def row_of(self) -> dict[int, int]:
        return {iid: r for r, iid in enumerate(self.items)}

    @cached_property
    def features(self) -> np.ndarray:
        if not self.items:
            return np.zeros((0, self.d_img))
        return np.stack([np.asarray(it.features, dtype=np.float64) for it in self.items.values()])

    @cached_property
    def fine_of_row(self) -> np.ndarray:
        return np.array([it.fine_category for it in self.items.values()], dtype=np.intp)

    @cached_property
    def coarse_of_row(self) -> np.ndarray:
        table = np.asarray(self.taxonomy.fine_to_coarse, dtype=np.intp)
        return table[self.fine_of_row] if len(self.fine_of_row) else self.fine_of_row

    @cached_property
    def outfit_of_item(self) -> dict[int, tuple[int, ...]]:
        owners: dict[int, list[int]] = {}
        for o in self.outfits.values():
            for i in o.item_ids:
                owners.setdefault(i, []).append(o.outfit_id)
        return {i: tuple(v) for i, v in owners.items()}

    def rows(self, item_ids: Iterable[int]) -> np.ndarray:
        try:
            return np.array([self.row_of[int(i)] for i in item_ids], dtype=np.intp)
        except KeyError as exc:
            raise CategoryLookupError(f"unknown item {exc.args[0]}") from None

    def category_of(self, item_id: int, granularity: str) -> int:
        f = self.items[item_id].fine_category
        return f if check_granularity(granularity) == "fine" else self.taxonomy.fine_to_coarse[f]

    def categories_of_rows(self, rows: np.ndarray, granularity: str) -> np.ndarray:
        return self.fine_of_row[rows] if check_granularity(granularity) == "fine" else self.coarse_of_row[rows]

    def split_outfits(self, split: str) -> list[Outfit]:
        if split == "all":
            return list(self.outfits.values())
        if split not in self.splits:
            raise ValueError(f"unknown split {split!r}")
        return [self.outfits[i] for i in self.splits[split]]

    def tuple_seq(self, outfit: Outfit | int, granularity: str | Sequence[str] = "fine") -> TupleSeq:
        if not isinstance(outfit, Outfit):
            outfit = self.outfits[outfit]
        return TupleSeq.of(outfit.item_ids, granularity)


def category_subset(d: Dataset, category_id: int, granularity: str) -> list[int]:
    """All item ids in a fine or coarse category, ascending."""
    n = d.taxonomy.size(granularity)
    if not 0 <= category_id < n:
        raise CategoryLookupError(f"unknown {granularity} category {category_id}")
    cats = d.categories_of_rows(np.arange(len(d.items)), granularity)
    return [int(i) for i in d.item_ids[cats == category_id]]


class Pools:
    """Candidate item lists per (granularity, category), stored as dataset rows.

    ``matrix(g)`` gives a padded ``(n_categories, width)`` row table plus its
    validity mask, which is what the batched item-prediction softmax consumes.
    """

    def __init__(self, dataset: Dataset, item_ids: Iterable[int] | None = None):
        self.dataset = dataset
        rows = np.arange(len(dataset.items)) if item_ids is None else np.sort(dataset.rows(item_ids))
        self._rows: dict[tuple[str, int], np.ndarray] = {}
        self._matrix: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self._slot: dict[str, np.ndarray] = {}
        n_rows = len(dataset.items)
        for g in GRANULARITIES:
            n = dataset.taxonomy.size(g)
            cats = dataset.categories_of_rows(rows, g)
            lists = [rows[cats == c] for c in range(n)]
            width = max([len(x) for x in lists] + [1])
            mat = np.zeros((n, width), dtype=np.intp)
            mask = np.zeros((n, width), dtype=bool)
            slot = np.full(n_rows, -1, dtype=np.intp)
            for c, lst in enumerate(lists):
                self._rows[(g, c)] = lst
                mat[c, : len(lst)] = lst
                mask[c, : len(lst)] = True
                slot[lst] = np.arange(len(lst))
            self._matrix[g] = (mat, mask)
            self._slot[g] = slot

    def rows(self, granularity: str, category_id: int) -> np.ndarray:
        try:
            return self._rows[(check_granularity(granularity), int(category_id))]
        except KeyError:
            raise CategoryLookupError(f"unknown {granularity} category {category_id}") from None

    def item_ids(self, granularity: str, category_id: int) -> list[int]:
        return [int(i) for i in self.dataset.item_ids[self.rows(granularity, category_id)]]

    def matrix(self, granularity: str) -> tuple[np.ndarray, np.ndarray]:
        return self._matrix[check_granularity(granularity)]

    def slot(self, granularity: str) -> np.ndarray:
        """Position of each dataset row inside its category pool, ``-1`` if absent."""
        return self._slot[check_granularity(granularity)]


# ---------------------------------------------------------------------------
# serialization


def dumps_dataset(d: Dataset) -> str:
    out = io.StringIO()
    t = d.taxonomy
    out.write(f"H {d.d_img}\n")
    for cid, name in enumerate(t.coarse_names):
        out.write(f"T coarse {cid} {name}\n")
    for fid, name in enumerate(t.fine_names):
        out.write(f"T fine {fid} {name} {t.fine_to_coarse[fid]}\n")
    for it in d.items.values():
        vals = " ".join(fmt_real(v) for v in np.asarray(it.features, dtype=np.float64))
        out.write(f"I {it.item_id} {it.fine_category}" + (f" {vals}" if vals else "") + "\n")
    split_of = {oid: s for s, ids in d.splits.items() for oid in ids}
    for o in d.outfits.values():
        ids = " ".join(str(i) for i in o.item_ids)
        out.write(f"O {o.outfit_id} {split_of.get(o.outfit_id, 'none')} {ids}\n")
    return out.getvalue()


def save_dataset(d: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_dataset(d))


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {tok!r}", lineno) from None


def loads_dataset(text: str) -> Dataset:
    d_img = None
    fine: dict[int, tuple[str, int]] = {}
    coarse: dict[int, str] = {}
    items: list[Item] = []
    outfits: list[Outfit] = []
    splits: dict[str, list[int]] = {s: [] for s in SPLITS}
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok:
            continue
        kind = tok[0]
        if kind == "H":
            if len(tok) != 2:
                raise ParseError("header is 'H <d_img>'", lineno)
            d_img = _int(tok[1], lineno, "d_img")
        elif kind == "T":
            if len(tok) == 5 and tok[1] == "fine":
                fine[_int(tok[2], lineno, "fine id")] = (tok[3], _int(tok[4], lineno, "coarse id"))
            elif len(tok) == 4 and tok[1] == "coarse":
                coarse[_int(tok[2], lineno, "coarse id")] = tok[3]
            else:
                raise ParseError("taxonomy record is 'T fine <id> <name> <coarse>' or 'T coarse <id> <name>'", lineno)
        elif kind == "I":
            if d_img is None:
                raise ParseError("item record before header", lineno)
            if len(tok) != 3 + d_img:
                raise ParseError(f"item record needs {d_img} features, got {len(tok) - 3}", lineno)
            try:
                feats = np.array([float(v) for v in tok[3:]], dtype=np.float64)
            except ValueError:
                raise ParseError("malformed feature value", lineno) from None
            items.append(Item(_int(tok[1], lineno, "item id"), feats, _int(tok[2], lineno, "fine id")))
        elif kind == "O":
            if len(tok) < 3:
                raise ParseError("outfit record is 'O <id> <split> <item>...'", lineno)
            oid = _int(tok[1], lineno, "outfit id")
            split = tok[2]
            if split not in SPLITS and split != "none":
                raise ParseError(f"unknown split {split!r}", lineno)
            outfits.append(Outfit(oid, tuple(_int(t, lineno, "item id") for t in tok[3:])))
            if split != "none":
                splits[split].append(oid)
        else:
            raise ParseError(f"unknown record kind {kind!r}", lineno)
    if d_img is None:
        raise ParseError("missing header line")
    for ids, kind in ((fine, "fine"), (coarse, "coarse")):
        if sorted(ids) != list(range(len(ids))):
            raise ValidationError(f"{kind} category ids must be dense and 0-based")
    taxonomy = CategoryTaxonomy(
        fine_names=tuple(fine[i][0] for i in range(len(fine))),
        coarse_names=tuple(coarse[i] for i in range(len(coarse))),
        fine_to_coarse=tuple(fine[i][1] for i in range(len(fine))),
    )
    return Dataset(taxonomy, items, outfits, splits, d_img=d_img)


def load_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return loads_dataset(fh.read())
