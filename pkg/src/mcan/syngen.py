"""Synthetic outfits with a planted style structure, plus the oracles that read it.

Each outfit draws a unit style vector ``u``; an item of fine category ``c`` in
that outfit gets features ``p_c + M_c u + noise``. Distractor items have their
own independent styles. Because the noise lives in feature space the oracles
below, which look only at styles, are exact.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import CategoryTaxonomy, Dataset, Item, Outfit, fmt_real
from .errors import ConfigError, ContractError, ParseError
from .seeding import rng_for


@dataclass(frozen=True)
class GenConfig:
    num_coarse: int = 4
    fines_per_coarse: int = 3
    items_per_fine: int = 40
    num_outfits: int = 600
    outfit_len: int = 4
    style_dim: int = 8
    d_img: int = 16
    noise_sigma: float = 0.1
    seed: int = 0
    # M_c = I and p_c = 0; needs style_dim == d_img
    identity_maps: bool = False

    def validate(self):
        counts = ("num_coarse", "fines_per_coarse", "items_per_fine", "num_outfits", "outfit_len", "style_dim", "d_img")
        for name in counts:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.outfit_len > self.num_coarse * self.fines_per_coarse:
            raise ConfigError(
                f"outfit_len {self.outfit_len} needs more distinct fine categories than "
                f"the {self.num_coarse * self.fines_per_coarse} available"
            )
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.identity_maps and self.style_dim != self.d_img:
            raise ConfigError("identity_maps requires style_dim == d_img")


@dataclass
class LatentRecord:
    outfit_styles: dict[int, np.ndarray]
    item_styles: dict[int, np.ndarray]
    maps: np.ndarray  # (n_fine, d_img, k)
    prototypes: np.ndarray  # (n_fine, d_img)
    item_outfit: dict[int, int] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, LatentRecord):
            return NotImplemented
        same = lambda a, b: a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)  # noqa: E731
        return (
            same(self.outfit_styles, other.outfit_styles)
            and same(self.item_styles, other.item_styles)
            and np.array_equal(self.maps, other.maps)
            and np.array_equal(self.prototypes, other.prototypes)
            and self.item_outfit == other.item_outfit
        )


def _unit(rng: np.random.Generator, k: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(k)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def generate(cfg: GenConfig) -> tuple[Dataset, LatentRecord]:
    cfg.validate()
    rng = rng_for(cfg.seed, "syngen")
    n_fine = cfg.num_coarse * cfg.fines_per_coarse
    taxonomy = CategoryTaxonomy(
        fine_names=tuple(f"fine{f}" for f in range(n_fine)),
        coarse_names=tuple(f"coarse{c}" for c in range(cfg.num_coarse)),
        fine_to_coarse=tuple(f // cfg.fines_per_coarse for f in range(n_fine)),
    )
    k, d = cfg.style_dim, cfg.d_img
    if cfg.identity_maps:
        maps = np.broadcast_to(np.eye(d), (n_fine, d, k)).copy()
        protos = np.zeros((n_fine, d))
    else:
        maps = rng.standard_normal((n_fine, d, k))
        protos = rng.standard_normal((n_fine, d))

    items: list[Item] = []
    outfits: list[Outfit] = []
    outfit_styles: dict[int, np.ndarray] = {}
    item_styles: dict[int, np.ndarray] = {}
    item_outfit: dict[int, int] = {}
    per_fine = np.zeros(n_fine, dtype=int)

    def new_item(cat: int, style: np.ndarray) -> int:
        iid = len(items)
        noise = rng.standard_normal(d) * cfg.noise_sigma if cfg.noise_sigma > 0 else np.zeros(d)
        feats = protos[cat] + maps[cat] @ style + noise
        items.append(Item(iid, feats, int(cat)))
        item_styles[iid] = style
        per_fine[cat] += 1
        return iid

    for oid in range(cfg.num_outfits):
        u = _unit(rng, k)
        outfit_styles[oid] = u
        cats = rng.choice(n_fine, size=cfg.outfit_len, replace=False)
        ids = []
        for c in cats:
            iid = new_item(int(c), u)
            item_outfit[iid] = oid
            ids.append(iid)
        outfits.append(Outfit(oid, tuple(ids)))

    for c in range(n_fine):
        while per_fine[c] < cfg.items_per_fine:
            new_item(c, _unit(rng, k))

    n = cfg.num_outfits
    n_train = n * 70 // 100
    n_val = n * 15 // 100
    splits = {
        "train": range(n_train),
        "val": range(n_train, n_train + n_val),
        "test": range(n_train + n_val, n),
    }
    dataset = Dataset(taxonomy, items, outfits, splits, d_img=d)
    return dataset, LatentRecord(outfit_styles, item_styles, maps, protos, item_outfit)


def oracle_best_item(lat: LatentRecord, prefix: Sequence[int], category_id: int, candidates: Sequence[int]) -> int:
    """Candidate whose style best matches the mean prefix style; ties go to the lowest id.

    ``category_id`` is carried for symmetry with the model call; the latent
    record does not know categories, so callers pass same-category candidates.
    """
    if not candidates:
        raise ContractError(f"no candidates for category {category_id}")
    if not prefix:
        raise ContractError("empty prefix")
    centre = np.mean([lat.item_styles[i] for i in prefix], axis=0)
    best, best_score = None, -np.inf
    for c in sorted(candidates):
        s = float(lat.item_styles[c] @ centre)
        if s > best_score:
            best, best_score = c, s
    return best


def oracle_compat(lat: LatentRecord, item_ids: Sequence[int]) -> float:
    """Mean pairwise dot product of item styles."""
    if len(item_ids) < 2:
        raise ContractError("compatibility needs at least 2 items")
    s = np.stack([lat.item_styles[i] for i in item_ids])
    g = s @ s.T
    n = len(item_ids)
    return float((g.sum() - np.trace(g)) / (n * (n - 1)))


# ---------------------------------------------------------------------------
# latent file: K <k> <d_img> | M <fine> <d*k values> | P <fine> <d values>
#              S outfit <id> <k values> | S item <id> <outfit_id or -1> <k values>


def dumps_latent(lat: LatentRecord) -> str:
    out = io.StringIO()
    n_fine, d, k = lat.maps.shape
    out.write(f"K {k} {d}\n")
    vec = lambda v: " ".join(fmt_real(x) for x in np.ravel(v))  # noqa: E731
    for c in range(n_fine):
        out.write(f"M {c} {vec(lat.maps[c])}\n")
        out.write(f"P {c} {vec(lat.prototypes[c])}\n")
    for oid in sorted(lat.outfit_styles):
        out.write(f"S outfit {oid} {vec(lat.outfit_styles[oid])}\n")
    for iid in sorted(lat.item_styles):
        out.write(f"S item {iid} {lat.item_outfit.get(iid, -1)} {vec(lat.item_styles[iid])}\n")
    return out.getvalue()


def save_latent(lat: LatentRecord, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_latent(lat))


def load_latent(path: str | os.PathLike) -> LatentRecord:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("K "):
        raise ParseError("missing 'K <k> <d_img>' header", 1)
    _, k, d = lines[0].split()
    k, d = int(k), int(d)
    maps, protos = {}, {}
    outfit_styles, item_styles, item_outfit = {}, {}, {}
    for lineno, line in enumerate(lines[1:], 2):
        tok = line.split()
        if not tok:
            continue
        try:
            if tok[0] == "M":
                maps[int(tok[1])] = np.array(tok[2:], dtype=np.float64).reshape(d, k)
            elif tok[0] == "P":
                protos[int(tok[1])] = np.array(tok[2:], dtype=np.float64)
            elif tok[0] == "S" and tok[1] == "outfit":
                outfit_styles[int(tok[2])] = np.array(tok[3:], dtype=np.float64)
            elif tok[0] == "S" and tok[1] == "item":
                iid, owner = int(tok[2]), int(tok[3])
                item_styles[iid] = np.array(tok[4:], dtype=np.float64)
                if owner >= 0:
                    item_outfit[iid] = owner
            else:
                raise ParseError(f"unknown record {tok[0]!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno) from None
    n_fine = len(maps)
    return LatentRecord(
        outfit_styles,
        item_styles,
        np.stack([maps[c] for c in range(n_fine)]) if n_fine else np.zeros((0, d, k)),
        np.stack([protos[c] for c in range(n_fine)]) if n_fine else np.zeros((0, d)),
        item_outfit,
    )
