"""Next-item and next-category recommendation and greedy outfit completion."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, Pools, TupleSeq, check_granularity, fmt_real
from .errors import CategoryLookupError, CompletionError, ContractError, ParseError
from .model import McanParams, category_distribution, item_distribution

WILDCARD = None


def _ranked(keys: Sequence[int], probs: np.ndarray, k: int | None) -> list[tuple[int, float]]:
    # descending probability, ties to the lowest key
    order = np.lexsort((np.asarray(keys), -probs))
    if k is not None:
        order = order[:k]
    return [(int(keys[i]), float(probs[i])) for i in order]


def rank_items(
    p: McanParams,
    dataset: Dataset,
    given: TupleSeq,
    category: tuple[int, str],
    pools: Pools,
    exclude: Iterable[int] = (),
) -> list[tuple[int, float]]:
    """Every pool item of ``category`` with its probability under the full pool softmax."""
    cat, g = category
    pool = pools.item_ids(check_granularity(g), cat)
    if not pool:
        raise CategoryLookupError(f"the {g} category {cat} has no candidate items")
    probs = item_distribution(p, dataset, given, (cat, g), pool)
    skip = set(exclude)
    keep = [i for i, item in enumerate(pool) if item not in skip]
    return _ranked([pool[i] for i in keep], probs[keep], None)


def recommend_item(
    p: McanParams,
    dataset: Dataset,
    given: TupleSeq,
    category: tuple[int, str],
    pools: Pools,
    k: int = 1,
    exclude: Iterable[int] = (),
) -> list[tuple[int, float]]:
    """Top ``k`` ``(item_id, probability)`` pairs, most probable first."""
    if k < 1:
        raise ContractError("k must be at least 1")
    return rank_items(p, dataset, given, category, pools, exclude)[:k]


def recommend_category(
    p: McanParams, dataset: Dataset, given: TupleSeq, granularity: str, k: int | None = None
) -> list[tuple[int, float]]:
    """Categories ranked by the category head; raises ``AblationError`` without it."""
    probs = category_distribution(p, dataset, given, granularity)
    return _ranked(list(range(len(probs))), probs, k)


@dataclass(frozen=True)
class Query:
    given: TupleSeq
    # (category id or WILDCARD, granularity) per step
    plan: tuple[tuple[int | None, str], ...]
    max_len: int

    def __post_init__(self):
        if not self.plan:
            raise ContractError("a query needs at least one plan step")
        for _, g in self.plan:
            check_granularity(g)
        if self.max_len < len(self.given) + len(self.plan):
            raise ContractError(
                f"max_len {self.max_len} is shorter than given ({len(self.given)}) plus plan ({len(self.plan)})"
            )


@dataclass(frozen=True)
class CompletionStep:
    item_id: int
    category: int
    granularity: str
    item_prob: float
    category_prob: float | None  # None when the category was given


@dataclass(frozen=True)
class Completion:
    outfit: TupleSeq
    steps: tuple[CompletionStep, ...]


def complete_outfit(p: McanParams, dataset: Dataset, q: Query, pools: Pools) -> Completion:
    """Greedy left-to-right completion of ``q.given`` following ``q.plan``.

    Wildcard steps take the most probable category not already present in
    the outfit at that granularity. Items already in the outfit are never
    recommended again.
    """
    seq = q.given
    steps = []
    for cat, g in q.plan:
        if len(seq) >= q.max_len:
            break
        cat_prob = None
        if cat is WILDCARD:
            used = {dataset.category_of(i, g) for i in seq.item_ids}
            ranked = [(c, pr) for c, pr in recommend_category(p, dataset, seq, g) if c not in used]
            if not ranked:
                raise CompletionError(f"every {g} category is already used in the outfit")
            cat, cat_prob = ranked[0]
        ranked_items = rank_items(p, dataset, seq, (cat, g), pools, exclude=seq.item_ids)
        if not ranked_items:
            raise CompletionError(f"no unused item left in {g} category {cat}")
        item, prob = ranked_items[0]
        steps.append(CompletionStep(item, cat, g, prob, cat_prob))
        seq = TupleSeq(seq.entries + ((item, g),))
    return Completion(seq, tuple(steps))


# ---------------------------------------------------------------------------
# query and completion files
#
#   G <item_id> <granularity>        given tuples, in order
#   P <category_id|*> <granularity>  plan steps, in order
#   M <max_len>                      optional, defaults to given + plan
#
# A completion is written as the full outfit (T lines) followed by one
# S line per decoded step: S <item> <category> <granularity> <p_item> <p_category|->.


def loads_query(text: str) -> Query:
    given, plan, max_len = [], [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "G" and len(tok) == 3:
                given.append((int(tok[1]), check_granularity(tok[2])))
            elif tok[0] == "P" and len(tok) == 3:
                plan.append((WILDCARD if tok[1] == "*" else int(tok[1]), check_granularity(tok[2])))
            elif tok[0] == "M" and len(tok) == 2:
                max_len = int(tok[1])
            else:
                raise ParseError(f"unrecognized query line {line!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno) from None
    if not given:
        raise ParseError("query has no G lines", None)
    if max_len is None:
        max_len = len(given) + len(plan)
    return Query(TupleSeq(tuple(given)), tuple(plan), max_len)


def load_query(path: str | os.PathLike) -> Query:
    with open(path, encoding="utf-8") as fh:
        return loads_query(fh.read())


def dumps_query(q: Query) -> str:
    lines = [f"G {i} {g}" for i, g in q.given.entries]
    lines += [f"P {'*' if c is WILDCARD else c} {g}" for c, g in q.plan]
    lines.append(f"M {q.max_len}")
    return "\n".join(lines) + "\n"


def dumps_completion(c: Completion) -> str:
    lines = [f"T {i} {g}" for i, g in c.outfit.entries]
    for s in c.steps:
        cp = "-" if s.category_prob is None else fmt_real(s.category_prob)
        lines.append(f"S {s.item_id} {s.category} {s.granularity} {fmt_real(s.item_prob)} {cp}")
    return "\n".join(lines) + "\n"
