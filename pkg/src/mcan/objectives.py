"""Training losses and the three-level negative sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Dataset, Pools, TupleSeq, check_granularity
from .errors import ContractError, SamplingError
from .model import McanParams, candidate_repr, encode, score, step_loglik


class SamplingLevel(str, Enum):
    EASY = "easy"
    SEMI_HARD = "semi_hard"
    HARD = "hard"

    def __str__(self):
        return self.value


LEVELS = (SamplingLevel.EASY, SamplingLevel.SEMI_HARD, SamplingLevel.HARD)


def _eligible_rows(dataset: Dataset, target: tuple[int, int], level) -> np.ndarray:
    level = SamplingLevel(level)
    outfit_id, position = target
    outfit = dataset.outfits[outfit_id]
    target_row = dataset.row_of[outfit.item_ids[position]]
    ok = np.ones(len(dataset.items), dtype=bool)
    ok[dataset.rows(outfit.item_ids)] = False
    if level is SamplingLevel.SEMI_HARD:
        ok &= dataset.coarse_of_row == dataset.coarse_of_row[target_row]
    elif level is SamplingLevel.HARD:
        ok &= dataset.fine_of_row == dataset.fine_of_row[target_row]
    return np.flatnonzero(ok)


def eligible_negatives(dataset: Dataset, target: tuple[int, int], level) -> list[int]:
    """Every item a draw at ``level`` may return for ``target = (outfit_id, position)``."""
    return [int(i) for i in dataset.item_ids[_eligible_rows(dataset, target, level)]]


def sample_negatives(
    dataset: Dataset,
    rng: np.random.Generator,
    target: tuple[int, int],
    level,
    k: int,
    exclude: Sequence[int] = (),
) -> list[int]:
    """``k`` distinct negatives for one outfit position."""
    rows = _eligible_rows(dataset, target, level)
    if len(exclude):
        rows = rows[~np.isin(rows, dataset.rows(exclude))]
    if len(rows) < k:
        outfit = dataset.outfits[target[0]]
        fine = dataset.items[outfit.item_ids[target[1]]].fine_category
        raise SamplingError(
            f"outfit {target[0]} position {target[1]}: only {len(rows)} {SamplingLevel(level).value} "
            f"negatives available for fine category {fine} "
            f"(coarse {dataset.taxonomy.fine_to_coarse[fine]}), need {k}"
        )
    if k == 1:
        picked = rows[[rng.integers(len(rows))]]
    else:
        picked = rows[rng.choice(len(rows), size=k, replace=False)]
    return [int(i) for i in dataset.item_ids[picked]]


def sample_negative(dataset: Dataset, rng: np.random.Generator, target: tuple[int, int], level) -> int:
    return sample_negatives(dataset, rng, target, level, 1)[0]


def schedule_level(epoch: int, total_epochs: int) -> SamplingLevel:
    """Semi-hard negatives for the first half of training, hard ones after."""
    if not 0 <= epoch < total_epochs:
        raise ContractError(f"epoch {epoch} outside [0, {total_epochs})")
    return SamplingLevel.SEMI_HARD if epoch < math.ceil(total_epochs / 2) else SamplingLevel.HARD


# ---------------------------------------------------------------------------
# losses


def _nll(p: McanParams, dataset: Dataset, batch: Sequence[TupleSeq], pools: Pools, granularity: str, rng=None) -> Tensor:
    if not batch:
        raise ContractError("empty batch")
    for s in batch:
        if any(g != granularity for g in s.granularities):
            raise ContractError(f"loss_{granularity} needs every tuple at {granularity} granularity")
    enc = encode(p, dataset, batch)
    ll = step_loglik(p, enc, pools, granularity, t=enc.t_uniform(granularity), rng=rng)
    return ag.neg(ag.mean(ag.sum_(ll, axis=1)))


def loss_fine(p: McanParams, dataset: Dataset, batch: Sequence[TupleSeq], pools: Pools, rng=None) -> Tensor:
    """Mean over outfits of the negative chain-rule log-likelihood with fine tuples."""
    return _nll(p, dataset, batch, pools, "fine", rng)


def loss_coarse(p: McanParams, dataset: Dataset, batch: Sequence[TupleSeq], pools: Pools, rng=None) -> Tensor:
    return _nll(p, dataset, batch, pools, "coarse", rng)


@dataclass(frozen=True)
class Triplet:
    """Prefix anchor, true next item and a negative, both scored under ``category``."""

    anchor: TupleSeq
    positive: int
    negative: int
    category: tuple[int, str]


def triplet_hinge(
    p: McanParams,
    dataset: Dataset,
    anchor_t: Tensor,
    positives: Sequence[int],
    negatives: Sequence[int],
    categories: Sequence[int],
    granularity: str,
    mu: float,
) -> Tensor:
    """Mean of ``max(0, s(t, u_neg) - s(t, u_pos) + mu)`` over rows of ``anchor_t``."""
    m = len(positives)
    rows = np.concatenate([dataset.rows(positives), dataset.rows(negatives)])
    cats = np.concatenate([np.asarray(categories), np.asarray(categories)])
    u = candidate_repr(p, dataset.features[rows], cats, granularity)
    u = ag.reshape(u, (2, m, -1))
    pairs = ag.concat([ag.reshape(ag.slice_(u, 0), (m, 1, -1)), ag.reshape(ag.slice_(u, 1), (m, 1, -1))], axis=1)
    s = score(p, anchor_t, pairs)
    margin = ag.matmul(s, np.array([-1.0, 1.0]))
    return ag.mean(ag.relu(ag.add(margin, mu)))


def loss_triplet(p: McanParams, dataset: Dataset, batch: Sequence[Triplet], mu: float = 0.05) -> Tensor:
    if mu < 0:
        raise ContractError("margin must be non-negative")
    if not batch:
        raise ContractError("empty triplet batch")
    granularity = check_granularity(batch[0].category[1])
    if any(tr.category[1] != granularity for tr in batch):
        raise ContractError("triplet batch mixes granularities")
    enc = encode(p, dataset, [tr.anchor for tr in batch])
    return triplet_hinge(
        p,
        dataset,
        enc.t_last(),
        [tr.positive for tr in batch],
        [tr.negative for tr in batch],
        [tr.category[0] for tr in batch],
        granularity,
        mu,
    )


def weighted_total(l_fine, l_coarse, l_triplet, lambda1: float = 0.1, lambda2: float = 0.1):
    """``L_F + lambda1 * L_C + lambda2 * L_triplet``; works on tensors and floats."""
    if lambda1 < 0 or lambda2 < 0:
        raise ContractError("loss weights must be non-negative")
    if isinstance(l_fine, Tensor) or isinstance(l_coarse, Tensor) or isinstance(l_triplet, Tensor):
        return ag.add(ag.add(l_fine, ag.mul(l_coarse, lambda1)), ag.mul(l_triplet, lambda2))
    return l_fine + lambda1 * l_coarse + lambda2 * l_triplet


@dataclass
class LossParts:
    total: Tensor
    fine: float
    coarse: float
    triplet: float


def total_loss(
    p: McanParams,
    dataset: Dataset,
    outfit_ids: Sequence[int],
    pools: Pools,
    lambda1: float = 0.1,
    lambda2: float = 0.1,
    mu: float = 0.05,
    level=None,
    rng: np.random.Generator | None = None,
    triplet_granularity: str = "fine",
) -> LossParts:
    """Full training objective for a batch of outfits, sharing one attention pass.

    With ``level`` set, one triplet per predicted position is drawn from
    ``rng`` at that sampling level; ``level=None`` disables the triplet term.
    """
    if not outfit_ids:
        raise ContractError("empty batch")
    seqs = [dataset.tuple_seq(o) for o in outfit_ids]
    enc = encode(p, dataset, seqs)
    tf = enc.t_uniform("fine")
    l_f = ag.neg(ag.mean(ag.sum_(step_loglik(p, enc, pools, "fine", t=tf, rng=rng, sampled=True), axis=1)))
    if lambda1:
        tc = enc.t_uniform("coarse")
        l_c = ag.neg(ag.mean(ag.sum_(step_loglik(p, enc, pools, "coarse", t=tc, rng=rng, sampled=True), axis=1)))
    else:
        l_c = Tensor(0.0)
    l_t = Tensor(0.0)
    if level is not None and lambda2:
        if rng is None:
            raise ContractError("triplet sampling needs an explicit random generator")
        b_idx, j_idx, pos, neg = [], [], [], []
        for b, oid in enumerate(outfit_ids):
            items = dataset.outfits[oid].item_ids
            for j in range(1, len(items)):
                b_idx.append(b)
                j_idx.append(j)
                pos.append(items[j])
                neg.append(sample_negative(dataset, rng, (oid, j), level))
        b_idx, j_idx = np.array(b_idx), np.array(j_idx)
        grans = ("fine", "coarse") if triplet_granularity == "both" else (check_granularity(triplet_granularity),)
        parts = []
        for g in grans:
            t = tf if g == "fine" else enc.t_uniform("coarse")
            n = t.shape[1]
            anchor = ag.take(ag.reshape(t, (-1, t.shape[-1])), b_idx * n + j_idx - 1)
            cats = dataset.categories_of_rows(dataset.rows(pos), g)
            parts.append(triplet_hinge(p, dataset, anchor, pos, neg, cats, g, mu))
        l_t = parts[0] if len(parts) == 1 else ag.mean(ag.concat([ag.reshape(x, (1,)) for x in parts], axis=0))
    total = weighted_total(l_f, l_c, l_t, lambda1, lambda2)
    return LossParts(total, l_f.item(), l_c.item(), l_t.item())
