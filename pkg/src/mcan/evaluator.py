"""Fill-in-the-blank and compatibility-AUC tasks at three difficulty levels."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, Pools, TupleSeq, check_granularity
from .errors import ContractError
from .model import McanParams, next_tuple_loglik, sequence_loglik
from .objectives import LEVELS, SamplingLevel, sample_negatives
from .seeding import rng_for

CHUNK = 256


@dataclass(frozen=True)
class FitbQuestion:
    outfit_id: int
    prefix: TupleSeq
    blank_category: tuple[int, str]
    choices: tuple[int, ...]  # ascending item ids
    answer_index: int
    level: str = "easy"

    def __post_init__(self):
        if len(self.choices) != 4:
            raise ContractError("a FITB question has exactly 4 choices")


def build_fitb(
    dataset: Dataset,
    split: str,
    level,
    seed: int,
    granularity: str = "fine",
    rounds: int = 1,
) -> list[FitbQuestion]:
    """One question per outfit (per round): a blanked position 2..N plus 3 negatives.

    Blank positions come from a stream that does not depend on ``level``, so
    the same seed blanks the same items at every difficulty.
    """
    level = SamplingLevel(level)
    check_granularity(granularity)
    outfits = dataset.split_outfits(split)
    if not outfits:
        raise ContractError(f"split {split!r} has no outfits")
    blank_rng = rng_for(seed, f"fitb-blank/{split}")
    neg_rng = rng_for(seed, f"fitb-neg/{split}/{level.value}")
    questions = []
    for _ in range(rounds):
        for o in outfits:
            ids = o.item_ids
            pos = int(blank_rng.integers(1, len(ids)))
            truth = ids[pos]
            negatives = sample_negatives(dataset, neg_rng, (o.outfit_id, pos), level, 3)
            choices = tuple(sorted([truth, *negatives]))
            questions.append(
                FitbQuestion(
                    outfit_id=o.outfit_id,
                    prefix=TupleSeq.of([i for j, i in enumerate(ids) if j != pos], granularity),
                    blank_category=(dataset.category_of(truth, granularity), granularity),
                    choices=choices,
                    answer_index=choices.index(truth),
                    level=level.value,
                )
            )
    return questions


def fitb_logits(
    p: McanParams, dataset: Dataset, questions: Sequence[FitbQuestion], pools: Pools | None = None
) -> np.ndarray:
    """(Q, 4) log-probability of filling each blank with each choice.

    A choice is scored as the next tuple in its own category, the same
    per-step term the outfit log-likelihood sums. When all four choices share
    the blank's category this ranks them exactly like the item distribution
    restricted to the choice set.
    """
    pools = pools or Pools(dataset)
    out = np.empty((len(questions), 4))
    for g in ("fine", "coarse"):
        idx = [i for i, q in enumerate(questions) if q.blank_category[1] == g]
        if not idx:
            continue
        for start in range(0, len(idx), CHUNK):
            part = idx[start : start + CHUNK]
            prefixes = [questions[i].prefix for i in part for _ in range(4)]
            targets = [c for i in part for c in questions[i].choices]
            ll = next_tuple_loglik(p, dataset, prefixes, targets, g, pools)
            out[part] = ll.reshape(len(part), 4)
    return out


def answer_fitb(p: McanParams, dataset: Dataset, q: FitbQuestion, pools: Pools | None = None) -> int:
    """Index of the most probable choice; ties go to the lowest item id."""
    return int(np.argmax(fitb_logits(p, dataset, [q], pools)[0]))


def fitb_accuracy(
    p: McanParams, dataset: Dataset, questions: Sequence[FitbQuestion], pools: Pools | None = None
) -> float:
    if not questions:
        raise ContractError("no questions")
    picks = np.argmax(fitb_logits(p, dataset, questions, pools), axis=1)
    truth = np.array([q.answer_index for q in questions])
    return float(np.mean(picks == truth))


@dataclass(frozen=True)
class CompatTask:
    positives: tuple[tuple[int, ...], ...]
    negatives: tuple[tuple[int, ...], ...]
    level: str


def build_compat(dataset: Dataset, split: str, level, seed: int) -> CompatTask:
    """Pair every outfit with a negative made by replacing each of its items."""
    level = SamplingLevel(level)
    outfits = dataset.split_outfits(split)
    if not outfits:
        raise ContractError(f"split {split!r} has no outfits")
    rng = rng_for(seed, f"compat/{split}/{level.value}")
    positives, negatives = [], []
    for o in outfits:
        replaced: list[int] = []
        for j in range(len(o.item_ids)):
            replaced += sample_negatives(dataset, rng, (o.outfit_id, j), level, 1, exclude=replaced)
        positives.append(tuple(o.item_ids))
        negatives.append(tuple(replaced))
    return CompatTask(tuple(positives), tuple(negatives), level.value)


def compat_scores(p: McanParams, dataset: Dataset, seqs: Sequence[TupleSeq], pools: Pools) -> np.ndarray:
    """Per-step log-likelihood, i.e. the chain-rule score divided by ``N - 1``."""
    out = np.empty(len(seqs))
    for start in range(0, len(seqs), CHUNK):
        chunk = seqs[start : start + CHUNK]
        ll = sequence_loglik(p, dataset, chunk, pools)
        out[start : start + len(chunk)] = ll / (np.array([len(s) for s in chunk]) - 1)
    return out


def compat_score(p: McanParams, dataset: Dataset, seq: TupleSeq, pools: Pools) -> float:
    if len(seq) < 2:
        raise ContractError("compatibility needs at least 2 tuples")
    return float(compat_scores(p, dataset, [seq], pools)[0])


def auc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """Mann-Whitney estimate of P(pos > neg), ties counted one half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ContractError("AUC needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def compat_auc(
    p: McanParams,
    dataset: Dataset,
    task: CompatTask,
    pools: Pools,
    granularity: str = "fine",
    reorder: Callable[[tuple[int, ...]], Sequence[int]] | None = None,
) -> float:
    def seqs(outfits):
        if reorder is not None:
            outfits = [tuple(o[i] for i in reorder(o)) for o in outfits]
        return [TupleSeq.of(o, granularity) for o in outfits]

    return auc(
        compat_scores(p, dataset, seqs(task.positives), pools),
        compat_scores(p, dataset, seqs(task.negatives), pools),
    )


# ---------------------------------------------------------------------------
# ordered vs shuffled evaluation and the metrics report


@dataclass(frozen=True)
class MetricRecord:
    task: str
    level: str
    order: str
    metric: str
    value: float
    n: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def random_permuter(seed: int) -> Callable[[int], np.ndarray]:
    rng = rng_for(seed, "shuffle")
    return lambda n: rng.permutation(n)


def _shuffled_question(q: FitbQuestion, perm: Sequence[int]) -> FitbQuestion:
    return FitbQuestion(q.outfit_id, q.prefix.permuted(perm), q.blank_category, q.choices, q.answer_index, q.level)


def evaluate(
    p: McanParams,
    dataset: Dataset,
    split: str = "test",
    levels: Iterable = LEVELS,
    seed: int = 0,
    orders: Iterable[str] = ("ordered",),
    granularity: str = "fine",
    pools: Pools | None = None,
    permuter: Callable[[int], Sequence[int]] | None = None,
) -> list[MetricRecord]:
    """FITB accuracy and compatibility AUC for each level and order mode.

    The shuffled mode reuses the ordered mode's questions and negative
    outfits and only permutes tuples, items and categories together.
    """
    pools = pools or Pools(dataset)
    orders = list(orders)
    records = []
    for level in levels:
        level = SamplingLevel(level)
        questions = build_fitb(dataset, split, level, seed, granularity)
        task = build_compat(dataset, split, level, seed)
        for order in orders:
            if order == "ordered":
                qs, reorder = questions, None
            elif order == "shuffled":
                perm = permuter or random_permuter(seed)
                qs = [_shuffled_question(q, perm(len(q.prefix))) for q in questions]
                reorder = lambda o: perm(len(o))  # noqa: E731
            else:
                raise ValueError(f"unknown order mode {order!r}")
            acc = fitb_accuracy(p, dataset, qs, pools)
            records.append(MetricRecord("fitb", level.value, order, "accuracy", acc, len(qs), seed))
            value = compat_auc(p, dataset, task, pools, granularity, reorder)
            records.append(MetricRecord("compat", level.value, order, "auc", value, len(task.positives), seed))
    return records


def shuffle_eval(
    p: McanParams,
    dataset: Dataset,
    split: str,
    seed: int,
    levels: Iterable = LEVELS,
    granularity: str = "fine",
    pools: Pools | None = None,
    permuter: Callable[[int], Sequence[int]] | None = None,
) -> tuple[dict, dict]:
    """Metrics on stored order and on jointly permuted tuples, keyed by (task, level, metric)."""
    recs = evaluate(p, dataset, split, levels, seed, ("ordered", "shuffled"), granularity, pools, permuter)
    pick = lambda order: {(r.task, r.level, r.metric): r.value for r in recs if r.order == order}  # noqa: E731
    return pick("ordered"), pick("shuffled")


def write_metrics(records: Iterable[MetricRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_metrics(path) -> list[MetricRecord]:
    with open(path, encoding="utf-8") as fh:
        return [MetricRecord(**json.loads(line)) for line in fh if line.strip()]
