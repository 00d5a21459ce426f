"""Mixed Category Attention Net.

The network reads a sequence of ``(item, category)`` tuples. Item features are
projected twice (``W_F``, ``W_G``); a small scorer net ``a`` rates every
(query, key) pair, a causal softmax turns those ratings into attention
weights, and the attended ``G`` rows become ``h``. A mixer net (``f`` for fine
categories, ``fprime`` for coarse) fuses ``h`` with the category embedding into
a tuple representation ``t``.

From ``t`` at the last given position two heads predict what comes next:

* the item head scores every candidate of the requested category with
  ``s([t, mix(W_H x, c)])`` and normalizes over that category only;
* the category head (``cplF`` / ``cplC``) is a softmax layer over all
  categories. Setting ``use_cpl=False`` removes it (the MAN ablation).

Everything below is batched over sequences; the single-sequence helpers at
the end wrap the batched code.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import GRANULARITIES, Dataset, Pools, TupleSeq, check_granularity, fmt_real
from .errors import AblationError, CategoryLookupError, CheckpointError, ContractError, DimensionError
from .seeding import rng_for

INIT_SCALE = 0.05


@dataclass(frozen=True)
class ModelConfig:
    d_img: int
    n_fine: int
    n_coarse: int
    d: int = 512
    d_c: int = 32
    a_hidden: int = 64
    f_hidden: int = 512
    s_hidden: int = 64
    use_cpl: bool = True
    seed: int = 0
    # 0 -> exact softmax over the whole category; K > 0 -> target + K sampled rivals
    num_sampled: int = 0
    # "glorot": weights uniform in +-sqrt(6 / (fan_in + fan_out)); "uniform": +-0.05
    init: str = "glorot"

    def __post_init__(self):
        for f in ("d_img", "n_fine", "n_coarse", "d", "d_c", "a_hidden", "f_hidden", "s_hidden"):
            if getattr(self, f) <= 0:
                raise ValueError(f"ModelConfig.{f} must be positive")
        if self.num_sampled < 0:
            raise ValueError("num_sampled must be >= 0")
        if self.init not in ("glorot", "uniform"):
            raise ValueError("init must be 'glorot' or 'uniform'")

    @classmethod
    def for_dataset(cls, dataset: Dataset, **kw) -> "ModelConfig":
        t = dataset.taxonomy
        return cls(d_img=dataset.d_img, n_fine=t.n_fine, n_coarse=t.n_coarse, **kw)


def _ffn_shapes(prefix: str, n_in: int, hidden: int, n_out: int):
    return [
        (f"{prefix}.W1", (n_in, hidden)),
        (f"{prefix}.b1", (hidden,)),
        (f"{prefix}.W2", (hidden, n_out)),
        (f"{prefix}.b2", (n_out,)),
    ]


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical parameter order, shared by initialization and checkpoints."""
    d, dc = cfg.d, cfg.d_c
    shapes = [
        ("E_fine", (cfg.n_fine, dc)),
        ("E_coarse", (cfg.n_coarse, dc)),
        ("W_F", (d, cfg.d_img)),
        ("W_G", (d, cfg.d_img)),
        ("W_H", (d, cfg.d_img)),
    ]
    shapes += _ffn_shapes("a", 2 * d, cfg.a_hidden, 1)
    shapes += _ffn_shapes("f", d + dc, cfg.f_hidden, d)
    shapes += _ffn_shapes("fprime", d + dc, cfg.f_hidden, d)
    shapes += _ffn_shapes("s", 2 * d, cfg.s_hidden, 1)
    if cfg.use_cpl:
        shapes += [
            ("cplF.W", (d, cfg.n_fine)),
            ("cplF.b", (cfg.n_fine,)),
            ("cplC.W", (d, cfg.n_coarse)),
            ("cplC.b", (cfg.n_coarse,)),
        ]
    return shapes


def _is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


class McanParams:
    """All learnable tensors of one model, in canonical order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        expected = param_shapes(config)
        if [n for n, _ in expected] != list(tensors):
            raise ValueError("parameter names do not match the configuration")
        for name, shape in expected:
            if tensors[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
            tensors[name].name = name
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def items(self):
        return self.tensors.items()

    def ffn(self, prefix: str) -> list[tuple[Tensor, Tensor]]:
        t = self.tensors
        return [(t[f"{prefix}.W1"], t[f"{prefix}.b1"]), (t[f"{prefix}.W2"], t[f"{prefix}.b2"])]

    def copy(self) -> "McanParams":
        return McanParams(self.config, {n: Tensor(t.data.copy(), requires_grad=t.requires_grad) for n, t in self.items()})

    def requires_grad_(self, flag: bool = True) -> "McanParams":
        for t in self.tensors.values():
            t.requires_grad = flag
        return self


def init_params(cfg: ModelConfig) -> McanParams:
    """Biases zero; weights uniform, drawn in canonical order.

    Embedding tables always use +-0.05. Other weights use the Glorot range
    by default or +-0.05 with ``init="uniform"``.
    """
    rng = rng_for(cfg.seed, "init")
    tensors = {}
    for name, shape in param_shapes(cfg):
        if _is_bias(name):
            data = np.zeros(shape)
        else:
            limit = INIT_SCALE
            if cfg.init == "glorot" and not name.startswith("E_"):
                limit = float(np.sqrt(6.0 / (shape[0] + shape[1])))
            data = rng.uniform(-limit, limit, size=shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return McanParams(cfg, tensors)


# ---------------------------------------------------------------------------
# building blocks


def _table(p: McanParams, granularity: str) -> Tensor:
    return p["E_fine"] if check_granularity(granularity) == "fine" else p["E_coarse"]


def _mixer(granularity: str) -> str:
    return "f" if check_granularity(granularity) == "fine" else "fprime"


def _cpl(p: McanParams, granularity: str) -> tuple[Tensor, Tensor]:
    if not p.config.use_cpl:
        raise AblationError("category prediction layer is disabled (use_cpl=False)")
    key = "cplF" if check_granularity(granularity) == "fine" else "cplC"
    return p[f"{key}.W"], p[f"{key}.b"]


def embed_categories(p: McanParams, ids: Sequence[int] | np.ndarray, granularity: str) -> Tensor:
    table = _table(p, granularity)
    ids = np.asarray(ids, dtype=np.intp)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise CategoryLookupError(f"{granularity} category id out of range [0, {n})")
    return ag.take(table, ids)


def _project(x, w: Tensor) -> Tensor:
    return ag.matmul(x, ag.transpose(w))


def attend_batch(p: McanParams, X: np.ndarray, lengths: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Causal self-attention over padded sequences ``X`` of shape (B, N, d_img).

    Returns ``(H, alpha)`` where ``alpha[b, i, k]`` is exactly 0 for ``k > i``
    and for padded keys.
    """
    B, N, _ = X.shape
    d = p.config.d
    if X.shape[-1] != p.config.d_img:
        raise DimensionError(f"features have width {X.shape[-1]}, model expects {p.config.d_img}")
    lengths = np.full(B, N) if lengths is None else np.asarray(lengths)
    F = _project(X, p["W_F"])
    G = _project(X, p["W_G"])
    (w1, b1), (w2, b2) = p.ffn("a")
    h = w1.shape[1]
    q = ag.matmul(F, ag.slice_(w1, slice(0, d)))
    k = ag.matmul(G, ag.slice_(w1, slice(d, None)))
    pre = ag.add(ag.add(ag.reshape(q, (B, N, 1, h)), ag.reshape(k, (B, 1, N, h))), b1)
    e = ag.add(ag.reshape(ag.matmul(ag.relu(pre), w2), (B, N, N)), b2)
    causal = np.tril(np.ones((N, N), dtype=bool))
    keep = causal[None] & (np.arange(N)[None, None, :] < lengths[:, None, None])
    alpha = ag.softmax(e, keep)
    return ag.matmul(alpha, G), alpha


def attend(p: McanParams, X) -> Tensor:
    """Single-sequence attention: ``X`` (N, d_img) -> ``H`` (N, d)."""
    X = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError(f"attend expects an (N, d_img) matrix with N >= 1, got {X.shape}")
    H, _ = attend_batch(p, X[None])
    return ag.reshape(H, H.shape[1:])


def mix(p: McanParams, h, c, granularity: str) -> Tensor:
    """Feature mixing ``f([h, c])`` (fine) or ``fprime([h, c])`` (coarse)."""
    return ag.ffn_apply(p.ffn(_mixer(granularity)), ag.concat([h, c], axis=-1))


def candidate_repr(p: McanParams, features: np.ndarray, cat_ids, granularity: str) -> Tensor:
    """Candidate tuple features ``mix(W_H x, embed(c))`` for rows of ``features``."""
    wx = _project(features, p["W_H"])
    return mix(p, wx, embed_categories(p, cat_ids, granularity), granularity)


def _score_halves(p: McanParams):
    d = p.config.d
    (w1, b1), (w2, b2) = p.ffn("s")
    return ag.slice_(w1, slice(0, d)), ag.slice_(w1, slice(d, None)), b1, w2, b2


def score_from(p: McanParams, t: Tensor, right: Tensor, halves=None) -> Tensor:
    """``s([t, u])`` for ``t`` (..., d) against pre-projected candidates ``right`` (..., P, hidden).

    ``right`` is ``u @ W1[d:]``; splitting the first layer this way avoids
    materializing the concatenation for every (query, candidate) pair.
    """
    w1a, _, b1, w2, b2 = halves or _score_halves(p)
    left = ag.matmul(t, w1a)
    left = ag.reshape(left, left.shape[:-1] + (1, left.shape[-1]))
    z = ag.relu(ag.add(ag.add(left, right), b1))
    out = ag.matmul(z, w2)
    return ag.add(ag.reshape(out, out.shape[:-1]), b2)


def score(p: McanParams, t: Tensor, u: Tensor) -> Tensor:
    """``s([t, u_j])`` for ``t`` (..., d) and candidates ``u`` (..., P, d) -> (..., P)."""
    halves = _score_halves(p)
    return score_from(p, t, ag.matmul(u, halves[1]), halves)


def category_logits(p: McanParams, t: Tensor, granularity: str) -> Tensor:
    w, b = _cpl(p, granularity)
    return ag.add(ag.matmul(t, w), b)


# ---------------------------------------------------------------------------
# encoding batches of tuple sequences


class EncodedBatch:
    """Attention output for a padded batch plus lazily mixed tuple representations."""

    def __init__(self, p: McanParams, dataset: Dataset, seqs: Sequence[TupleSeq]):
        if not seqs:
            raise ContractError("empty batch")
        self.params = p
        self.dataset = dataset
        self.lengths = np.array([len(s) for s in seqs])
        B, N = len(seqs), int(self.lengths.max())
        self.rows = np.zeros((B, N), dtype=np.intp)
        self.fine_mask = np.ones((B, N), dtype=bool)
        for b, s in enumerate(seqs):
            self.rows[b, : len(s)] = dataset.rows(s.item_ids)
            self.fine_mask[b, : len(s)] = [g == "fine" for g in s.granularities]
        self.valid = np.arange(N)[None, :] < self.lengths[:, None]
        self.X = dataset.features[self.rows] * self.valid[..., None]
        self.H, self.alpha = attend_batch(p, self.X, self.lengths)
        self._t: dict[str, Tensor] = {}

    def cats(self, granularity: str) -> np.ndarray:
        return self.dataset.categories_of_rows(self.rows, granularity)

    def t_uniform(self, granularity: str) -> Tensor:
        if granularity not in self._t:
            c = embed_categories(self.params, self.cats(granularity), granularity)
            self._t[granularity] = mix(self.params, self.H, c, granularity)
        return self._t[granularity]

    def t_seq(self) -> Tensor:
        """Tuple representation with each position mixed at its own granularity."""
        if self.fine_mask.all():
            return self.t_uniform("fine")
        if not self.fine_mask.any():
            return self.t_uniform("coarse")
        m = self.fine_mask[..., None].astype(np.float64)
        return ag.add(ag.mul(self.t_uniform("fine"), m), ag.mul(self.t_uniform("coarse"), 1.0 - m))

    def t_last(self, t: Tensor | None = None) -> Tensor:
        t = self.t_seq() if t is None else t
        B = len(self.lengths)
        return ag.take(ag.reshape(t, (-1, t.shape[-1])), np.arange(B) * t.shape[1] + self.lengths - 1)


def encode(p: McanParams, dataset: Dataset, seqs: Sequence[TupleSeq]) -> EncodedBatch:
    return EncodedBatch(p, dataset, seqs)


def all_candidates(p: McanParams, dataset: Dataset, granularity: str) -> Tensor:
    """Candidate tuple features for every dataset item, each mixed with its own category."""
    rows = np.arange(len(dataset.items))
    return candidate_repr(p, dataset.features, dataset.categories_of_rows(rows, granularity), granularity)


def step_loglik(
    p: McanParams,
    enc: EncodedBatch,
    pools: Pools,
    step_granularity: np.ndarray | str | None = None,
    t: Tensor | None = None,
    rng: np.random.Generator | None = None,
    sampled: bool = False,
) -> Tensor:
    """Per-step ``log P(item) + log P(category)`` for predicting positions 1..N-1.

    ``step_granularity`` is a (B, N) boolean "fine" mask, a single granularity
    for every step, or ``None`` to use each target tuple's own granularity.
    Returns a (B, N-1) tensor; padded steps are exactly 0. With ``sampled``
    and a positive ``config.num_sampled``, the item softmax runs over the
    target plus that many uniform draws from its pool (training only).
    """
    B, N = enc.rows.shape
    if N < 2:
        raise ContractError("need sequences of length >= 2")
    if step_granularity is None:
        fine_steps = enc.fine_mask[:, 1:]
    elif isinstance(step_granularity, str):
        fine_steps = np.full((B, N - 1), check_granularity(step_granularity) == "fine")
    else:
        fine_steps = np.asarray(step_granularity, dtype=bool)[:, 1:]
    valid = enc.valid[:, 1:]
    t = enc.t_seq() if t is None else t
    anchor = ag.slice_(t, (slice(None), slice(0, N - 1)))
    targets = enc.rows[:, 1:]
    halves = _score_halves(p)
    k_sampled = p.config.num_sampled if sampled else 0

    total = None
    for g in GRANULARITIES:
        weight = valid & (fine_steps if g == "fine" else ~fine_steps)
        if not weight.any():
            continue
        cat = enc.dataset.categories_of_rows(targets, g)
        slot = pools.slot(g)[targets]
        if np.any(slot[weight] < 0):
            b, j = np.argwhere(weight & (slot < 0))[0]
            raise ContractError(f"target item {enc.dataset.item_ids[targets[b, j]]} is not in its {g} pool")
        mat, mmask = pools.matrix(g)
        cat = np.where(weight, cat, 0)
        if k_sampled:
            cand, cmask, slot = _sampled_candidates(mat, mmask, cat, np.where(weight, slot, 0), k_sampled, rng)
        else:
            cand, cmask = mat[cat], mmask[cat].copy()
            slot = np.where(weight, slot, 0)
            cmask[~weight] = False
            cmask[~weight, 0] = True
        used, local = np.unique(cand, return_inverse=True)
        feats = enc.dataset.features[used]
        u = candidate_repr(p, feats, enc.dataset.categories_of_rows(used, g), g)
        right = ag.take(ag.matmul(u, halves[1]), local.reshape(cand.shape))
        logits = score_from(p, anchor, right, halves)
        ll = ag.pick(ag.log_softmax(logits, cmask), slot)
        if p.config.use_cpl:
            ll = ag.add(ll, ag.pick(ag.log_softmax(category_logits(p, anchor, g)), cat))
        ll = ag.mul(ll, weight.astype(np.float64))
        total = ll if total is None else ag.add(total, ll)
    if total is None:
        total = Tensor(np.zeros((B, N - 1)))
    return total


def _sampled_candidates(mat, mmask, cat, slot, k, rng):
    if rng is None:
        raise ContractError("sampled softmax needs an explicit random generator")
    sizes = mmask.sum(axis=1)[cat]
    draws = rng.random(cat.shape + (k,))
    others = np.floor(draws * np.maximum(sizes - 1, 1)[..., None]).astype(np.intp)
    others = others + (others >= slot[..., None])
    idx = np.concatenate([slot[..., None], others], axis=-1)
    ok = np.concatenate([np.ones(cat.shape + (1,), bool), np.broadcast_to((sizes > 1)[..., None], cat.shape + (k,))], -1)
    idx = np.where(ok, idx, 0)
    return np.take_along_axis(mat[cat], idx, axis=-1), ok, np.zeros(cat.shape, dtype=np.intp)


def next_tuple_loglik(
    p: McanParams,
    dataset: Dataset,
    prefixes: Sequence[TupleSeq],
    targets: Sequence[int],
    granularity: str,
    pools: Pools,
    chunk: int = 64,
) -> np.ndarray:
    """``log P(c) + log P(x | c)`` for appending item ``targets[q]`` after ``prefixes[q]``.

    ``c`` is the target's own category at ``granularity`` and the item term is
    normalized over that category's pool, exactly as one step of
    :func:`sequence_loglik`. Without the category head only the item term remains.
    """
    if len(prefixes) != len(targets):
        raise ContractError("one target per prefix")
    g = check_granularity(granularity)
    rows = dataset.rows(targets)
    cats = dataset.categories_of_rows(rows, g)
    slot = pools.slot(g)[rows]
    if np.any(slot < 0):
        raise ContractError(f"target item {targets[int(np.argmax(slot < 0))]} is not in its {g} pool")
    t = encode(p, dataset, prefixes).t_last().data
    mat, mmask = pools.matrix(g)
    halves = _score_halves(p)
    right = ag.matmul(all_candidates(p, dataset, g), halves[1]).data
    out = np.empty(len(targets))
    for s in range(0, len(targets), chunk):
        sl = slice(s, s + chunk)
        logits = score_from(p, Tensor(t[sl]), Tensor(right[mat[cats[sl]]]), halves)
        out[sl] = ag.pick(ag.log_softmax(logits, mmask[cats[sl]]), slot[sl]).data
    if p.config.use_cpl:
        logp = ag.log_softmax(category_logits(p, Tensor(t), g)).data
        out += logp[np.arange(len(targets)), cats]
    return out


def sequence_loglik(p: McanParams, dataset: Dataset, seqs: Sequence[TupleSeq], pools: Pools) -> np.ndarray:
    """Chain-rule log-likelihood of each sequence (first-tuple prior taken as 0)."""
    for s in seqs:
        if len(s) < 2:
            raise ContractError("outfit log-likelihood needs at least 2 tuples")
    enc = encode(p, dataset, seqs)
    return step_loglik(p, enc, pools).data.sum(axis=1)


def outfit_loglik(p: McanParams, dataset: Dataset, seq: TupleSeq, pools: Pools) -> float:
    return float(sequence_loglik(p, dataset, [seq], pools)[0])


# ---------------------------------------------------------------------------
# single-prefix inference


def _check_candidates(dataset: Dataset, candidates: Sequence[int], category: int, granularity: str) -> np.ndarray:
    if len(candidates) == 0:
        raise ContractError("no candidates")
    rows = dataset.rows(candidates)
    cats = dataset.categories_of_rows(rows, granularity)
    bad = np.flatnonzero(cats != category)
    if bad.size:
        raise ContractError(
            f"candidate {candidates[bad[0]]} is not in {granularity} category {category}"
        )
    return rows


def candidate_logits(
    p: McanParams,
    dataset: Dataset,
    prefixes: Sequence[TupleSeq],
    categories: Sequence[int],
    granularity: str,
    candidates: np.ndarray,
) -> np.ndarray:
    """Item-head logits for a batch of prefixes; ``candidates`` is (Q, M) dataset rows.

    Each candidate is paired with its question's category, whatever its own
    category is; callers decide how to treat out-of-category candidates.
    """
    enc = encode(p, dataset, prefixes)
    t = enc.t_last()
    Q, M = candidates.shape
    cats = np.repeat(np.asarray(categories, dtype=np.intp), M)
    u = candidate_repr(p, dataset.features[candidates.reshape(-1)], cats, granularity)
    return score(p, t, ag.reshape(u, (Q, M, -1))).data


def item_distribution(
    p: McanParams,
    dataset: Dataset,
    prefix: TupleSeq,
    next_cat: tuple[int, str],
    candidates: Sequence[int],
) -> np.ndarray:
    """Softmax over ``candidates`` (all of category ``next_cat``) for the next tuple."""
    category, granularity = next_cat
    rows = _check_candidates(dataset, candidates, category, granularity)
    logits = candidate_logits(p, dataset, [prefix], [category], granularity, rows[None])[0]
    return ag.softmax(logits).data


def category_distribution(p: McanParams, dataset: Dataset, prefix: TupleSeq, granularity: str) -> np.ndarray:
    _cpl(p, granularity)
    enc = encode(p, dataset, [prefix])
    return ag.softmax(category_logits(p, enc.t_last(), granularity)).data[0]


# ---------------------------------------------------------------------------
# checkpoint file
#
#   MCAN-CHECKPOINT 1
#   C <field> <value>            one per ModelConfig field, declaration order
#   P <name> <ndim> <shape...> <values...>
#   END <number of P lines>

CHECKPOINT_MAGIC = "MCAN-CHECKPOINT"
CHECKPOINT_VERSION = 1


def dumps_checkpoint(p: McanParams) -> str:
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    for f in fields(ModelConfig):
        v = getattr(p.config, f.name)
        lines.append(f"C {f.name} {int(v) if isinstance(v, bool) else v}")
    for name, t in p.items():
        shape = " ".join(str(n) for n in t.shape)
        vals = " ".join(fmt_real(v) for v in t.data.reshape(-1))
        lines.append(f"P {name} {t.ndim} {shape} {vals}")
    lines.append(f"END {len(p.tensors)}")
    return "\n".join(lines) + "\n"


def save_checkpoint(p: McanParams, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_checkpoint(p))


def loads_checkpoint(text: str) -> McanParams:
    lines = text.split("\n")
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint file")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise CheckpointError("malformed checkpoint header") from None
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})")
    types = {f.name: f.type for f in fields(ModelConfig)}
    cfg_kw, tensors, end = {}, {}, None
    try:
        for line in lines[1:]:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "C":
                name, raw = tok[1], tok[2]
                if name not in types:
                    raise CheckpointError(f"unknown config field {name!r}")
                kind = types[name] if isinstance(types[name], str) else types[name].__name__
                cfg_kw[name] = {"bool": lambda r: bool(int(r)), "str": str}.get(kind, int)(raw)
            elif tok[0] == "P":
                name, ndim = tok[1], int(tok[2])
                shape = tuple(int(x) for x in tok[3 : 3 + ndim])
                vals = np.array(tok[3 + ndim :], dtype=np.float64)
                if vals.size != int(np.prod(shape)):
                    raise CheckpointError(f"{name}: expected {int(np.prod(shape))} values, found {vals.size}")
                tensors[name] = Tensor(vals.reshape(shape), requires_grad=True)
            elif tok[0] == "END":
                end = int(tok[1])
            else:
                raise CheckpointError(f"unknown record {tok[0]!r}")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    if end is None or end != len(tensors):
        raise CheckpointError("checkpoint is truncated")
    try:
        cfg = ModelConfig(**cfg_kw)
        return McanParams(cfg, tensors)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not match its configuration: {exc}") from None


def load_checkpoint(path: str | os.PathLike) -> McanParams:
    with open(path, encoding="utf-8") as fh:
        return loads_checkpoint(fh.read())
