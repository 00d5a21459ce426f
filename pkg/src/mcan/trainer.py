"""Deterministic mini-batch SGD with the semi-hard -> hard negative curriculum."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .data import Dataset, Pools
from .errors import ConfigError
from .evaluator import build_fitb, fitb_accuracy
from .model import McanParams, ModelConfig, init_params
from .objectives import schedule_level, total_loss
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 0.01
    batch_size: int = 20
    mu: float = 0.05
    lambda1: float = 0.1
    lambda2: float = 0.1
    seed: int = 0
    eval_every: int = 0
    eval_level: str = "hard"
    use_cpl: bool = True
    triplet_enabled: bool = True
    triplet_granularity: str = "fine"
    # model widths
    d: int = 64
    d_c: int = 16
    a_hidden: int = 64
    f_hidden: int = 64
    s_hidden: int = 64
    num_sampled: int = 0
    init: str = "glorot"
    # step decay, off by default
    decay_every: int = 0
    decay_factor: float = 0.5

    def validate(self):
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.triplet_granularity not in ("fine", "coarse", "both"):
            raise ConfigError("triplet_granularity must be fine, coarse or both")

    def model_config(self, dataset: Dataset) -> ModelConfig:
        return ModelConfig.for_dataset(
            dataset,
            d=self.d,
            d_c=self.d_c,
            a_hidden=self.a_hidden,
            f_hidden=self.f_hidden,
            s_hidden=self.s_hidden,
            use_cpl=self.use_cpl,
            seed=derive_seed(self.seed, "init"),
            num_sampled=self.num_sampled,
            init=self.init,
        )


@dataclass
class EpochRecord:
    epoch: int
    level: str
    lr: float
    loss_fine: float
    loss_coarse: float
    loss_triplet: float
    total: float
    val_fitb: float | None
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainLog:
    config: dict
    epochs: list[EpochRecord] = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps({"config": self.config}) + "\n")
            for rec in self.epochs:
                fh.write(rec.to_json() + "\n")

    @classmethod
    def read(cls, path) -> "TrainLog":
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(x) for x in fh if x.strip()]
        return cls(lines[0]["config"], [EpochRecord(**x) for x in lines[1:]])


def train(
    cfg: TrainConfig,
    dataset: Dataset,
    params: McanParams | None = None,
    pools: Pools | None = None,
) -> tuple[McanParams, TrainLog]:
    """Train from ``cfg.seed`` (or continue from ``params``, which is updated in place)."""
    cfg.validate()
    train_ids = list(dataset.splits["train"])
    if not train_ids:
        raise ConfigError("the train split is empty")
    if params is None:
        params = init_params(cfg.model_config(dataset))
    params.requires_grad_(True)
    pools = pools or Pools(dataset)
    order_rng = rng_for(cfg.seed, "train-order")
    neg_rng = rng_for(cfg.seed, "train-negatives")
    val_questions = None
    if cfg.eval_every and dataset.splits["val"]:
        val_questions = build_fitb(dataset, "val", cfg.eval_level, derive_seed(cfg.seed, "val"))

    tlog = TrainLog(asdict(cfg))
    lr = cfg.lr
    tensors = list(params)
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        if cfg.decay_every and epoch and epoch % cfg.decay_every == 0:
            lr *= cfg.decay_factor
        level = schedule_level(epoch, cfg.epochs)
        order = order_rng.permutation(len(train_ids))
        sums = np.zeros(4)
        n_batches = 0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = [train_ids[i] for i in order[b0 : b0 + cfg.batch_size]]
            with ag.Tape() as tape:
                parts = total_loss(
                    params,
                    dataset,
                    batch,
                    pools,
                    cfg.lambda1,
                    cfg.lambda2 if cfg.triplet_enabled else 0.0,
                    cfg.mu,
                    level if cfg.triplet_enabled else None,
                    neg_rng,
                    cfg.triplet_granularity,
                )
            grads = ag.backward(parts.total, tape, tensors)
            ag.sgd_step(tensors, grads, lr)
            sums += (parts.fine, parts.coarse, parts.triplet, parts.total.item())
            n_batches += 1
        means = sums / n_batches
        val = None
        if val_questions is not None and (epoch + 1) % cfg.eval_every == 0:
            val = fitb_accuracy(params, dataset, val_questions, pools)
        rec = EpochRecord(epoch, level.value, lr, *map(float, means), val, time.perf_counter() - start)
        tlog.epochs.append(rec)
        log.info(
            "epoch %d [%s] total=%.4f fine=%.4f coarse=%.4f triplet=%.4f val_fitb=%s",
            epoch, level.value, rec.total, rec.loss_fine, rec.loss_coarse, rec.loss_triplet,
            "-" if val is None else f"{val:.3f}",
        )
    return params, tlog
