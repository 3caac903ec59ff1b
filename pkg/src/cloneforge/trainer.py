"""Per-anchor training loop and corpus scoring.

For one anchor image: generate a seeded clone set, sample an unlabeled
pool from the rest of the corpus, then run the positive-vs-unlabeled
objective with Adam for a fixed number of epochs. The operating point is
tau = mu + m where mu is the mean clone norm of the final training batch
and m is the (learned or fixed) margin.

All randomness flows from ``TrainConfig.seed`` through labeled
substreams keyed by the anchor id, so two runs with the same seed agree
to the last bit and concurrent anchors never share a stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import encoder as enc
from .augment import AugmentConfig, make_clones
from .corpus import Corpus, get
from .pu_objective import PULossConfig, PULossValue, compute_mu, pu_loss, pu_loss_backward
from .seeding import derive_seed, stream
from .tensor_nn import adam_step, sigmoid


class NonFiniteLossError(RuntimeError):
    """Raised when the training loss stops being finite; names the step."""


@dataclass
class TrainConfig:
    n_pos: int = 128
    n_unl: int = 128
    batch_pos: int = 32
    batch_unl: int = 32
    epochs: int = 10
    lr: float = 1e-3
    weight_decay: float = 0.0
    encoder: enc.EncoderConfig = field(default_factory=enc.EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: PULossConfig = field(default_factory=PULossConfig)
    seed: int = 0
    recompute_mu: bool = False  # derive mu from all clones instead of the final batch

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.n_pos % self.batch_pos != 0 or self.n_unl % self.batch_unl != 0:
            raise ValueError("batch sizes must divide their set sizes")

    def steps_per_epoch(self) -> int:
        return self.n_pos // self.batch_pos


@dataclass
class AnchorModel:
    anchor_id: int
    encoder: enc.CloneEncoder
    mu: float
    m: float
    tau: float
    train_loss_trace: list[PULossValue] = field(default_factory=list)
    margin_trace: list[float] = field(default_factory=list)  # m in effect at each step


@dataclass
class ScoreTable:
    ids: list[str]
    norms: np.ndarray  # (N,)
    scores: np.ndarray  # (N,) = -norms
    decisions: np.ndarray  # (N,) bool, norm <= tau


def sample_unlabeled_indices(corpus: Corpus, anchor_id: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if count >= len(corpus):
        raise ValueError(f"corpus of {len(corpus)} cannot supply {count} non-anchor samples")
    pool = np.delete(np.arange(len(corpus)), anchor_id)
    return rng.choice(pool, size=count, replace=False)


def sample_unlabeled(corpus: Corpus, anchor_id: int, count: int, rng: np.random.Generator) -> np.ndarray:
    idx = sample_unlabeled_indices(corpus, anchor_id, count, rng)
    return corpus.images[idx]


def train_anchor(
    corpus: Corpus,
    anchor_id: int,
    config: TrainConfig,
    on_step: Callable[[int, int], None] | None = None,
) -> AnchorModel:
    anchor = get(corpus, anchor_id)
    model = enc.init(replace(config.encoder, seed=derive_seed(config.seed, "init", anchor_id)))
    clones = make_clones(
        anchor, config.n_pos, replace(config.augment, seed=derive_seed(config.seed, "clones", anchor_id))
    )
    unlabeled = sample_unlabeled(corpus, anchor_id, config.n_unl, stream(config.seed, "unl", anchor_id))
    return _fit(model, clones, unlabeled, anchor_id, config, on_step)


def _fit(
    model: enc.CloneEncoder,
    clones: np.ndarray,
    unlabeled: np.ndarray,
    anchor_id: int,
    config: TrainConfig,
    on_step: Callable[[int, int], None] | None = None,
) -> AnchorModel:
    order_rng = stream(config.seed, "order", anchor_id)
    learned = model.config.margin_mode == enc.MARGIN_LEARNED
    trace: list[PULossValue] = []
    margins: list[float] = []
    final_pos_batch = clones[: config.batch_pos]
    step = 0
    for _ in range(config.epochs):
        pos_order = order_rng.permutation(config.n_pos)
        unl_order = order_rng.permutation(config.n_unl)
        for k in range(config.steps_per_epoch()):
            pos_batch = clones[pos_order[k * config.batch_pos : (k + 1) * config.batch_pos]]
            unl_batch = unlabeled[unl_order[k * config.batch_unl : (k + 1) * config.batch_unl]]
            batch = np.concatenate([pos_batch, unl_batch])
            norms = model.latent_norms(batch)
            pos_norms = norms[: config.batch_pos]
            unl_norms = norms[config.batch_pos :]
            m = model.margin()
            value = pu_loss(pos_norms, unl_norms, m, config.loss)
            if not np.isfinite(value.total):
                raise NonFiniteLossError(f"non-finite loss at step {step} (anchor {anchor_id})")
            d_pos, d_unl, d_m = pu_loss_backward(pos_norms, unl_norms, m, config.loss)
            model.backward_from_norms(np.concatenate([d_pos, d_unl]).astype(np.float32))
            if learned:
                model.raw_margin.grad += np.float32(d_m * sigmoid(float(model.raw_margin.value)))
            adam_step(model.params(), lr=config.lr, weight_decay=config.weight_decay)
            trace.append(value)
            margins.append(m)
            final_pos_batch = pos_batch
            step += 1
            if on_step is not None:
                on_step(step, config.epochs * config.steps_per_epoch())
    if config.recompute_mu:
        mu = compute_mu(model.latent_norms(clones))
    else:
        mu = compute_mu(model.latent_norms(final_pos_batch))
    m = model.margin()
    return AnchorModel(
        anchor_id=anchor_id, encoder=model, mu=mu, m=m, tau=mu + m,
        train_loss_trace=trace, margin_trace=margins,
    )


def score_batch_norms(model: AnchorModel, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    norms = np.empty(images.shape[0], dtype=np.float32)
    for start in range(0, images.shape[0], batch_size):
        stop = min(start + batch_size, images.shape[0])
        norms[start:stop] = model.encoder.latent_norms(images[start:stop])
    return norms


def score_corpus(model: AnchorModel, corpus: Corpus, batch_size: int = 256) -> ScoreTable:
    norms = score_batch_norms(model, corpus.images, batch_size)
    return ScoreTable(
        ids=list(corpus.ids),
        norms=norms,
        scores=-norms,
        decisions=norms <= np.float32(model.tau),
    )


def top_k(table: ScoreTable, k: int) -> list[int]:
    """Indices of the k best scores, descending, ties broken by index."""
    order = np.lexsort((np.arange(len(table.ids)), -table.scores))
    return [int(i) for i in order[:k]]


def bottom_1(table: ScoreTable) -> int:
    order = np.lexsort((np.arange(len(table.ids)), -table.scores))
    return int(order[-1])


def write_loss_trace(model: AnchorModel, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "consistency", "variance", "hinge", "total", "mu", "m"])
        for i, v in enumerate(model.train_loss_trace):
            m = model.margin_trace[i] if i < len(model.margin_trace) else model.m
            writer.writerow([i, repr(v.consistency), repr(v.variance), repr(v.hinge), repr(v.total), repr(v.mu), repr(m)])


def save_anchor_model(model: AnchorModel, path: str | Path) -> None:
    with Path(path).open("wb") as fh:
        enc.save_encoder(model.encoder, fh, operating_point=(model.mu, model.m, model.tau))


def load_anchor_model(path: str | Path, anchor_id: int = -1) -> AnchorModel:
    with Path(path).open("rb") as fh:
        model, point = enc.load_encoder(fh)
    if point is None:
        raise ValueError(f"{path} has no operating point; it is a bare encoder file")
    mu, m, tau = point
    return AnchorModel(anchor_id=anchor_id, encoder=model, mu=mu, m=m, tau=tau)
