"""Experiment engine: per-anchor trials, benchmarks, ablations, timing.

A trial trains on one anchor, probes held-out test positives (fresh
augmentations from a stream disjoint from the training clones) against
test negatives sampled from the rest of the corpus, and reports
operating-point plus ranking metrics. Benchmarks repeat trials over a
seeded anchor sample and aggregate by plain means. The ablation grid
reruns the fixed variant set over one shared anchor sample so rows are
paired.

Variants:
  pu_l2     the norm-threshold method (score = -latent norm, tau = mu+m)
  pu_cosine same training, but scored by cosine to the clone centroid;
            it has no operating point, only ranking metrics and best-F1
  svdd      one-class baseline on the same backbone: pull clone
            embeddings toward the mean embedding of the freshly
            initialized network, score by -distance to that center,
            threshold at the median score of the balanced test set
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from statistics import mean
from typing import Callable

import numpy as np

from . import encoder as enc
from .augment import make_clones
from .corpus import Corpus, get
from .metrics import LabeledScores, TrialMetrics, auprc, auroc, best_f1, evaluate_at
from .seeding import derive_seed, stream
from .tensor_nn import adam_step
from .trainer import (
    AnchorModel,
    TrainConfig,
    sample_unlabeled_indices,
    score_batch_norms,
    score_corpus,
    top_k,
    train_anchor,
)

VARIANT_PU_L2 = "pu_l2"
VARIANT_PU_COSINE = "pu_cosine"
VARIANT_SVDD = "svdd"


@dataclass
class TrialSpec:
    anchor_id: int
    n_test_pos: int = 1000
    n_test_neg: int = 1000
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = VARIANT_PU_L2


@dataclass
class PhaseTimings:
    train_seconds: float = 0.0
    score_seconds: float = 0.0
    topk_seconds: float = 0.0


@dataclass
class BenchmarkReport:
    anchor_ids: list[int]
    per_anchor: list[TrialMetrics]
    aggregate: dict[str, float]
    mu_stats: dict[str, float]
    m_stats: dict[str, float]
    timings: PhaseTimings


@dataclass
class SvddModel:
    anchor_id: int
    encoder: enc.CloneEncoder
    center: np.ndarray
    loss_trace: list[float] = field(default_factory=list)


def _test_sets(corpus: Corpus, spec: TrialSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(test positives, test negatives, negative indices) for a trial."""
    anchor = get(corpus, spec.anchor_id)
    test_cfg = replace(spec.train.augment, seed=derive_seed(spec.train.seed, "test-pos", spec.anchor_id))
    positives = make_clones(anchor, spec.n_test_pos, test_cfg)
    neg_idx = sample_unlabeled_indices(
        corpus, spec.anchor_id, spec.n_test_neg, stream(spec.train.seed, "test-neg", spec.anchor_id)
    )
    return positives, corpus.images[neg_idx], neg_idx


def unlabeled_overlap(corpus: Corpus, spec: TrialSpec) -> int:
    """How many test negatives also appeared in the training unlabeled pool."""
    train_idx = sample_unlabeled_indices(
        corpus, spec.anchor_id, spec.train.n_unl, stream(spec.train.seed, "unl", spec.anchor_id)
    )
    _, _, neg_idx = _test_sets(corpus, spec)
    return int(np.intersect1d(train_idx, neg_idx).size)


def run_trial(corpus: Corpus, spec: TrialSpec) -> TrialMetrics:
    if spec.n_test_neg >= len(corpus):
        raise ValueError("corpus too small for the requested test-negative count")
    positives, negatives, _ = _test_sets(corpus, spec)
    if spec.variant == VARIANT_PU_L2:
        return _trial_pu_l2(corpus, spec, positives, negatives)
    if spec.variant == VARIANT_PU_COSINE:
        return _trial_pu_cosine(corpus, spec, positives, negatives)
    if spec.variant == VARIANT_SVDD:
        return _trial_svdd(corpus, spec, positives, negatives)
    raise ValueError(f"unknown variant {spec.variant!r}")


def _trial_pu_l2(corpus: Corpus, spec: TrialSpec, positives: np.ndarray, negatives: np.ndarray) -> TrialMetrics:
    t0 = time.perf_counter()
    model = train_anchor(corpus, spec.anchor_id, spec.train)
    train_seconds = time.perf_counter() - t0
    scores = LabeledScores(
        pos_scores=-score_batch_norms(model, positives),
        neg_scores=-score_batch_norms(model, negatives),
    )
    result = evaluate_at(scores, model.tau)
    result.mu = model.mu
    result.m = model.m
    result.tau = model.tau
    result.train_seconds = train_seconds
    return result


def _trial_pu_cosine(corpus: Corpus, spec: TrialSpec, positives: np.ndarray, negatives: np.ndarray) -> TrialMetrics:
    t0 = time.perf_counter()
    model = train_anchor(corpus, spec.anchor_id, spec.train)
    train_seconds = time.perf_counter() - t0
    train_clones = make_clones(
        get(corpus, spec.anchor_id),
        spec.train.n_pos,
        replace(spec.train.augment, seed=derive_seed(spec.train.seed, "clones", spec.anchor_id)),
    )
    clone_embeds = _embed(model.encoder, train_clones)
    scores = LabeledScores(
        pos_scores=score_cosine_centroid(model, clone_embeds, positives),
        neg_scores=score_cosine_centroid(model, clone_embeds, negatives),
    )
    result = TrialMetrics(
        precision=float("nan"),
        recall=float("nan"),
        f1=float("nan"),
        auroc=auroc(scores),
        auprc=auprc(scores),
        tp=0, fp=0, fn=0, tn=0,
        calibration=[],
        mu=model.mu, m=model.m, tau=None,
        f1_best=best_f1(scores),
        train_seconds=train_seconds,
    )
    return result


def _trial_svdd(corpus: Corpus, spec: TrialSpec, positives: np.ndarray, negatives: np.ndarray) -> TrialMetrics:
    t0 = time.perf_counter()
    model = train_svdd(corpus, spec.anchor_id, spec.train)
    train_seconds = time.perf_counter() - t0
    pos_scores = svdd_scores(model, positives)
    neg_scores = svdd_scores(model, negatives)
    # median over the balanced test mix sets the operating threshold
    n_bal = min(pos_scores.size, neg_scores.size)
    threshold = float(np.median(np.concatenate([pos_scores[:n_bal], neg_scores[:n_bal]])))
    scores = LabeledScores(pos_scores=pos_scores, neg_scores=neg_scores)
    result = evaluate_at(scores, -threshold)  # evaluate_at takes a norm-style tau
    result.mu = None
    result.m = None
    result.train_seconds = train_seconds
    return result


def _embed(model: enc.CloneEncoder, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = np.empty((images.shape[0], model.embed_dim), dtype=np.float32)
    for start in range(0, images.shape[0], batch_size):
        stop = min(start + batch_size, images.shape[0])
        out[start:stop] = model.forward(images[start:stop])
    return out


def score_cosine_centroid(model: AnchorModel, positive_embeds: np.ndarray, query_batch: np.ndarray) -> np.ndarray:
    """Cosine similarity of each query embedding to the positive centroid."""
    centroid = positive_embeds.mean(axis=0)
    c_norm = float(np.linalg.norm(centroid))
    if c_norm == 0.0:
        raise ValueError("zero centroid: positive embeddings sum to zero")
    queries = _embed(model.encoder, query_batch)
    q_norms = np.linalg.norm(queries, axis=1)
    sims = np.where(
        q_norms > 0,
        (queries @ centroid) / (np.maximum(q_norms, 1e-30) * c_norm),
        -1.0,  # zero-vector embeddings count as maximally dissimilar
    )
    return sims.astype(np.float64)


def train_svdd(corpus: Corpus, anchor_id: int, config: TrainConfig) -> SvddModel:
    """One-class baseline: same backbone, clones pulled to a frozen center."""
    anchor = get(corpus, anchor_id)
    model = enc.init(replace(config.encoder, seed=derive_seed(config.seed, "init", anchor_id)))
    clones = make_clones(
        anchor, config.n_pos, replace(config.augment, seed=derive_seed(config.seed, "clones", anchor_id))
    )
    center = _embed(model, clones).mean(axis=0).astype(np.float32)
    order_rng = stream(config.seed, "order", anchor_id)
    params = [p for p in model.params() if p is not model.raw_margin]
    trace: list[float] = []
    for _ in range(config.epochs):
        order = order_rng.permutation(config.n_pos)
        for k in range(config.steps_per_epoch()):
            batch = clones[order[k * config.batch_pos : (k + 1) * config.batch_pos]]
            embeds = model.forward(batch)
            diff = embeds - center
            loss = float(np.mean(np.sum(diff * diff, axis=1)))
            trace.append(loss)
            model.backward((2.0 / batch.shape[0]) * diff)
            adam_step(params, lr=config.lr, weight_decay=config.weight_decay)
    return SvddModel(anchor_id=anchor_id, encoder=model, center=center, loss_trace=trace)


def svdd_scores(model: SvddModel, images: np.ndarray) -> np.ndarray:
    embeds = _embed(model.encoder, images)
    return -np.linalg.norm(embeds - model.center, axis=1).astype(np.float64)


def svdd_full_set_loss(model: SvddModel, images: np.ndarray) -> float:
    embeds = _embed(model.encoder, images)
    diff = embeds - model.center
    return float(np.mean(np.sum(diff * diff, axis=1)))


def sample_anchor_ids(corpus: Corpus, n_anchors: int, seed: int) -> list[int]:
    if n_anchors > len(corpus):
        raise ValueError("more anchors requested than corpus images")
    rng = stream(seed, "bench-anchors")
    return [int(i) for i in rng.choice(len(corpus), size=n_anchors, replace=False)]


def run_benchmark(
    corpus: Corpus,
    n_anchors: int,
    base_spec: TrialSpec,
    parallelism: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> BenchmarkReport:
    anchor_ids = sample_anchor_ids(corpus, n_anchors, base_spec.train.seed)
    specs = [replace(base_spec, anchor_id=a) for a in anchor_ids]

    def one(spec: TrialSpec) -> TrialMetrics:
        return run_trial(corpus, spec)

    t0 = time.perf_counter()
    if parallelism > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, specs))
    else:
        results = []
        for i, spec in enumerate(specs):
            results.append(one(spec))
            if progress is not None:
                progress(i + 1, len(specs))
    total_seconds = time.perf_counter() - t0

    train_seconds = sum(r.train_seconds for r in results)
    timings = PhaseTimings(
        train_seconds=train_seconds,
        score_seconds=max(total_seconds - train_seconds, 0.0),
    )
    aggregate = {
        "precision": mean(r.precision for r in results),
        "recall": mean(r.recall for r in results),
        "f1": mean(r.f1 for r in results),
        "auroc": mean(r.auroc for r in results),
        "auprc": mean(r.auprc for r in results),
        "f1_best": mean(r.f1_best for r in results if r.f1_best is not None),
    }
    mus = [r.mu for r in results if r.mu is not None]
    ms = [r.m for r in results if r.m is not None]
    return BenchmarkReport(
        anchor_ids=anchor_ids,
        per_anchor=results,
        aggregate=aggregate,
        mu_stats=_dist_stats(mus),
        m_stats=_dist_stats(ms),
        timings=timings,
    )


def _dist_stats(values: list[float]) -> dict[str, float]:
    if not values:
        return {"mean": float("nan"), "std": float("nan")}
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


ABLATION_ROWS: list[dict] = [
    {"label": "L2 + learned m", "variant": VARIANT_PU_L2, "d": 128, "lambda_var": 0.1, "margin": "learned", "wd": 0.0},
    {"label": "L2 + fixed m", "variant": VARIANT_PU_L2, "d": 64, "lambda_var": 0.0, "margin": 0.5, "wd": 0.0},
    {"label": "L2 + fixed m + WD", "variant": VARIANT_PU_L2, "d": 128, "lambda_var": 0.1, "margin": 0.5, "wd": 1e-4},
    {"label": "L2 + learned m + var", "variant": VARIANT_PU_L2, "d": 64, "lambda_var": 0.1, "margin": "learned", "wd": 0.0},
    {"label": "Cosine to centroid (best-F1)", "variant": VARIANT_PU_COSINE, "d": 128, "lambda_var": 0.1, "margin": 0.5, "wd": 1e-4},
]


def _row_train_config(row: dict, base: TrainConfig) -> TrainConfig:
    if row["margin"] == "learned":
        encoder_cfg = replace(base.encoder, embed_dim=row["d"], margin_mode=enc.MARGIN_LEARNED)
    else:
        encoder_cfg = replace(
            base.encoder, embed_dim=row["d"], margin_mode=enc.MARGIN_FIXED, fixed_margin=float(row["margin"])
        )
    return replace(
        base,
        encoder=encoder_cfg,
        weight_decay=row["wd"],
        loss=replace(base.loss, lambda_var=row["lambda_var"]),
    )


def run_ablation_grid(corpus: Corpus, n_anchors: int, base_spec: TrialSpec, parallelism: int = 1) -> list[dict]:
    """The fixed variant grid, every row evaluated over one shared anchor set."""
    anchor_ids = sample_anchor_ids(corpus, n_anchors, base_spec.train.seed)
    table: list[dict] = []
    for row in ABLATION_ROWS:
        spec = replace(base_spec, variant=row["variant"], train=_row_train_config(row, base_spec.train))
        results = []
        specs = [replace(spec, anchor_id=a) for a in anchor_ids]
        if parallelism > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(pool.map(lambda s: run_trial(corpus, s), specs))
        else:
            results = [run_trial(corpus, s) for s in specs]
        has_op = row["variant"] != VARIANT_PU_COSINE
        table.append(
            {
                "variant": row["label"],
                "d": row["d"],
                "lambda_var": row["lambda_var"],
                "m": row["margin"] if row["margin"] == "learned" else f"{row['margin']:.3f}",
                "wd": row["wd"],
                "f1_op": mean(r.f1 for r in results) if has_op else None,
                "auroc": mean(r.auroc for r in results),
                "auprc": mean(r.auprc for r in results),
                "f1_best": mean(r.f1_best for r in results),
            }
        )
    return table


def measure_throughput(corpus: Corpus, anchor_id: int, config: TrainConfig, k: int = 20) -> dict[str, float]:
    """Wall-clock for the train / score / top-k phases over the whole corpus."""
    t0 = time.perf_counter()
    model = train_anchor(corpus, anchor_id, config)
    t1 = time.perf_counter()
    table = score_corpus(model, corpus)
    t2 = time.perf_counter()
    top_k(table, k)
    t3 = time.perf_counter()
    n = len(corpus)
    score_seconds = t2 - t1
    return {
        "n_images": float(n),
        "k": float(k),
        "train_seconds": t1 - t0,
        "score_seconds": score_seconds,
        "topk_seconds": t3 - t2,
        "images_per_second": n / score_seconds if score_seconds > 0 else float("inf"),
    }
