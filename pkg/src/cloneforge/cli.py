"""Command-line front door.

Subcommands: ingest, train, find-similar, bench, ablate, calibrate,
serve. Human-readable summaries go to stdout; machine-readable artifacts
(CSV/JSON, model files, PNG figures) go to the --out directory, along
with a run manifest that makes the command replayable. Wall-clock
numbers live in timing.json and timestamps in the manifest so the report
files themselves are byte-stable for a fixed seed.

Exit codes: 0 success, 1 data error, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .augment import AugmentConfig
from .corpus import Corpus, CorpusFormatError, load_cifar10_bin, load_image_dir, load_store, save_store
from .encoder import MARGIN_FIXED, MARGIN_LEARNED, EncoderConfig
from .figures import calibration_curves, norm_histogram, parameter_histograms
from .harness import (
    TrialSpec,
    measure_throughput,
    run_ablation_grid,
    run_benchmark,
    unlabeled_overlap,
)
from .pu_objective import PULossConfig
from .trainer import (
    NonFiniteLossError,
    TrainConfig,
    bottom_1,
    save_anchor_model,
    score_corpus,
    top_k,
    train_anchor,
    write_loss_trace,
)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _default_seed() -> int:
    env = os.environ.get("CLONEFORGE_SEED")
    return int(env) if env else 0


class UnknownAnchorError(KeyError):
    pass


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="cloneforge", description=__doc__)
    parser.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    p_ingest = subparsers["ingest"] = sub.add_parser("ingest", help="normalize a corpus into a store file")
    src = p_ingest.add_mutually_exclusive_group(required=True)
    src.add_argument("--cifar", nargs="+", help="CIFAR-10 binary batch files")
    src.add_argument("--dir", help="directory of images (PPM and Pillow-decodable)")
    p_ingest.add_argument("--out", required=True, help="output store path (.cfc)")

    def common(p, with_out=True):
        p.add_argument("--store", required=True, help="normalized corpus store")
        p.add_argument("--seed", type=int, default=None, help="run seed (default CLONEFORGE_SEED or 0)")
        if with_out:
            p.add_argument("--out", required=True, help="output directory")

    def train_knobs(p):
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--d", type=int, default=128, help="embedding dimension")
        p.add_argument("--margin", choices=["learned", "fixed"], default="learned")
        p.add_argument("--fixed-margin", type=float, default=0.5)
        p.add_argument("--lambda-var", type=float, default=0.0)
        p.add_argument("--weight-decay", type=float, default=0.0)
        p.add_argument("--n-pos", type=int, default=128)
        p.add_argument("--n-unl", type=int, default=128)

    p_train = subparsers["train"] = sub.add_parser("train", help="train one anchor model and save it")
    common(p_train)
    p_train.add_argument("--anchor", required=True, help="anchor index or image id")
    train_knobs(p_train)

    p_find = subparsers["find-similar"] = sub.add_parser("find-similar", help="train on an anchor and rank the corpus")
    common(p_find)
    p_find.add_argument("--anchor", required=True, help="anchor index or image id")
    p_find.add_argument("--k", type=int, default=20)
    train_knobs(p_find)

    p_bench = subparsers["bench"] = sub.add_parser("bench", help="multi-anchor benchmark with reports")
    common(p_bench)
    p_bench.add_argument("--anchors", type=int, default=25)
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--n-test-pos", type=int, default=1000)
    p_bench.add_argument("--n-test-neg", type=int, default=1000)
    p_bench.add_argument("--variant", choices=["pu_l2", "pu_cosine", "svdd"], default="pu_l2")
    p_bench.add_argument("--throughput", action="store_true", help="also time train/score/top-k phases")
    train_knobs(p_bench)

    p_ablate = subparsers["ablate"] = sub.add_parser("ablate", help="run the fixed ablation grid")
    common(p_ablate)
    p_ablate.add_argument("--anchors", type=int, default=20)
    p_ablate.add_argument("--jobs", type=int, default=1)
    p_ablate.add_argument("--n-test-pos", type=int, default=1000)
    p_ablate.add_argument("--n-test-neg", type=int, default=1000)

    p_cal = subparsers["calibrate"] = sub.add_parser("calibrate", help="threshold-perturbation study")
    common(p_cal)
    p_cal.add_argument("--anchors", type=int, default=20)
    p_cal.add_argument("--n-test-pos", type=int, default=1000)
    p_cal.add_argument("--n-test-neg", type=int, default=1000)
    train_knobs(p_cal)

    p_serve = subparsers["serve"] = sub.add_parser("serve", help="start the curator review service")
    common(p_serve, with_out=False)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--models-dir", default="models")
    p_serve.add_argument("--decisions", default="decisions.jsonl")
    p_serve.add_argument("--ui", default=None, help="directory of static frontend files to serve at /")
    train_knobs(p_serve)

    return parser, subparsers


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subparsers = build_parser()
    # a config file supplies defaults; explicit flags win
    if "--config" in argv:
        config_path = argv[argv.index("--config") + 1]
        overrides = json.loads(Path(config_path).read_text())
        for sub in subparsers.values():
            known = {a.dest for a in sub._actions}
            sub.set_defaults(**{k: v for k, v in overrides.items() if k in known})
    return parser.parse_args(argv)


def _resolve_seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else _default_seed()


def _train_config(args: argparse.Namespace, seed: int) -> TrainConfig:
    mode = MARGIN_LEARNED if args.margin == "learned" else MARGIN_FIXED
    return TrainConfig(
        n_pos=args.n_pos,
        n_unl=args.n_unl,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        encoder=EncoderConfig(embed_dim=args.d, margin_mode=mode, fixed_margin=args.fixed_margin),
        augment=AugmentConfig(),
        loss=PULossConfig(lambda_var=args.lambda_var),
        seed=seed,
    )


def _resolve_anchor(corpus: Corpus, raw: str) -> int:
    if raw in corpus.ids:
        return corpus.ids.index(raw)
    try:
        idx = int(raw)
    except ValueError:
        idx = -1
    if not 0 <= idx < len(corpus):
        raise UnknownAnchorError(f"unknown anchor {raw!r}")
    return idx


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int, checksum: str, started: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "corpus_checksum": checksum,
        "tool_version": __version__,
        "started_utc": started,
        "finished_utc": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _public_config(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("command", "config")}


# -- commands ------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    if args.cifar:
        corpus = load_cifar10_bin(args.cifar)
    else:
        corpus = load_image_dir(args.dir)
    save_store(corpus, args.out)
    manifest_path = Path(args.out).with_suffix(Path(args.out).suffix + ".manifest.json")
    _json_dump(corpus.manifest.to_dict(), manifest_path)
    print(f"ingested {len(corpus)} images -> {args.out}")
    print(f"checksum {corpus.checksum}")
    if corpus.manifest.skipped:
        print(f"skipped {len(corpus.manifest.skipped)} files:")
        for entry in corpus.manifest.skipped:
            print(f"  {entry['path']}: {entry['reason']}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    started = _now()
    corpus = load_store(args.store)
    seed = _resolve_seed(args)
    anchor = _resolve_anchor(corpus, args.anchor)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = train_anchor(corpus, anchor, _train_config(args, seed))
    save_anchor_model(model, out_dir / f"anchor_{anchor}.cfe")
    write_loss_trace(model, out_dir / f"anchor_{anchor}_trace.csv")
    _write_manifest(out_dir, "train", _public_config(args), seed, corpus.checksum, started)
    print(f"anchor {anchor}: mu={model.mu:.4f} m={model.m:.4f} tau={model.tau:.4f}")
    return EXIT_OK


def cmd_find_similar(args: argparse.Namespace) -> int:
    started = _now()
    corpus = load_store(args.store)
    seed = _resolve_seed(args)
    anchor = _resolve_anchor(corpus, args.anchor)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = train_anchor(corpus, anchor, _train_config(args, seed))
    table = score_corpus(model, corpus)
    picks = top_k(table, args.k)
    least = bottom_1(table)

    with (out_dir / "topk.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "index", "id", "score", "norm", "is_clone"])
        for rank, idx in enumerate(picks, start=1):
            writer.writerow(
                [rank, idx, table.ids[idx], repr(float(table.scores[idx])), repr(float(table.norms[idx])),
                 bool(table.decisions[idx])]
            )
        writer.writerow(
            ["least", least, table.ids[least], repr(float(table.scores[least])), repr(float(table.norms[least])),
             bool(table.decisions[least])]
        )
    save_anchor_model(model, out_dir / f"anchor_{anchor}.cfe")
    norm_histogram(
        table.norms[picks], table.norms, model.tau, out_dir / "fig_norms.png"
    )
    _write_manifest(out_dir, "find-similar", _public_config(args), seed, corpus.checksum, started)
    print(f"anchor {anchor}: tau={model.tau:.4f}; top-{args.k} written to {out_dir / 'topk.csv'}")
    for rank, idx in enumerate(picks[:5], start=1):
        print(f"  {rank}. [{idx}] {table.ids[idx]} score={table.scores[idx]:.4f}")
    return EXIT_OK


def _bench_spec(args: argparse.Namespace, seed: int) -> TrialSpec:
    return TrialSpec(
        anchor_id=0,
        n_test_pos=args.n_test_pos,
        n_test_neg=args.n_test_neg,
        train=_train_config(args, seed),
        variant=getattr(args, "variant", "pu_l2"),
    )


def _metrics_row(anchor_id: int, r) -> dict:
    return {
        "anchor_id": anchor_id,
        "precision": r.precision,
        "recall": r.recall,
        "f1": r.f1,
        "auroc": r.auroc,
        "auprc": r.auprc,
        "f1_best": r.f1_best,
        "tp": r.tp, "fp": r.fp, "fn": r.fn, "tn": r.tn,
        "mu": r.mu, "m": r.m, "tau": r.tau,
    }


def cmd_bench(args: argparse.Namespace) -> int:
    started = _now()
    corpus = load_store(args.store)
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _bench_spec(args, seed)
    report = run_benchmark(corpus, args.anchors, spec, parallelism=args.jobs)

    rows = [_metrics_row(a, r) for a, r in zip(report.anchor_ids, report.per_anchor)]
    with (out_dir / "report.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _json_dump(
        {
            "aggregate": report.aggregate,
            "mu_stats": report.mu_stats,
            "m_stats": report.m_stats,
            "per_anchor": rows,
            "overlap_counts": {
                str(a): unlabeled_overlap(corpus, replace(spec, anchor_id=a)) for a in report.anchor_ids
            },
        },
        out_dir / "report.json",
    )
    _write_calibration_csv(out_dir / "calibration.csv", report.anchor_ids, report.per_anchor)

    timing = {
        "train_seconds": report.timings.train_seconds,
        "score_seconds": report.timings.score_seconds,
    }
    if args.throughput:
        timing["throughput"] = measure_throughput(corpus, report.anchor_ids[0], spec.train)
    _json_dump(timing, out_dir / "timing.json")

    mus = [r.mu for r in report.per_anchor if r.mu is not None]
    ms = [r.m for r in report.per_anchor if r.m is not None]
    if mus and ms:
        parameter_histograms(mus, ms, out_dir / "fig_mu_hist.png", out_dir / "fig_m_hist.png")
    agg_rows = _aggregate_calibration(report.per_anchor)
    if agg_rows:
        calibration_curves(agg_rows, out_dir / "fig_calibration.png")
    _write_manifest(out_dir, "bench", _public_config(args), seed, corpus.checksum, started)

    agg = report.aggregate
    print(f"bench over {args.anchors} anchors (variant {spec.variant}):")
    print(
        f"  precision={agg['precision']:.4f} recall={agg['recall']:.4f} f1={agg['f1']:.4f} "
        f"auroc={agg['auroc']:.4f} auprc={agg['auprc']:.4f}"
    )
    print(f"  mu: mean={report.mu_stats['mean']:.4f} std={report.mu_stats['std']:.4f}")
    print(f"  m:  mean={report.m_stats['mean']:.4f} std={report.m_stats['std']:.4f}")
    return EXIT_OK


def _write_calibration_csv(path: Path, anchor_ids, per_anchor) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["anchor_id", "delta", "precision", "recall", "f1"])
        for anchor_id, r in zip(anchor_ids, per_anchor):
            for delta, p, rec, f1 in r.calibration:
                writer.writerow([anchor_id, repr(delta), repr(p), repr(rec), repr(f1)])
        for delta, p, rec, f1 in _aggregate_calibration(per_anchor):
            writer.writerow(["mean", repr(delta), repr(p), repr(rec), repr(f1)])


def _aggregate_calibration(per_anchor) -> list[tuple[float, float, float, float]]:
    tables = [r.calibration for r in per_anchor if r.calibration]
    if not tables:
        return []
    deltas = [row[0] for row in tables[0]]
    out = []
    for i, delta in enumerate(deltas):
        out.append(
            (
                delta,
                float(np.mean([t[i][1] for t in tables])),
                float(np.mean([t[i][2] for t in tables])),
                float(np.mean([t[i][3] for t in tables])),
            )
        )
    return out


def cmd_ablate(args: argparse.Namespace) -> int:
    started = _now()
    corpus = load_store(args.store)
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = TrialSpec(
        anchor_id=0,
        n_test_pos=args.n_test_pos,
        n_test_neg=args.n_test_neg,
        train=TrainConfig(seed=seed),
    )
    table = run_ablation_grid(corpus, args.anchors, base, parallelism=args.jobs)
    with (out_dir / "ablation.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "d", "lambda_var", "m", "wd", "f1_op", "auroc", "auprc", "f1_best"])
        for row in table:
            writer.writerow(
                [
                    row["variant"], row["d"], row["lambda_var"], row["m"], row["wd"],
                    "--" if row["f1_op"] is None else repr(row["f1_op"]),
                    repr(row["auroc"]), repr(row["auprc"]), repr(row["f1_best"]),
                ]
            )
    _json_dump(table, out_dir / "ablation.json")
    _write_manifest(out_dir, "ablate", _public_config(args), seed, corpus.checksum, started)
    print(f"ablation over {args.anchors} anchors:")
    for row in table:
        op = "--" if row["f1_op"] is None else f"{row['f1_op']:.4f}"
        print(f"  {row['variant']:<30} f1_op={op} auroc={row['auroc']:.4f} f1_best={row['f1_best']:.4f}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    started = _now()
    corpus = load_store(args.store)
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _bench_spec(args, seed)
    report = run_benchmark(corpus, args.anchors, spec, parallelism=1)
    _write_calibration_csv(out_dir / "calibration.csv", report.anchor_ids, report.per_anchor)
    agg = _aggregate_calibration(report.per_anchor)
    calibration_curves(agg, out_dir / "fig_calibration.png")
    _write_manifest(out_dir, "calibrate", _public_config(args), seed, corpus.checksum, started)
    best = max(agg, key=lambda row: row[3])
    print(f"calibration over {args.anchors} anchors; {len(agg)}-point offset grid")
    print(f"  best mean F1 {best[3]:.4f} at offset {best[0]:+.2f}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    corpus = load_store(args.store)
    seed = _resolve_seed(args)
    app = create_app(
        corpus,
        models_dir=Path(args.models_dir),
        decisions_path=Path(args.decisions),
        train_config=_train_config(args, seed),
        ui_dir=Path(args.ui) if args.ui else None,
    )
    print(f"serving corpus of {len(corpus)} images on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "find-similar": cmd_find_similar,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "calibrate": cmd_calibrate,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return _COMMANDS[args.command](args)
    except UnknownAnchorError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteLossError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
