"""Command-line front end.

One executable, subcommands per operation. Reports go to stdout (or
--out) as JSON or a flat csv-summary; they carry no timestamps and the
computations accumulate in fixed order, so a repeated invocation is
byte-identical, whatever --threads says. Exit codes: 0 success, 2 bad
usage or invalid input files, 1 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import asdict

from . import baselines, leakage, metrics, synth
from .mmd import MmdConfig
from .report import MetricReport
from .store import (
    EmbeddingSet,
    MetaTable,
    StoreError,
    load_embeddings,
    load_embeddings_csv,
    load_meta,
    sha256_file,
)

THREADS_ENV = "TACTILE_EVALKIT_THREADS"


class UsageError(ValueError):
    """Bad flags or unusable input files; exits with code 2."""


def _load_emb(path: str, flag: str) -> EmbeddingSet:
    try:
        if path.endswith(".csv"):
            return load_embeddings_csv(path)
        return load_embeddings(path)
    except FileNotFoundError:
        raise UsageError("%s: no such file: %s" % (flag, path)) from None
    except (StoreError, OSError) as exc:
        raise UsageError("%s: %s" % (flag, exc)) from None


def _load_meta(path: str, flag: str) -> MetaTable:
    try:
        return load_meta(path)
    except FileNotFoundError:
        raise UsageError("%s: no such file: %s" % (flag, path)) from None
    except (StoreError, OSError) as exc:
        raise UsageError("%s: %s" % (flag, exc)) from None


def _digest(path: str, flag: str) -> str:
    try:
        return sha256_file(path)
    except OSError:
        raise UsageError("%s: no such file: %s" % (flag, path)) from None


def _mmd_config(args) -> MmdConfig:
    return MmdConfig(sigma=args.sigma)


def _strategy(args) -> metrics.SplitStrategy:
    return metrics.SplitStrategy(mode=args.split_mode, seed=args.seed, repeats=args.splits)


def _common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument(
        "--format", choices=("json", "csv-summary"), default="json", help="report format"
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="upper bound on worker threads; results never depend on it "
        "(default: $%s or all cores)" % THREADS_ENV,
    )
    parser.add_argument(
        "--verbose", action="store_true", help="print timing to stderr (never into reports)"
    )


def _sigma_flags(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--sigma", type=float, default=None, help="fixed kernel bandwidth")
    group.add_argument(
        "--median",
        action="store_true",
        help="median-heuristic bandwidth (the default)",
    )


def _split_flags(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--split-mode", choices=("random", "interleave"), default="random",
        help="how to halve a set for the self-comparison metrics",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for random splits")
    parser.add_argument("--splits", type=int, default=5, help="random split repeats")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactile-evalkit",
        description="Distributional metrics and split-leakage audits for "
        "generative tactile models",
    )
    top = parser.add_subparsers(dest="command", required=True)

    p_metrics = top.add_parser("metrics", help="MMD metric family")
    sub = p_metrics.add_subparsers(dest="which", required=True)
    for name in ("tmmd", "embedding-mmd"):
        p = sub.add_parser(name, help="generated vs reference set MMD")
        p.add_argument("--generated", required=True, help="generated embeddings (.temb or .csv)")
        p.add_argument("--reference", required=True, help="reference embeddings (.temb or .csv)")
        _sigma_flags(p)
        _common_flags(p)
    p = sub.add_parser("itmmd", help="split-half MMD of one set against itself")
    p.add_argument("--generated", required=True)
    _sigma_flags(p)
    _split_flags(p)
    _common_flags(p)
    for name in ("citmmd", "dtmmd"):
        p = sub.add_parser(
            name,
            help="per-class split MMD" if name == "citmmd" else "class diversity score",
        )
        p.add_argument("--generated", required=True)
        p.add_argument("--meta", required=True, help="metadata with class labels (.jsonl)")
        _sigma_flags(p)
        _split_flags(p)
        _common_flags(p)

    p_base = top.add_parser("baseline", help="conventional reference metrics")
    sub = p_base.add_subparsers(dest="which", required=True)
    p = sub.add_parser("fid", help="Frechet distance between Gaussian fits")
    p.add_argument("--a", required=True, help="first embedding set")
    p.add_argument("--b", required=True, help="second embedding set")
    _common_flags(p)
    for name in ("ssim", "psnr"):
        p = sub.add_parser(name, help="%s between two PNG images" % name.upper())
        p.add_argument("--a", required=True, help="first PNG")
        p.add_argument("--b", required=True, help="second PNG")
        _common_flags(p)
    p = sub.add_parser("retrieval", help="cosine retrieval against a gallery")
    p.add_argument("--queries", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--pairs", required=True, help="jsonl with query_id/gallery_id records")
    p.add_argument("--k", default="1,5", help="comma-separated depths (default 1,5)")
    _common_flags(p)
    p = sub.add_parser("knn", help="k-NN class probe accuracy")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--meta", required=True, help="metadata with class labels for both sets")
    p.add_argument("--k", type=int, default=5, help="neighbor count (odd)")
    _common_flags(p)

    p = top.add_parser("audit", help="leakage audit of an existing split tagging")
    p.add_argument("--meta", required=True)
    p.add_argument("--embeddings", help="enable the near-duplicate scan")
    p.add_argument("--tau", type=float, default=0.95, help="cosine threshold (default 0.95)")
    _common_flags(p)

    p = top.add_parser("split", help="build a video-grouped train/test split")
    p.add_argument("--meta", required=True)
    p.add_argument("--test-frac", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratify", action="store_true", help="balance class fractions")
    p.add_argument("--out-dir", required=True, help="writes train.txt and test.txt here")
    _common_flags(p)

    p = top.add_parser("synth", help="write a synthetic scenario to disk")
    p.add_argument("--scenario", choices=synth._SCENARIOS, required=True)
    p.add_argument("--out-dir", required=True)
    _scenario_flags(p)
    _common_flags(p)

    p = top.add_parser("study", help="leak study: frame split vs video split")
    p.add_argument("--scenario", choices=synth._SCENARIOS, default="leakage")
    p.add_argument("--test-frac", type=float, default=0.2)
    _scenario_flags(p)
    _common_flags(p)

    return parser


def _scenario_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--classes", type=int, default=5)
    parser.add_argument("--videos-per-class", type=int, default=8)
    parser.add_argument("--frames-per-video", type=int, default=30)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--rho", type=float, default=0.97, help="intra-video correlation")
    parser.add_argument("--separation", type=float, default=3.0, help="class mean separation")
    parser.add_argument("--noise-scale", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)


def _spec(args) -> synth.ScenarioSpec:
    return synth.ScenarioSpec(
        scenario=args.scenario,
        classes=args.classes,
        videos_per_class=args.videos_per_class,
        frames_per_video=args.frames_per_video,
        dim=args.dim,
        intra_video_corr=args.rho,
        class_separation=args.separation,
        noise_scale=args.noise_scale,
        seed=args.seed,
    )


def _run_metrics(args) -> MetricReport:
    cfg = _mmd_config(args)
    generated = _load_emb(args.generated, "--generated")
    if args.which in ("tmmd", "embedding-mmd"):
        reference = _load_emb(args.reference, "--reference")
        if args.which == "tmmd":
            return metrics.tmmd(generated, reference, cfg)
        return baselines.embedding_mmd(generated, reference, cfg)
    if args.which == "itmmd":
        return metrics.i_tmmd(generated, cfg, _strategy(args))
    meta = _load_meta(args.meta, "--meta")
    from .store import partition_by_class

    partition = partition_by_class(generated, meta)
    if args.which == "citmmd":
        return metrics.ci_tmmd(generated, partition, cfg, _strategy(args), meta=meta)
    return metrics.d_tmmd(generated, partition, cfg, _strategy(args), meta=meta)


def _load_pairs(path: str, flag: str) -> dict[str, str]:
    import json

    pairs: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    pairs[str(record["query_id"])] = str(record["gallery_id"])
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise UsageError(
                        "%s: %s:%d: expected {query_id, gallery_id}" % (flag, path, lineno)
                    ) from None
    except FileNotFoundError:
        raise UsageError("%s: no such file: %s" % (flag, path)) from None
    return pairs


def _labels_for(e: EmbeddingSet, meta: MetaTable, flag: str) -> list[str]:
    labels = []
    for sample_id in e.ids:
        row = meta.get(sample_id)
        if row is None or row.class_label is None:
            raise UsageError("%s: sample %r has no class label" % (flag, sample_id))
        labels.append(row.class_label)
    return labels


def _run_baseline(args) -> MetricReport:
    if args.which == "fid":
        a = _load_emb(args.a, "--a")
        b = _load_emb(args.b, "--b")
        value = baselines.fid(baselines.fit_gaussian(a), baselines.fit_gaussian(b))
        return MetricReport(
            metric="fid",
            value=value,
            inputs={args.a: a.source_digest or "", args.b: b.source_digest or ""},
            extra={"dim": a.dim},
        )
    if args.which in ("ssim", "psnr"):
        try:
            img_a = baselines.load_image_gray(args.a)
        except (OSError, ValueError) as exc:
            raise UsageError("--a: %s" % exc) from None
        try:
            img_b = baselines.load_image_gray(args.b)
        except (OSError, ValueError) as exc:
            raise UsageError("--b: %s" % exc) from None
        fn = baselines.ssim if args.which == "ssim" else baselines.psnr
        value = fn(img_a, img_b)
        return MetricReport(
            metric=args.which,
            value=value,
            inputs={args.a: _digest(args.a, "--a"), args.b: _digest(args.b, "--b")},
            extra={"shape": list(img_a.shape)},
        )
    if args.which == "retrieval":
        queries = _load_emb(args.queries, "--queries")
        gallery = _load_emb(args.gallery, "--gallery")
        pairs = _load_pairs(args.pairs, "--pairs")
        try:
            ks = [int(k) for k in str(args.k).split(",") if k.strip()]
        except ValueError:
            raise UsageError("--k: expected comma-separated integers") from None
        result = baselines.retrieval_topk(queries, gallery, pairs, ks=ks)
        return MetricReport(
            metric="retrieval",
            value=result.topk[min(result.topk)],
            inputs={
                args.queries: queries.source_digest or "",
                args.gallery: gallery.source_digest or "",
                args.pairs: _digest(args.pairs, "--pairs"),
            },
            extra={"topk": result.topk, "ranks": result.ranks},
        )
    train = _load_emb(args.train, "--train")
    test = _load_emb(args.test, "--test")
    meta = _load_meta(args.meta, "--meta")
    accuracy = baselines.knn_probe(
        train,
        _labels_for(train, meta, "--train"),
        test,
        _labels_for(test, meta, "--test"),
        k=args.k,
    )
    return MetricReport(
        metric="knn",
        value=accuracy,
        inputs={
            args.train: train.source_digest or "",
            args.test: test.source_digest or "",
            args.meta: meta.source_digest or "",
        },
        extra={"k": args.k},
    )


def _run_audit(args) -> MetricReport:
    meta = _load_meta(args.meta, "--meta")
    embeddings = _load_emb(args.embeddings, "--embeddings") if args.embeddings else None
    result = leakage.audit_split(meta, embeddings, tau=args.tau)
    inputs = {args.meta: meta.source_digest or ""}
    if embeddings is not None:
        inputs[args.embeddings] = embeddings.source_digest or ""
    return MetricReport(
        metric="leakage-audit",
        value=result.leakage_rate,
        inputs=inputs,
        extra={
            "video_overlap": list(result.video_overlap),
            "min_frame_gap": result.min_frame_gap,
            "near_duplicates": [list(item) for item in result.near_duplicates],
            "train_count": result.train_count,
            "test_count": result.test_count,
            "tau": result.tau,
        },
    )


def _run_split(args) -> MetricReport:
    meta = _load_meta(args.meta, "--meta")
    assignment = leakage.make_noleak_split(
        meta,
        args.test_frac,
        seed=args.seed,
        stratify_key="class" if args.stratify else None,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.txt")
    test_path = os.path.join(args.out_dir, "test.txt")
    leakage.write_split_lists(assignment, train_path, test_path)
    train_ids, test_ids = leakage.split_to_lists(assignment)
    return MetricReport(
        metric="noleak-split",
        value=assignment.achieved_test_fraction(),
        inputs={args.meta: meta.source_digest or ""},
        extra={
            "target": args.test_frac,
            "seed": args.seed,
            "stratified": bool(args.stratify),
            "train_count": len(train_ids),
            "test_count": len(test_ids),
            "files": {
                train_path: sha256_file(train_path),
                test_path: sha256_file(test_path),
            },
        },
    )


def _run_synth(args) -> MetricReport:
    spec = _spec(args)
    output = synth.generate_scenario(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    from .store import write_embeddings, write_meta

    emb_path = os.path.join(args.out_dir, "embeddings.temb")
    meta_path = os.path.join(args.out_dir, "meta.jsonl")
    gen_path = os.path.join(args.out_dir, "generated.temb")
    files = {
        emb_path: write_embeddings(output.embeddings, emb_path),
        meta_path: write_meta(output.meta, meta_path),
        gen_path: write_embeddings(output.generator_outputs, gen_path),
    }
    return MetricReport(
        metric="synth-scenario",
        value=output.embeddings.count,
        # the spec goes in one nested dict; its "classes" count would
        # otherwise collide with the envelope's class-label list
        extra={"scenario": spec.scenario, "spec": asdict(spec), "files": files},
    )


def _run(args) -> MetricReport:
    if args.command == "metrics":
        return _run_metrics(args)
    if args.command == "baseline":
        return _run_baseline(args)
    if args.command == "audit":
        return _run_audit(args)
    if args.command == "split":
        return _run_split(args)
    if args.command == "synth":
        return _run_synth(args)
    if args.command == "study":
        return synth.run_leak_study(_spec(args), test_fraction=args.test_frac)
    raise AssertionError("unhandled command %r" % args.command)


def _resolve_threads(args) -> int | None:
    threads = args.threads
    if threads is None:
        raw = os.environ.get(THREADS_ENV)
        if raw:
            try:
                threads = int(raw)
            except ValueError:
                raise UsageError("$%s must be an integer, got %r" % (THREADS_ENV, raw)) from None
    if threads is not None and threads < 1:
        raise UsageError("--threads must be >= 1")
    return threads


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        # The thread cap is honored trivially: every kernel sum runs in a
        # fixed serial tile order, so any cap >= 1 is satisfied and the
        # report bytes never depend on it.
        _resolve_threads(args)
        report = _run(args)
        text = report.to_json() if args.format == "json" else report.to_csv_summary()
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (StoreError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:  # never a traceback to the user
        print("internal error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 1
    finally:
        if getattr(args, "verbose", False):
            print("[time] %.3fs" % (time.perf_counter() - started), file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
