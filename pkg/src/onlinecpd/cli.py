"""Command-line interface: ``onlinecpd {generate,detect,evaluate,benchmark}``."""
from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import io
from .datagen import FAMILIES, SyntheticSpec, generate_dataset
from .detect import DETECTORS, DetectionResult, DetectorConfig
from .metrics import DEFAULT_MARGIN, EvalReport, evaluate

logger = logging.getLogger("onlinecpd")

GRID_N = (1, 10)
GRID_EPOCHS = (1, 10)
GRID_LR = (0.1, 0.01)


def _default_seed() -> int:
    return int(os.environ.get("CPD_SEED", "0"))


def _default_workers() -> int:
    try:
        import psutil
        return psutil.cpu_count(logical=False) or 1
    except ImportError:  # pragma: no cover
        return os.cpu_count() or 1


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(args.family, args.segment_length, args.segments, args.noise_sigma,
                         args.seed, args.series)
    features = labels = None
    if args.family == "class_alternation":
        if not args.pool:
            raise ValueError("class_alternation needs --pool (labelled CSV, last column = label)")
        pool = io.read_series(args.pool).values
        features, labels = pool[:, :-1], pool[:, -1]
    manifest = []
    for i, (series, ann) in enumerate(generate_dataset(spec, features, labels)):
        stem = out / f"series_{i:03d}"
        io.write_series(series, stem.with_suffix(".csv"))
        io.write_annotation(ann.true_cps, stem.with_suffix(".cps"))
        manifest.append(f"{stem.name}.csv T={series.T} d={series.d} cps={ann.n_true} seed={spec.seed + i}")
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print("\n".join(manifest))
    return 0


# ---------------------------------------------------------------- detect


def _config_from_args(args, file_cfg: dict) -> tuple[str, DetectorConfig]:
    def pick(name, cfg_key=None):
        v = getattr(args, name, None)
        return v if v is not None else file_cfg.get(cfg_key or name)

    algo = pick("algo") or "onnc"
    kw = {}
    for arg, key in [("k", "k"), ("n", "n"), ("l", "l"), ("epochs", "n_epochs"), ("lr", "lr"),
                     ("alpha", "alpha"), ("hidden", "hidden"), ("activation", "activation"),
                     ("scale", "scale"), ("ratio_head", "ratio_head"), ("seed", "seed")]:
        v = pick(arg, key)
        if v is not None:
            kw[key] = tuple(v) if key == "hidden" else v
    kw.setdefault("seed", _default_seed())
    return algo, DetectorConfig(**kw)


def plot_detection(series, result: DetectionResult, path, true_cps=None) -> None:
    """Two-panel vector figure: signal on top, shifted score and detections below."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(10, 5))
    top.plot(series.index, series.values, lw=0.6)
    top.set_ylabel("x(t)")
    bottom.plot(result.score.times, result.score.smoothed, color="k", lw=0.8)
    bottom.axhline(result.threshold, color="grey", ls=":", lw=0.8)
    for c in result.detected_cps:
        bottom.axvline(c, color="tab:red", lw=0.8)
    for c in true_cps or ():
        top.axvline(c, color="tab:green", ls="--", lw=0.6)
    bottom.set_ylabel("shifted score")
    bottom.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, format=Path(path).suffix.lstrip(".") or "svg")
    plt.close(fig)


def cmd_detect(args) -> int:
    file_cfg = io.read_run_config(args.config) if args.config else {}
    algo, config = _config_from_args(args, file_cfg)
    threshold = args.threshold if args.threshold is not None else file_cfg.get("threshold")
    min_distance = args.min_distance if args.min_distance is not None else file_cfg.get("min_distance")
    series = io.read_series(args.series)
    result = DETECTORS[algo](series, config, threshold=threshold, min_distance=min_distance)
    out = args.out or file_cfg.get("scores") or str(Path(args.series).with_suffix(".scores.csv"))
    io.write_scores(result, out)
    plot = args.plot or file_cfg.get("plot")
    if plot:
        plot_detection(series, result, plot)
    print(f"algo={algo} threshold={result.threshold!r} detections={' '.join(map(str, result.detected_cps))}")
    print(f"scores={out}")
    return 0


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(args) -> int:
    detected = io.read_detections(args.scores)
    ann = io.read_annotation(args.annotation)
    if args.series:
        T = io.read_series(args.series).T
    elif args.T:
        T = args.T
    else:
        raise ValueError("series length unknown: pass --series or --T")
    for name, cps in (("detected", detected), ("true", ann.true_cps)):
        if len(cps) and (min(cps) < 1 or max(cps) > T):
            raise ValueError(f"{name} change points fall outside [1, {T}]: lengths do not match")
    report = evaluate(ann.true_cps, detected, T, margin=args.M)
    print(io.format_report(report), end="")
    if args.out:
        io.write_report(report, args.out)
    return 0


# ---------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchmarkSummary:
    algo: str
    best_config: DetectorConfig
    avg_rand_index: float
    avg_f1: float
    reports: tuple[EvalReport, ...]
    grid: tuple[tuple[DetectorConfig, float, float], ...]
    runtime: float = 0.0


def _load_dataset(path: Path):
    files = sorted(path.glob("*.csv"))
    files = [f for f in files if f.with_suffix(".cps").exists()]
    if not files:
        raise ValueError(f"empty dataset directory: {path}")
    return [(f.stem, io.read_series(f), io.read_annotation(f.with_suffix(".cps"))) for f in files]


def _bench_task(task):
    algo, config, series, cps, threshold, min_distance, margin = task
    result = DETECTORS[algo](series, config, threshold=threshold, min_distance=min_distance)
    report = evaluate(cps, result.detected_cps, series.T, margin=margin)
    return result, report


def run_benchmark(dataset, algo: str, base: DetectorConfig, grid_n=GRID_N, grid_epochs=GRID_EPOCHS,
                  grid_lr=GRID_LR, threshold=None, min_distance=None, margin: int = DEFAULT_MARGIN,
                  workers: int = 1, log=None):
    """Grid search maximising the average Rand index over ``dataset``.

    ``dataset`` is a list of ``(name, TimeSeries, Annotation)``. Series ``i``
    uses detector seed ``base.seed + i``. Returns the summary and the
    detection results of the selected configuration.
    """
    t0 = time.perf_counter()
    configs = [replace(base, n=n, n_epochs=ep, lr=lr)
               for n, ep, lr in itertools.product(grid_n, grid_epochs, grid_lr)]
    tasks = [(algo, replace(cfg, seed=base.seed + i), s, ann.true_cps, threshold, min_distance, margin)
             for cfg in configs for i, (_, s, ann) in enumerate(dataset)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_bench_task, tasks, chunksize=1))
    else:
        outputs = [_bench_task(t) for t in tasks]

    m = len(dataset)
    grid, best = [], None
    for c, cfg in enumerate(configs):
        chunk = outputs[c * m:(c + 1) * m]
        reports = [rep for _, rep in chunk]
        ri = float(np.mean([r.rand_index for r in reports]))
        f1 = float(np.mean([r.f1 for r in reports]))
        grid.append((cfg, ri, f1))
        if log is not None:
            for (name, _, _), (res, rep) in zip(dataset, chunk):
                log.append(f"{algo},{cfg.n},{cfg.n_epochs},{cfg.lr!r},{name},{rep.rand_index!r},{rep.f1!r},"
                           f"{len(res.detected_cps)}")
        if best is None or ri > best[1]:
            best = (c, ri, f1)
    c, ri, f1 = best
    chunk = outputs[c * m:(c + 1) * m]
    summary = BenchmarkSummary(algo=algo, best_config=configs[c], avg_rand_index=ri, avg_f1=f1,
                               reports=tuple(rep for _, rep in chunk), grid=tuple(grid),
                               runtime=time.perf_counter() - t0)
    return summary, [res for res, _ in chunk]


def format_summary(summary: BenchmarkSummary, names) -> str:
    cfg = summary.best_config
    lines = [f"algo={summary.algo}",
             f"n={cfg.n}", f"n_epochs={cfg.n_epochs}", f"lr={cfg.lr!r}", f"l={cfg.l}", f"k={cfg.k}",
             f"alpha={cfg.alpha!r}", f"hidden={' '.join(map(str, cfg.hidden))}",
             f"series={len(summary.reports)}",
             f"avg_rand_index={summary.avg_rand_index!r}", f"avg_f1={summary.avg_f1!r}"]
    for g, ri, f1 in summary.grid:
        lines.append(f"grid.n{g.n}_e{g.n_epochs}_lr{g.lr!r}=ri:{ri!r} f1:{f1!r}")
    lines.append("")
    lines.append("series," + io.report_csv_header())
    lines.extend(f"{name},{io.report_csv_row(r)}" for name, r in zip(names, summary.reports))
    return "\n".join(lines) + "\n"


def cmd_benchmark(args) -> int:
    dataset = _load_dataset(Path(args.dataset))
    base = DetectorConfig(k=args.k, l=args.l, alpha=args.alpha, hidden=tuple(args.hidden),
                          activation=args.activation, scale=args.scale, ratio_head=args.ratio_head,
                          seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log: list[str] = []
    summary, results = run_benchmark(dataset, args.algo, base, tuple(args.n), tuple(args.epochs),
                                     tuple(args.lr), threshold=args.threshold,
                                     min_distance=args.min_distance, margin=args.M,
                                     workers=args.workers, log=log)
    names = [name for name, _, _ in dataset]
    (out / "summary.txt").write_text(format_summary(summary, names))
    (out / "runs.csv").write_text("algo,n,n_epochs,lr,series,rand_index,f1,n_detected\n" + "\n".join(log) + "\n")
    for name, res in zip(names, results):
        io.write_scores(res, out / f"{name}.scores.csv")
    print(f"algo={args.algo} runs={len(log)} best n={summary.best_config.n} "
          f"n_epochs={summary.best_config.n_epochs} lr={summary.best_config.lr}")
    print(f"avg_rand_index={summary.avg_rand_index:.4f} avg_f1={summary.avg_f1:.4f} "
          f"runtime={summary.runtime:.1f}s")
    return 0


# ---------------------------------------------------------------- parser


def _add_detector_flags(p, grid: bool = False):
    p.add_argument("--algo", choices=sorted(DETECTORS), default=None if not grid else "onnc")
    p.add_argument("--k", type=int, default=None if not grid else 1)
    p.add_argument("--l", type=int, default=None if not grid else 100)
    if grid:
        p.add_argument("--n", type=int, nargs="+", default=list(GRID_N))
        p.add_argument("--epochs", type=int, nargs="+", default=list(GRID_EPOCHS))
        p.add_argument("--lr", type=float, nargs="+", default=list(GRID_LR))
    else:
        p.add_argument("--n", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
    p.add_argument("--alpha", type=float, default=None if not grid else 0.1)
    p.add_argument("--hidden", type=int, nargs="*", default=None if not grid else [32])
    p.add_argument("--activation", default=None if not grid else "tanh")
    p.add_argument("--scale", choices=["running", "none"], default=None if not grid else "running")
    p.add_argument("--ratio-head", choices=["square", "softplus"], default=None if not grid else "square",
                   help="output head of the ratio networks (onnr only)")
    p.add_argument("--seed", type=int, default=None if not grid else _default_seed())
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-distance", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onlinecpd", description="Online neural-network change-point detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark data set")
    g.add_argument("--family", required=True, choices=FAMILIES)
    g.add_argument("--series", type=int, default=10)
    g.add_argument("--seed", type=int, default=_default_seed())
    g.add_argument("--segment-length", type=int, default=200)
    g.add_argument("--segments", type=int, default=10)
    g.add_argument("--noise-sigma", type=float, default=2.0)
    g.add_argument("--pool", help="labelled CSV for class_alternation (last column is the 0/1 label)")
    g.add_argument("--out", default="data")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="score one series and extract change points")
    d.add_argument("series")
    _add_detector_flags(d)
    d.add_argument("--config", help="key=value run configuration file")
    d.add_argument("--out", help="score CSV path (default: <series>.scores.csv)")
    d.add_argument("--plot", help="write a two-panel figure (svg/pdf) to this path")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("evaluate", help="compare detections with an annotation")
    e.add_argument("--scores", required=True, help="score CSV or one-per-line detections file")
    e.add_argument("--annotation", required=True)
    e.add_argument("--series", help="series CSV, used for its length T")
    e.add_argument("--T", type=int)
    e.add_argument("--M", type=int, default=DEFAULT_MARGIN, help="matching margin")
    e.add_argument("--out", help="write key=value report here (plus a .csv row)")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("benchmark", help="grid search over a data set directory")
    b.add_argument("dataset")
    _add_detector_flags(b, grid=True)
    b.add_argument("--M", type=int, default=DEFAULT_MARGIN)
    b.add_argument("--workers", type=int, default=_default_workers())
    b.add_argument("--out", default="benchmark_out")
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
