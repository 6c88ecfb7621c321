"""``hwforest`` command line: train, eval, bench, stats."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import evalstats
from .cascade import build_report, fit_eval, predict_batch
from .config import CascadeConfig, cascade_config, encoding_map, parse_bool, parse_list, read_config_file
from .dataset import Dataset, SplitSpec, concat, load_csv, load_idx, split, split_indices
from .errors import ConfigError, HWForestError, ZeroVariance
from .forest import derive_seed, make_fold_plan, set_threads
from .serialize import load_model, read_header, save_model

log = logging.getLogger("hwforest")

_PATH_KEYS = ("data.train_images", "data.train_labels", "data.test_images", "data.test_labels",
              "data.train_csv", "data.test_csv")


def write_report(report: dict, path: Path) -> None:
    """Atomic JSON write with stable key order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _raw_config(args) -> dict[str, str]:
    raw = read_config_file(args.config) if args.config else {}
    overrides = {
        "seed": args.seed, "threads": args.threads, "out": args.out,
        "screening": args.screening, "scan.hash_screen": args.hash_screen,
        "grains": args.grains, "subsample": args.subsample, "preset": args.preset,
    }
    for key, v in overrides.items():
        if v is not None:
            raw[key] = str(v)
    return raw


def _check_paths(raw: dict[str, str], *keys: str) -> None:
    for key in (*_PATH_KEYS, *keys):
        if key in raw and not Path(raw[key]).is_file():
            raise ConfigError(f"{key}: no such file {raw[key]!r}")


def _label_column(raw):
    col = raw.get("data.label_column", "-1")
    return int(col) if col.lstrip("-").isdigit() else col


def load_data(raw: dict[str, str]) -> tuple[Dataset, Dataset | None]:
    if "data.train_images" in raw:
        if "data.train_labels" not in raw:
            raise ConfigError("data.train_images needs data.train_labels")
        train = load_idx(raw["data.train_images"], raw["data.train_labels"])
        test = None
        if "data.test_images" in raw:
            test = load_idx(raw["data.test_images"], raw["data.test_labels"])
        return train, test
    if "data.train_csv" in raw:
        header = parse_bool(raw["data.header"]) if "data.header" in raw else None
        kw = dict(header=header, encode=encoding_map(raw))
        col = _label_column(raw)
        train = load_csv(raw["data.train_csv"], col, **kw)
        test = load_csv(raw["data.test_csv"], col, **kw) if "data.test_csv" in raw else None
        if test is not None:
            test = _align_labels(train, test)
        return train, test
    raise ConfigError("no dataset configured (data.train_images or data.train_csv)")


def _align_labels(train: Dataset, test: Dataset) -> Dataset:
    """Re-express test labels in the training set's label coding."""
    names = list(train.label_names or ())
    for n in test.label_names or ():
        if n not in names:
            names.append(n)
    code = {n: i for i, n in enumerate(names)}
    y = np.array([code[test.label_names[c]] for c in test.labels], dtype=np.int64)
    return Dataset(test.features, y, len(names), test.image_shape, tuple(names))


def prepare(raw: dict[str, str]) -> tuple[CascadeConfig, Dataset, Dataset]:
    cfg = cascade_config(raw)
    _check_paths(raw)
    train, test = load_data(raw)
    if test is None:
        frac = 1.0 - float(raw.get("test_fraction", "0.2"))
        train, test = split(train, SplitSpec(frac, derive_seed(cfg.seed, 0x7E57)))
    if "subsample" in raw:
        frac = float(raw["subsample"])
        if not 0.0 < frac <= 1.0:
            raise ConfigError("subsample must be in (0, 1]")
        if frac < 1.0:
            train, _ = split(train, SplitSpec(frac, derive_seed(cfg.seed, 0x5B)))
    n_classes = max(train.n_classes, test.n_classes)
    train = Dataset(train.features, train.labels, n_classes, train.image_shape, train.label_names)
    test = Dataset(test.features, test.labels, n_classes, test.image_shape, test.label_names)
    return cfg, train, test


def cmd_train(args) -> int:
    raw = _raw_config(args)
    out = Path(raw.get("out", "."))
    cfg, train, test = prepare(raw)
    model, report = fit_eval(train, test, cfg)
    report["resolved_config"] = dict(sorted(raw.items()))
    save_model(model, out / "model.npz", cfg.to_dict())
    write_report(report, out / "report.json")
    print(f"accuracy {report['accuracy']:.4f}  levels {len(report['levels'])}  "
          f"wall {report['wall_time_seconds']:.1f}s  -> {out}")
    return 0


def cmd_eval(args) -> int:
    raw = _raw_config(args)
    model_path = args.model or raw.get("model")
    if not model_path or not Path(model_path).is_file():
        raise ConfigError(f"model file not found: {model_path!r}")
    out = Path(raw.get("out", "."))
    header = read_header(model_path)
    cfg = CascadeConfig(**{k: tuple(v) if isinstance(v, list) else v
                           for k, v in (header.get("config") or {}).items()})
    # same held-out split that train used for this config and seed
    _, _, test = prepare(raw)
    model = load_model(model_path)
    start = time.perf_counter()
    pred = predict_batch(model, test)
    acc = evalstats.accuracy(pred.proba.argmax(axis=1), test.labels)
    report = build_report(model, cfg, acc, pred, time.perf_counter() - start)
    report["resolved_config"] = dict(sorted(raw.items()))
    write_report(report, out / "eval_report.json")
    print(f"accuracy {acc:.4f} on {test.n_instances} instances -> {out}")
    return 0


def parse_arms(spec: str) -> list[dict]:
    """``on/window, off/binning`` -> arm dicts (hash screening / instance screening)."""
    arms = []
    for i, token in enumerate(parse_list(spec)):
        parts = [p.strip() for p in token.split("/")]
        if len(parts) != 2:
            raise ConfigError(f"arm {token!r}: expected '<on|off>/<window|binning|none>'")
        name = token if all(a["name"] != token for a in arms) else f"{token}#{i + 1}"
        arms.append({"name": name, "hash_screen": parse_bool(parts[0]), "screening": parts[1]})
    if not arms:
        raise ConfigError("bench.arms is empty")
    return arms


def _paired(diffs: list[float]) -> dict:
    out = {"diffs": diffs, "mean": float(np.mean(diffs))}
    if len(diffs) >= 2:
        try:
            out["paired_t"] = evalstats.paired_t(diffs)
        except ZeroVariance:
            out["paired_t"] = None
            out["zero_variance"] = True
    return out


def cmd_bench(args) -> int:
    raw = _raw_config(args)
    out = Path(raw.get("out", "."))
    cfg, train, test = prepare(raw)
    arms = parse_arms(raw.get("bench.arms", "on/window, off/window"))
    folds = int(raw.get("bench.folds", "1"))
    if folds >= 2:
        data = concat([train, test])
        plan = make_fold_plan(data.n_instances, folds, derive_seed(cfg.seed, 0xBE))
        splits = [(data.subset(plan.train_rows(f)), data.subset(plan.test_rows(f)))
                  for f in range(folds)]
    else:
        splits = [(train, test)]
    results = {a["name"]: [] for a in arms}
    for f, (tr, te) in enumerate(splits):
        for a in arms:
            arm_cfg = cfg.replace(hash_screen=a["hash_screen"], screening=a["screening"])
            _, rep = fit_eval(tr, te, arm_cfg)
            rep["fold"] = f
            results[a["name"]].append(rep)
            log.info("fold %d arm %s: accuracy %.4f, %.1fs", f, a["name"], rep["accuracy"],
                     rep["wall_time_seconds"])
    ref = arms[0]["name"]
    summary = []
    for a in arms[1:]:
        acc = [r["accuracy"] - b["accuracy"] for r, b in zip(results[a["name"]], results[ref])]
        tim = [r["wall_time_seconds"] - b["wall_time_seconds"]
               for r, b in zip(results[a["name"]], results[ref])]
        summary.append({"arm": a["name"], "baseline": ref,
                        "accuracy_delta": _paired(acc), "time_delta": _paired(tim)})
    report = {"arms": results, "summary": summary, "folds": len(splits),
              "resolved_config": dict(sorted(raw.items()))}
    write_report(report, out / "bench_report.json")
    for s in summary:
        print(f"{s['arm']} vs {s['baseline']}: accuracy delta {s['accuracy_delta']['mean']:+.4f}, "
              f"time delta {s['time_delta']['mean']:+.2f}s")
    return 0


def _read_accuracy_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    models = [c.strip() for c in rows[0][1:]]
    datasets = [r[0] for r in rows[1:]]
    acc = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    return models, datasets, acc


def _read_ranks_csv(path) -> tuple[list[str], list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    return [r[0] for r in rows[1:]], [float(r[1]) for r in rows[1:]]


def stats_report(models, rt: evalstats.RankTable, q_alpha: float, **extra) -> dict:
    return {
        **extra,
        "models": list(models),
        "mean_ranks": list(rt.mean_ranks),
        "n_datasets": rt.n_datasets,
        "n_models": rt.n_models,
        "friedman": evalstats.friedman(rt),
        "q_alpha": q_alpha,
        "critical_difference": evalstats.nemenyi_cd(rt.n_models, rt.n_datasets, q_alpha),
    }


def bundled(name: str) -> Path:
    return Path(str(resources.files("hwforest") / "data" / name))


def cmd_stats(args) -> int:
    raw = _raw_config(args)
    q = float(args.q_alpha or raw.get("stats.q_alpha", evalstats.Q_CRITICAL[(0.1, 7)]))
    source = args.input or raw.get("stats.input")
    ranks = args.ranks or raw.get("stats.ranks")
    if not source and not ranks:
        source = bundled("benchmark_accuracy.csv")
        ranks = bundled("benchmark_mean_ranks.csv")
    reports = {}
    if source:
        models, datasets, acc = _read_accuracy_csv(source)
        rt = evalstats.rank_table(acc)
        reports["from_accuracies"] = stats_report(models, rt, q, source=str(source),
                                                  datasets=datasets)
    if ranks:
        if not args.n_datasets and not source:
            raise ConfigError("--ranks needs --n-datasets")
        n = args.n_datasets or len(datasets)
        models, mean_ranks = _read_ranks_csv(ranks)
        restored = evalstats.restore_rank_grid(mean_ranks, n)
        reports["from_ranks"] = stats_report(models, evalstats.RankTable(restored, n), q,
                                             source=str(ranks), input_ranks=mean_ranks)
    out = Path(raw["out"]) if "out" in raw else None
    if out is not None:
        write_report(reports, out / "stats_report.json")
    json.dump(reports, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--screening", choices=("window", "binning", "none"))
    common.add_argument("--hash-screen", choices=("on", "off"))
    common.add_argument("--grains", help="comma-separated window sizes, e.g. 4,6,8")
    common.add_argument("--subsample", type=float, help="fraction of training data to use")
    common.add_argument("--preset", choices=("full", "desk"))
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="hwforest", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="fit a cascade and write model + report")
    ev = sub.add_parser("eval", parents=[common], help="score a saved model")
    ev.add_argument("--model", help="model file written by train")
    sub.add_parser("bench", parents=[common], help="paired ablation over screening arms")
    st = sub.add_parser("stats", parents=[common], help="rank table, Friedman statistic, CD")
    st.add_argument("--input", help="CSV: dataset column then one accuracy column per model")
    st.add_argument("--ranks", help="CSV: model,mean_rank")
    st.add_argument("--n-datasets", type=int)
    st.add_argument("--q-alpha", type=float)
    return ap


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "stats": cmd_stats}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        threads = args.threads or (int(os.environ["HWFOREST_THREADS"])
                                   if os.environ.get("HWFOREST_THREADS") else None)
        set_threads(threads)
        return COMMANDS[args.command](args)
    except (HWForestError, OSError, ValueError) as exc:
        print(f"hwforest {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
