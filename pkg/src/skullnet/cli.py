"""Command-line pipeline: synth, train, extract, fit-knn, predict, evaluate.

Exit codes: 0 success, 2 bad arguments or validation failure, 3 I/O
failure (including corrupt model/classifier files), 4 numeric failure
during training.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import data, metrics, mlknn, nn, serialize
from . import train as train_mod
from .errors import NumericError, ValidationError
from .tensor import make_rng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _ratio(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skullnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled dataset")
    p.add_argument("--n", type=_positive_int, required=True, help="number of images")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train the CNN on a labelled dataset")
    p.add_argument("--data", required=True, help="dataset directory with labels.csv")
    p.add_argument("--config", help="key=value training configuration file")
    p.add_argument("--out", required=True, help="output model file (.skn)")
    p.add_argument("--history", help="loss history CSV (default: <out>.history.csv)")
    p.add_argument("--split-out", help="optional CSV recording the train/val/test split")
    p.add_argument("--train-ratio", type=_ratio, default=0.6)
    p.add_argument("--val-ratio", type=_ratio, default=0.2)
    p.add_argument("--test-ratio", type=_ratio, default=0.2)
    p.add_argument(
        "--no-group",
        action="store_true",
        help="split by sample instead of by study_id",
    )
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("extract", help="write flatten-layer features for every image")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="directory of images")
    p.add_argument("--out", required=True, help="output features CSV")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("fit-knn", help="fit the nearest-neighbour classifier on features")
    p.add_argument("--features", required=True, help="features CSV from extract")
    p.add_argument("--labels", required=True, help="labels.csv aligned by filename")
    p.add_argument("--k", type=_positive_int, default=3)
    p.add_argument("--s", type=float, default=1.0, help="Laplace smoothing strength")
    p.add_argument("--out", required=True, help="output classifier file (.skk)")
    p.set_defaults(handler=cmd_fit_knn)

    p = sub.add_parser("predict", help="predict labels for one image")
    p.add_argument("--model", required=True)
    p.add_argument("--knn", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("evaluate", help="run the full evaluation over a labelled set")
    p.add_argument("--model", required=True)
    p.add_argument("--knn", required=True)
    p.add_argument("--data", required=True, help="directory of images")
    p.add_argument("--labels", required=True, help="labels.csv naming the evaluation rows")
    p.add_argument("--report-dir", required=True)
    p.set_defaults(handler=cmd_evaluate)

    return parser


def cmd_synth(args) -> int:
    data.generate_synthetic(args.n, args.seed, args.out)
    print(f"wrote {args.n} images + labels.csv to {args.out}")
    return EXIT_OK


def _check_label_errors(labels: np.ndarray) -> None:
    violations = data.validate_consistency(labels)
    errors = [v for v in violations if v.severity == "error"]
    for v in violations:
        print(f"labels {v.severity}: {v.message}", file=sys.stderr)
    if errors:
        raise ValidationError(f"label matrix has {len(errors)} consistency errors")


def cmd_train(args) -> int:
    config = train_mod.parse_config(args.config) if args.config else train_mod.TrainConfig()
    dataset = data.load_dataset(args.data)
    _check_label_errors(dataset.labels)

    spec = train_mod.SplitSpec(
        ratios=(args.train_ratio, args.val_ratio, args.test_ratio),
        seed=config.seed,
        group_key=None if args.no_group else dataset.study_ids,
    )
    tr, va, te = train_mod.split_dataset(dataset.filenames, spec)
    if not tr:
        raise ValidationError("training partition is empty; adjust ratios")

    params = nn.build_extractor(make_rng(config.seed), config.leaky_slope)
    params, history = train_mod.train(
        params,
        dataset.images[tr],
        dataset.labels[tr],
        config,
        dataset.images[va] if va else None,
        dataset.labels[va] if va else None,
    )
    serialize.save_model(params, args.out)

    history_path = args.history or f"{args.out}.history.csv"
    lines = ["epoch,train_loss,val_loss"]
    for i, tl in enumerate(history.train_loss):
        vl = repr(history.val_loss[i]) if i < len(history.val_loss) else ""
        lines.append(f"{i + 1},{tl!r},{vl}")
    Path(history_path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    if args.split_out:
        rows = ["filename,partition"]
        for name, idxs in (("train", tr), ("val", va), ("test", te)):
            rows.extend(f"{dataset.filenames[i]},{name}" for i in idxs)
        Path(args.split_out).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")

    print(
        f"trained {len(history.train_loss)} epochs on {len(tr)} samples; "
        f"model -> {args.out}, history -> {history_path}"
    )
    return EXIT_OK


def _image_files(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir() if p.suffix.lower() in data.IMAGE_EXTENSIONS and p.is_file()
    )


def cmd_extract(args) -> int:
    params = serialize.load_model(args.model)
    directory = Path(args.data)
    if not directory.is_dir():
        raise ValidationError(f"{directory} is not a directory")
    files = _image_files(directory)
    if not files:
        raise ValidationError(f"no images found in {directory}")

    feature_rows = np.empty((len(files), nn.FEATURE_DIM), dtype=np.float32)
    for i, path in enumerate(files):
        image = data.preprocess_image(data.load_image(path))
        feature_rows[i] = nn.extract_features(params, image)
    frame = pd.DataFrame(feature_rows, columns=[f"f{j}" for j in range(feature_rows.shape[1])])
    frame.insert(0, "filename", [p.name for p in files])
    # %.9g round-trips float32 exactly
    frame.to_csv(args.out, index=False, float_format="%.9g", lineterminator="\n")
    print(f"wrote {len(files)} feature rows to {args.out}")
    return EXIT_OK


def _load_features_csv(path) -> tuple[list[str], np.ndarray]:
    try:
        frame = pd.read_csv(path)
    except OSError:
        raise
    except Exception as exc:
        raise ValidationError(f"cannot parse features CSV {path}: {exc}") from exc
    if frame.shape[1] < 2 or frame.columns[0] != "filename":
        raise ValidationError(f"{path}: expected header filename,f0,...")
    names = [str(v) for v in frame["filename"]]
    values = frame.iloc[:, 1:].to_numpy(dtype=np.float32)
    return names, values


def cmd_fit_knn(args) -> int:
    names, features = _load_features_csv(args.features)
    labels, filenames, _ = data.load_labels_csv(args.labels)
    by_name = {f: i for i, f in enumerate(filenames)}
    missing = [n for n in names if n not in by_name]
    if missing:
        raise ValidationError(f"{len(missing)} feature rows missing from labels: {missing[:3]}...")
    aligned = labels[[by_name[n] for n in names]]
    model = mlknn.fit_mlknn(features, aligned, k=args.k, s=args.s)
    serialize.save_knn(model, args.out)
    print(f"fitted k={args.k} classifier on {features.shape[0]} samples -> {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    params = serialize.load_model(args.model)
    knn = serialize.load_knn(args.knn)
    image = data.preprocess_image(data.load_image(args.image))
    features = nn.extract_features(params, image)
    pred = mlknn.predict_mlknn(knn, features)
    for name, bit, conf in zip(data.LABEL_COLUMNS, pred.labels, pred.confidences):
        print(f"{name} {int(bit)} {conf:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params = serialize.load_model(args.model)
    knn = serialize.load_knn(args.knn)
    labels, filenames, _ = data.load_labels_csv(args.labels)
    if not filenames:
        raise ValidationError(f"{args.labels}: no rows to evaluate")
    directory = Path(args.data)

    features = np.empty((len(filenames), nn.FEATURE_DIM), dtype=np.float32)
    for i, fname in enumerate(filenames):
        image = data.preprocess_image(data.load_image(directory / fname))
        features[i] = nn.extract_features(params, image)
    predictions, confidences = mlknn.predict_batch(knn, features)

    report = metrics.full_report(labels, predictions, confidences, data.LABEL_COLUMNS)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    (report_dir / "report.txt").write_text(metrics.report_text(report), encoding="utf-8", newline="\n")
    (report_dir / "roc.csv").write_text(metrics.curves_csv(report, "roc"), encoding="utf-8", newline="\n")
    (report_dir / "pr.csv").write_text(metrics.curves_csv(report, "pr"), encoding="utf-8", newline="\n")
    conf_lines = ["label,tp,fp,tn,fn"]
    for name, lr in zip(report.label_names, report.per_label):
        c = lr.counts
        conf_lines.append(f"{name},{c.tp},{c.fp},{c.tn},{c.fn}")
    (report_dir / "confusion.csv").write_text("\n".join(conf_lines) + "\n", encoding="utf-8", newline="\n")

    print(
        f"evaluated {len(filenames)} samples: "
        f"subset_accuracy={report.subset_accuracy:.4f} "
        f"micro_f1={report.averages['micro'][2]:.4f} -> {report_dir}"
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
