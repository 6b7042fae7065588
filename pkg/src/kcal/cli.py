"""Command-line front end wiring the calibration pipeline.

Subcommands: synth, train, calibrate, predict, eval, reliability, sweep,
temp-scale. Every command is deterministic given its flags, input files
and seed; a JSON run manifest with input/output digests and timing is
written next to each primary output. Exit codes: 0 success, 2 validation
or format problems, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import (
    BandwidthLaw,
    BandwidthSearchConfig,
    analytic_bandwidth,
    fit_bandwidth_constant,
    tune_bandwidth,
)
from .baseline_ts import apply_temperature, fit_temperature, softmax
from .dataio import (
    MAGIC_EMBEDDINGS,
    MAGIC_LOGITS,
    MAGIC_PROBS,
    EmbeddingDataset,
    class_partition,
    read_csv_dataset,
    read_label_file,
    read_matrix_file,
    write_label_file,
    write_matrix_file,
)
from .errors import KcalError, NumericalError, ValidationError
from .kde import KdeModel, kde_predict, load_model, save_model
from .metrics import (
    BinningKind,
    BinningScheme,
    accuracy,
    brier_multi,
    brier_top,
    cece,
    cece_threshold,
    ece,
    nll,
    reaggregate_ece,
    reliability_data,
    validate_prob_matrix,
)
from .projection import Arch, load_projection, project_forward, save_projection
from .synth import GmmOracle, full_calibration_error, generate_gmm, oracle_posterior
from .trainer import TrainConfig, train_projection

_ARCH_NAMES = {"mlp2": Arch.MLP2_SKIP, "linear": Arch.LINEAR, "identity": Arch.IDENTITY}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


class RunManifest:
    """Records resolved config, input/output digests, seed and timing."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.config = {
            key: value
            for key, value in sorted(vars(args).items())
            if key != "func" and not key.startswith("_")
        }
        self.inputs = {}
        self.outputs = {}
        self.notes = {}
        self._start = time.perf_counter()

    def add_input(self, path):
        self.inputs[str(path)] = _sha256(path)

    def add_output(self, path):
        self.outputs[str(path)] = _sha256(path)

    def write(self, path):
        payload = {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "notes": self.notes,
            "seed": self.config.get("seed"),
            "timing_seconds": round(time.perf_counter() - self._start, 6),
            "version": __version__,
        }
        _write_json(path, payload)


def _manifest_path(args, primary_out) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    return Path(str(primary_out) + ".manifest.json")


def _read_features(path, kind: str) -> np.ndarray:
    """Read an embeddings/logits matrix; CSV routes on file extension."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_dataset(path, with_labels=False).embeddings
    magic = MAGIC_LOGITS if kind == "logits" else MAGIC_EMBEDDINGS
    return read_matrix_file(path, magic)


def _read_labels(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        values = read_csv_dataset(path, with_labels=False).embeddings
        if values.shape[1] != 1:
            raise ValidationError(f"{path}: label CSV must have one column")
        labels = values[:, 0].astype(np.int64)
        return labels, int(labels.max()) + 1
    return read_label_file(path)


def _scheme(name: str, bins: int) -> BinningScheme:
    try:
        kind = BinningKind(name)
    except ValueError:
        raise ValidationError(f"unknown binning scheme {name!r}") from None
    return BinningScheme(kind, bins)


# ----------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    manifest = RunManifest("synth", args)
    priors = (
        np.full(args.classes, 1.0 / args.classes)
        if args.priors is None
        else np.array([float(v) for v in args.priors.split(",")])
    )
    dataset, oracle = generate_gmm(
        args.classes, args.dim, args.separation, args.sigma, priors, args.n, args.seed
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emb_path = out_dir / f"{args.prefix}.kemb"
    lab_path = out_dir / f"{args.prefix}.klab"
    oracle_path = out_dir / f"{args.prefix}.oracle.json"
    write_matrix_file(emb_path, dataset.embeddings, MAGIC_EMBEDDINGS)
    write_label_file(lab_path, dataset.labels, dataset.num_classes)
    _write_json(oracle_path, oracle.to_dict())
    for path in (emb_path, lab_path, oracle_path):
        manifest.add_output(path)
    manifest.write(out_dir / f"{args.prefix}.manifest.json")
    print(f"wrote {emb_path}, {lab_path}, {oracle_path}")
    return 0


# ----------------------------------------------------------------- train


_TRAIN_FLAG_FIELDS = {
    "batch_size": "batch_size",
    "background": "per_class_background",
    "lr": "learning_rate",
    "epochs": "epochs",
    "batches_per_epoch": "batches_per_epoch",
    "patience": "plateau_patience",
    "factor": "plateau_factor",
    "seed": "seed",
    "arch": "arch",
    "dim": "dim",
}


def _resolve_train_config(args, manifest) -> TrainConfig:
    """Defaults < JSON config file < explicitly-passed CLI flags."""
    values = {}
    if args.config:
        payload = json.loads(Path(args.config).read_text())
        manifest.add_input(args.config)
        unknown = set(payload) - set(_TRAIN_FLAG_FIELDS.values())
        if unknown:
            raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
        values.update(payload)
    for flag, field in _TRAIN_FLAG_FIELDS.items():
        flag_value = getattr(args, flag)
        if flag_value is not None:
            values[field] = flag_value
    if isinstance(values.get("arch"), str):
        values["arch"] = _ARCH_NAMES[values["arch"]]
    return TrainConfig(**values)


def cmd_train(args) -> int:
    manifest = RunManifest("train", args)
    features = _read_features(args.emb, args.input)
    labels, num_classes = _read_labels(args.labels)
    manifest.add_input(args.emb)
    manifest.add_input(args.labels)
    dataset = EmbeddingDataset(features, labels, num_classes)
    config = _resolve_train_config(args, manifest)
    manifest.notes["resolved_config"] = {
        "batch_size": config.batch_size,
        "per_class_background": config.per_class_background,
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batches_per_epoch": config.batches_per_epoch,
        "plateau_patience": config.plateau_patience,
        "plateau_factor": config.plateau_factor,
        "seed": config.seed,
        "arch": config.arch.value,
        "dim": config.dim,
    }
    report = train_projection(config, dataset)
    for epoch, (loss, lr) in enumerate(
        zip(report.epoch_losses, report.learning_rates), start=1
    ):
        print(f"epoch {epoch}/{config.epochs} loss={loss:.6f} lr={lr:g}")
    save_projection(args.out, report.params)
    manifest.add_output(args.out)
    report_path = args.report or f"{args.out}.report.json"
    _write_json(
        report_path,
        {
            "epoch_losses": report.epoch_losses,
            "learning_rates": report.learning_rates,
            "seed": report.seed,
            "arch": config.arch.value,
            "d": report.params.d,
            "h": report.params.h,
        },
    )
    manifest.add_output(report_path)
    manifest.write(_manifest_path(args, args.out))
    return 0


# ------------------------------------------------------------- calibrate


def _project_quantized(params, features) -> np.ndarray:
    """Project then round-trip through float32, the stored precision."""
    z, _ = project_forward(params, features)
    return z.astype(np.float32).astype(np.float64)


def cmd_calibrate(args) -> int:
    manifest = RunManifest("calibrate", args)
    params = load_projection(args.proj)
    features = _read_features(args.emb, args.input)
    labels, num_classes = _read_labels(args.labels)
    for path in (args.proj, args.emb, args.labels):
        manifest.add_input(path)
    if features.shape[0] != labels.shape[0]:
        raise ValidationError("embeddings and labels disagree on n")
    support = _project_quantized(params, features)
    counts = np.bincount(labels, minlength=num_classes)
    empty = np.flatnonzero(counts == 0).tolist()
    if empty:
        warnings.warn(
            f"classes {empty} have no calibration points; their predicted "
            "probability is prior-only (zero)",
            stacklevel=2,
        )
    law_payload = None
    if args.bandwidth_law is not None:
        m = int(counts[counts > 0].min())
        law = BandwidthLaw(args.bandwidth_law, params.d)
        b_star = analytic_bandwidth(law, m)
        law_payload = {"constant": law.constant, "dim": law.dim, "m": m}
    else:
        config = BandwidthSearchConfig(args.lb, args.ub, args.tol, loo=args.loo)
        b_star = tune_bandwidth(support, labels, config)
    model = KdeModel(support, labels, counts, b_star, params, bandwidth_law=law_payload)
    save_model(args.out, model)
    manifest.add_output(args.out)
    manifest.notes.update(
        {
            "bandwidth": b_star,
            "class_counts": counts.tolist(),
            "empty_classes": empty,
            "loo": bool(args.loo),
            "bandwidth_law": law_payload,
        }
    )
    manifest.write(_manifest_path(args, args.out))
    print(f"bandwidth={b_star:.6g} support={support.shape[0]} classes={num_classes}")
    return 0


# --------------------------------------------------------------- predict


def cmd_predict(args) -> int:
    manifest = RunManifest("predict", args)
    model = load_model(args.model)
    features = _read_features(args.emb, args.input)
    manifest.add_input(args.model)
    manifest.add_input(args.emb)
    if features.shape[1] != model.projection.h:
        raise ValidationError(
            f"query width {features.shape[1]} != model input width "
            f"{model.projection.h}"
        )
    if args.loo and features.shape[0] != model.n_support:
        raise ValidationError(
            "--loo requires the query file to be the calibration set"
        )
    probs, fallback = kde_predict(
        model,
        features if not args.loo else None,
        leave_one_out=args.loo,
        return_fallback_mask=True,
    )
    write_matrix_file(args.out, probs, MAGIC_PROBS)
    manifest.add_output(args.out)
    manifest.notes["underflow_fallbacks"] = int(fallback.sum())
    manifest.write(_manifest_path(args, args.out))
    print(f"wrote {args.out} rows={probs.shape[0]} fallbacks={int(fallback.sum())}")
    return 0


# ------------------------------------------------------------------ eval


def _metric_payload(probs, labels, schemes, bins):
    payload = {
        "n": int(probs.shape[0]),
        "num_classes": int(probs.shape[1]),
        "n_bins": bins,
        "cece_threshold": cece_threshold(probs.shape[1]),
        "accuracy": accuracy(probs, labels),
        "nll": nll(probs, labels),
        "brier_top": brier_top(probs, labels),
        "brier_multi": brier_multi(probs, labels),
        "ece": {},
        "cece": {},
        "schemes": schemes,
    }
    for name in schemes:
        scheme = _scheme(name, bins)
        payload["ece"][name] = ece(probs, labels, scheme)
        payload["cece"][name] = cece(probs, labels, scheme)
    return payload


def cmd_eval(args) -> int:
    manifest = RunManifest("eval", args)
    probs = read_matrix_file(args.pred, MAGIC_PROBS)
    labels, num_classes = _read_labels(args.labels)
    manifest.add_input(args.pred)
    manifest.add_input(args.labels)
    if probs.shape[0] != labels.shape[0]:
        raise ValidationError("predictions and labels disagree on n")
    if probs.shape[1] < num_classes:
        raise ValidationError(
            f"prediction width {probs.shape[1]} below num_classes {num_classes}"
        )
    if args.validate:
        validate_prob_matrix(probs)
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    payload = _metric_payload(probs, labels, schemes, args.bins)
    _write_json(args.out, payload)
    manifest.add_output(args.out)
    manifest.write(_manifest_path(args, args.out))
    print(json.dumps(payload, sort_keys=True))
    return 0


# ----------------------------------------------------------- reliability


def _parse_axis(value: str):
    if value == "confidence":
        return "confidence", None
    if value.startswith("class:"):
        return "class", int(value.split(":", 1)[1])
    raise ValidationError(f"axis must be 'confidence' or 'class:k', got {value!r}")


def cmd_reliability(args) -> int:
    manifest = RunManifest("reliability", args)
    probs = read_matrix_file(args.pred, MAGIC_PROBS)
    labels, _ = _read_labels(args.labels)
    manifest.add_input(args.pred)
    manifest.add_input(args.labels)
    axis, class_k = _parse_axis(args.axis)
    if axis == "class" and not 0 <= class_k < probs.shape[1]:
        raise ValidationError(
            f"class index {class_k} out of range for K={probs.shape[1]}"
        )
    scheme = _scheme(args.scheme, args.bins)
    data = reliability_data(
        probs, labels, axis, scheme, min_count=args.min_count, class_k=class_k
    )
    payload = {
        "axis": data.axis,
        "scheme": scheme.kind.value,
        "n_bins": scheme.n_bins,
        "min_count": data.min_count,
        "n_samples": data.n_samples,
        "bins": [
            {
                "mean_predicted": b.mean_predicted,
                "frequency": b.frequency,
                "count": b.count,
            }
            for b in data.bins
        ],
        "weighted_gap": reaggregate_ece(data),
    }
    _write_json(args.out, payload)
    manifest.add_output(args.out)
    if args.csv:
        lines = ["mean_predicted,frequency,count"]
        lines += [f"{b.mean_predicted!r},{b.frequency!r},{b.count}" for b in data.bins]
        Path(args.csv).write_text("\n".join(lines) + "\n")
        manifest.add_output(args.csv)
    if args.plot:
        from .viz import plot_reliability

        plot_reliability(data, args.plot)
        manifest.add_output(args.plot)
    manifest.write(_manifest_path(args, args.out))
    print(f"bins={len(data.bins)} weighted_gap={payload['weighted_gap']:.6f}")
    return 0


# ----------------------------------------------------------------- sweep


def _stratified_subsample(labels, per_class, rng):
    """Per-class indices of up to ``per_class`` rows each, seeded."""
    picked = []
    partition = class_partition(labels, int(labels.max()) + 1)
    for members in partition.per_class_indices:
        if members.size == 0:
            continue
        take = min(per_class, members.size)
        if take < per_class:
            warnings.warn(
                f"class has only {members.size} rows, below requested "
                f"{per_class} per class",
                stacklevel=2,
            )
        picked.append(rng.choice(members, size=take, replace=False))
    return np.sort(np.concatenate(picked))


def cmd_sweep(args) -> int:
    manifest = RunManifest("sweep", args)
    params = load_projection(args.proj)
    pool_features = _read_features(args.emb, args.input)
    pool_labels, num_classes = _read_labels(args.labels)
    test_features = _read_features(args.test_emb, args.input)
    test_labels, _ = _read_labels(args.test_labels)
    for path in (args.proj, args.emb, args.labels, args.test_emb, args.test_labels):
        manifest.add_input(path)
    oracle = None
    truth = None
    if args.oracle:
        oracle = GmmOracle.from_dict(json.loads(Path(args.oracle).read_text()))
        manifest.add_input(args.oracle)
        truth = oracle_posterior(oracle, test_features)
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    rows = []
    pairs = []
    scheme_a = BinningScheme(BinningKind.ADAPTIVE, args.bins)
    scheme_s = BinningScheme(BinningKind.STATIC, args.bins)
    for size in sizes:
        per_class = size if args.per_class else size // num_classes
        if per_class < 1:
            warnings.warn(f"size {size} below one point per class; skipped", stacklevel=2)
            continue
        idx = _stratified_subsample(pool_labels, per_class, rng)
        support = _project_quantized(params, pool_features[idx])
        labels = pool_labels[idx]
        counts = np.bincount(labels, minlength=num_classes)
        config = BandwidthSearchConfig(tol=args.tol, loo=args.loo)
        b_star = tune_bandwidth(support, labels, config)
        model = KdeModel(support, labels, counts, b_star, params)
        probs = kde_predict(model, test_features)
        m = int(counts[counts > 0].min())
        pairs.append((m, b_star))
        row = {
            "size_total": int(idx.size),
            "per_class_m": m,
            "b_star": b_star,
            "accuracy": accuracy(probs, test_labels),
            "ece_adaptive": ece(probs, test_labels, scheme_a),
            "ece_static": ece(probs, test_labels, scheme_s),
            "cece_adaptive": cece(probs, test_labels, scheme_a),
            "cece_static": cece(probs, test_labels, scheme_s),
            "brier_top": brier_top(probs, test_labels),
            "brier_multi": brier_multi(probs, test_labels),
            "nll": nll(probs, test_labels),
        }
        if truth is not None:
            row["full_calibration_error"] = full_calibration_error(probs, truth)
        rows.append(row)
        print(f"size={row['size_total']} m={m} b*={b_star:.6g}")
    if not rows:
        raise ValidationError("no sweep sizes were usable")
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns))
    Path(args.out).write_text("\n".join(lines) + "\n")
    manifest.add_output(args.out)
    law_path = args.law_out or f"{args.out}.law.json"
    law = None
    if len(pairs) >= 2:
        law = fit_bandwidth_constant(pairs, params.d)
        _write_json(
            law_path,
            {
                "constant": law.constant,
                "dim": law.dim,
                "residual_rms": law.residual_rms,
                "pairs": [[m, b] for m, b in pairs],
            },
        )
        manifest.add_output(law_path)
    if args.plot_dir:
        from .viz import plot_bandwidth_law, plot_sweep_metrics

        plot_dir = Path(args.plot_dir)
        plot_dir.mkdir(parents=True, exist_ok=True)
        metrics_png = plot_dir / "sweep_metrics.png"
        plot_sweep_metrics(rows, metrics_png)
        manifest.add_output(metrics_png)
        if law is not None:
            law_png = plot_dir / "bandwidth_law.png"
            plot_bandwidth_law(pairs, law, law_png)
            manifest.add_output(law_png)
    manifest.write(_manifest_path(args, args.out))
    return 0


# ------------------------------------------------------------ temp-scale


def cmd_temp_scale(args) -> int:
    manifest = RunManifest("temp-scale", args)
    cal_logits = _read_features(args.cal_logits, "logits")
    cal_labels, _ = _read_labels(args.cal_labels)
    test_logits = _read_features(args.logits, "logits")
    for path in (args.cal_logits, args.cal_labels, args.logits):
        manifest.add_input(path)
    model = fit_temperature(cal_logits, cal_labels)
    probs = apply_temperature(model, test_logits)
    write_matrix_file(args.out, probs, MAGIC_PROBS)
    manifest.add_output(args.out)
    nll_at_one = nll(softmax(cal_logits), cal_labels)
    nll_at_t = nll(apply_temperature(model, cal_logits), cal_labels)
    json_path = args.json or f"{args.out}.ts.json"
    _write_json(
        json_path,
        {
            "temperature": model.temperature,
            "calibration_nll_at_t": nll_at_t,
            "calibration_nll_at_1": nll_at_one,
        },
    )
    manifest.add_output(json_path)
    manifest.write(_manifest_path(args, args.out))
    print(f"temperature={model.temperature:.6g}")
    return 0


# ------------------------------------------------------------- arguments


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcal",
        description="KDE-based post-hoc calibration of classifier embeddings",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a Gaussian-mixture dataset with oracle")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="synth")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--priors", default=None, help="comma-separated class priors")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the embedding projection")
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--config", default=None, help="JSON file of training settings")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--background", type=int, default=None, help="per-class m")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batches-per-epoch", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--factor", type=float, default=None)
    p.add_argument("--arch", choices=sorted(_ARCH_NAMES), default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--input", choices=["embeddings", "logits"], default="embeddings")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="build a KDE model from a calibration set")
    p.add_argument("--proj", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    loo = p.add_mutually_exclusive_group()
    loo.add_argument("--loo", dest="loo", action="store_true", default=True)
    loo.add_argument("--no-loo", dest="loo", action="store_false")
    p.add_argument("--lb", type=float, default=None)
    p.add_argument("--ub", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument(
        "--bandwidth-law",
        type=float,
        default=None,
        help="law constant C'; use analytic bandwidth instead of search",
    )
    p.add_argument("--input", choices=["embeddings", "logits"], default="embeddings")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="predict probabilities for query embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loo", action="store_true", default=False)
    p.add_argument("--input", choices=["embeddings", "logits"], default="embeddings")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="compute metrics from predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schemes", default="adaptive,static")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--validate", action="store_true", default=False)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reliability", help="reliability-diagram data (JSON/CSV/PNG)")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", default="confidence", help="'confidence' or 'class:k'")
    p.add_argument("--scheme", choices=["adaptive", "static"], default="adaptive")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--min-count", type=int, default=15)
    p.add_argument("--csv", default=None)
    p.add_argument("--plot", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("sweep", help="calibration-set-size sweep with bandwidth law")
    p.add_argument("--proj", required=True)
    p.add_argument("--emb", required=True, help="calibration pool embeddings")
    p.add_argument("--labels", required=True)
    p.add_argument("--test-emb", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated subset sizes")
    p.add_argument(
        "--per-class",
        action="store_true",
        default=False,
        help="sizes are per-class counts rather than totals",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--law-out", default=None)
    p.add_argument("--oracle", default=None, help="oracle JSON for true posterior")
    loo = p.add_mutually_exclusive_group()
    loo.add_argument("--loo", dest="loo", action="store_true", default=True)
    loo.add_argument("--no-loo", dest="loo", action="store_false")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--plot-dir", default=None)
    p.add_argument("--input", choices=["embeddings", "logits"], default="embeddings")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("temp-scale", help="temperature-scaling baseline")
    p.add_argument("--cal-logits", required=True)
    p.add_argument("--cal-labels", required=True)
    p.add_argument("--logits", required=True, help="logits to calibrate")
    p.add_argument("--out", required=True)
    p.add_argument("--json", default=None)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_temp_scale)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"kcal {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (KcalError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"kcal {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
