"""Command-line interface: train, predict, benchmark, compare, explain.

Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure.
All artifacts are JSON (reports, models, comparisons) or CSV (score
matrices, calibration tables, predictions); reruns with the same seed and
inputs are byte-identical apart from timestamps, which ``--no-timestamps``
suppresses.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from .data import Dataset, DatasetConfig, load_config, load_csv, stratified_kfold
from .ensemble import (
    Arm1Model,
    FixedScores,
    MixtureModel,
    RawLinearModel,
    TwoLayerModel,
    attribute_subscales,
    hedge_weights,
    train_arm1,
    train_arm2,
    train_mixture,
    train_raw_nnlr,
)
from .errors import DataValidationError, NumericalError
from .glm import Link
from .lam import attribute_lam, find_alpha_star, approximation_grid
from .metrics import auc, calibration_table, certainty_fraction, ece, mce
from .persistence import load_model, save_model
from .stats import ScoreMatrix, compare_classifiers

_MODEL_IDS = {
    "nnlr": "NNLR",
    "lin-nnlr": "LinNNLR",
    "arm1": "ARM1",
    "lin-arm1": "LinARM1",
    "arm2": "ARM2",
    "lin-arm2": "LinARM2",
    "mix-arm1": "MixARM1",
    "mix-lin-arm1": "MixLinARM1",
}

_METRICS = ("auc", "ece", "mce", "certainty")


def _exit_codes(fn):
    """Map library errors onto the documented nonzero exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DataValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(3)
        except NumericalError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(4)

    return wrapper


@click.group()
def main() -> None:
    """Interpretable additive risk models and their evaluation harness."""


def _train_kind(
    kind: str,
    ds: Dataset,
    config: DatasetConfig,
    c_reg: float,
    seed: int,
    holdout: float,
):
    linearised = kind.startswith("lin-") or kind.startswith("mix-lin-")
    threshold = config.special_value_threshold
    if kind in ("nnlr", "lin-nnlr"):
        return train_raw_nnlr(ds, config.features, c_reg, linearised=linearised)
    if kind in ("arm1", "lin-arm1"):
        return train_arm1(
            ds, config.features, c_reg,
            special_value_threshold=threshold, linearised=linearised,
        )
    if kind in ("arm2", "lin-arm2"):
        return train_arm2(
            ds, config.features, config.subscales, c_reg,
            special_value_threshold=threshold, linearised=linearised,
        )
    if kind in ("mix-arm1", "mix-lin-arm1"):
        return train_mixture(
            ds, config.features, config.subscales, c_reg,
            seed=seed, special_value_threshold=threshold,
            linearised=linearised, holdout_fraction=holdout,
        )
    raise click.UsageError(f"unknown model kind {kind!r}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True), help="Training CSV.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--model", "kind", required=True,
              type=click.Choice(sorted(_MODEL_IDS)), help="Model kind to train.")
@click.option("--out", required=True, type=click.Path(), help="Model JSON output path.")
@click.option("--seed", default=0, show_default=True, help="Shuffle seed for mixture weights.")
@click.option("--c-reg", default=0.0, show_default=True, help="Ridge strength C.")
@click.option("--label-column", default="target", show_default=True)
@click.option("--hedge-holdout", default=0.0, show_default=True,
              help="Fraction of rows reserved for the mixture weight pass.")
@_exit_codes
def train(data, config_path, kind, out, seed, c_reg, label_column, hedge_holdout):
    """Train a model and persist it as JSON."""
    config = load_config(config_path)
    ds = load_csv(data, config, label_column)
    model = _train_kind(kind, ds, config, c_reg, seed, hedge_holdout)
    save_model(model, out, classifier=_MODEL_IDS[kind])
    click.echo(f"wrote {out}")


def _read_rows(path: str, feature_names: tuple[str, ...]) -> np.ndarray:
    """Read data rows for prediction; a label column, if present, is ignored."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        rows = list(reader)
    missing = [n for n in feature_names if n not in header]
    if missing:
        raise DataValidationError(f"{path}: missing feature columns {missing}")
    cols = [header.index(n) for n in feature_names]
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    try:
        return np.asarray(
            [[float(r[c]) for c in cols] for r in rows], dtype=np.float64
        )
    except ValueError as exc:
        raise DataValidationError(f"{path}: non-numeric cell ({exc})") from None


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@_exit_codes
def predict(model_path, data, out):
    """Score rows with a persisted model; writes a row,score CSV."""
    model = load_model(model_path)
    X = _read_rows(data, model.feature_names)
    scores = np.atleast_1d(np.asarray(model.predict_proba(X), dtype=np.float64))
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "score"])
        for i, s in enumerate(scores):
            writer.writerow([i, repr(float(s))])
    click.echo(f"wrote {out}")


def _derive_seed(master: int, *parts) -> int:
    digest = hashlib.sha256(repr((master, *parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _file_digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_external_scores(path: str, n_rows: int, k: int) -> dict[str, np.ndarray]:
    """Parse (row_id, fold_id, subscale, score) CSV into per-subscale matrices.

    Every (row, fold) pair must be covered: the fold-f column holds the
    scores produced by the external model trained with fold f held out.
    Returns subscale -> (n_rows, k) arrays.
    """
    tables: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"row_id", "fold_id", "subscale", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataValidationError(
                f"{path}: expected columns {sorted(required)}, got {reader.fieldnames}"
            )
        for line, rec in enumerate(reader, start=2):
            try:
                row = int(rec["row_id"])
                fold = int(rec["fold_id"])
                score = float(rec["score"])
            except ValueError as exc:
                raise DataValidationError(f"{path}: line {line}: {exc}") from None
            name = rec["subscale"]
            if not 0 <= row < n_rows:
                raise DataValidationError(f"{path}: line {line}: row_id {row} out of range")
            if not 0 <= fold < k:
                raise DataValidationError(f"{path}: line {line}: fold_id {fold} out of range")
            if not 0.0 <= score <= 1.0:
                raise DataValidationError(f"{path}: line {line}: score outside [0, 1]")
            tables.setdefault(name, np.full((n_rows, k), np.nan))[row, fold] = score
    if not tables:
        raise DataValidationError(f"{path}: no score rows")
    for name, table in tables.items():
        if np.isnan(table).any():
            raise DataValidationError(
                f"{path}: subscale {name!r} is missing scores for some (row, fold) pairs"
            )
    return tables


def _fold_metrics(scores: np.ndarray, labels: np.ndarray, cal_bins: int) -> dict:
    table = calibration_table(scores, labels, cal_bins)
    return {
        "auc": auc(scores, labels),
        "ece": ece(table),
        "mce": mce(table),
        "certainty": certainty_fraction(scores),
    }


def _run_trainable(kind, ds, config, plan, master_seed, c_reg, holdout, cal_bins, jobs):
    def one_fold(fold: int) -> dict:
        tr, te = plan.train_indices(fold), plan.test_indices(fold)
        seed = _derive_seed(master_seed, _MODEL_IDS[kind], fold)
        model = _train_kind(kind, ds.subset_rows(tr), config, c_reg, seed, holdout)
        scores = np.atleast_1d(
            np.asarray(model.predict_proba(ds.features[te]), dtype=np.float64)
        )
        return _fold_metrics(scores, ds.labels[te], cal_bins)

    folds = range(plan.k)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one_fold, folds))
    return [one_fold(f) for f in folds]


def _run_external(path, ds, plan, master_seed, label, cal_bins):
    tables = _load_external_scores(path, ds.n_rows, plan.k)
    names = sorted(tables)
    results = []
    for fold in range(plan.k):
        tr, te = plan.train_indices(fold), plan.test_indices(fold)
        fold_scores = np.column_stack([tables[n][:, fold] for n in names])
        if len(names) == 1:
            weights = np.ones(1)
        else:
            weights = hedge_weights(
                fold_scores[tr], ds.labels[tr], _derive_seed(master_seed, label, fold)
            )
        mixed = fold_scores[te] @ weights
        results.append(_fold_metrics(mixed, ds.labels[te], cal_bins))
    return results


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True),
              help="JSON list of {dataset, config, name} entries.")
@click.option("--models", required=True,
              help="Comma-separated kinds; 'mix-external:PATH' ingests a score CSV "
                   "(PATH may contain a {dataset} placeholder).")
@click.option("--folds", "k", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--label-column", default="target", show_default=True)
@click.option("--c-reg", default=0.0, show_default=True)
@click.option("--hedge-holdout", default=0.0, show_default=True)
@click.option("--cal-bins", default=15, show_default=True,
              help="Calibration bin count K.")
@click.option("--pool-calibration", is_flag=True,
              help="Additionally report ECE/MCE on predictions pooled across folds.")
@click.option("--jobs", default=1, show_default=True, help="Concurrent fold tasks.")
@click.option("--no-timestamps", is_flag=True, help="Omit timestamps for byte-stable output.")
@_exit_codes
def benchmark(manifest, models, k, seed, out_dir, label_column, c_reg, hedge_holdout,
              cal_bins, pool_calibration, jobs, no_timestamps):
    """Cross-validated evaluation of every (model, dataset) combination."""
    manifest_path = Path(manifest)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{manifest}: invalid JSON ({exc})") from None
    if not isinstance(entries, list) or not entries:
        raise DataValidationError(f"{manifest}: expected a non-empty JSON list")
    out = Path(out_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)

    model_tokens = [tok.strip() for tok in models.split(",") if tok.strip()]
    if not model_tokens:
        raise click.UsageError("no models given")
    for tok in model_tokens:
        if tok not in _MODEL_IDS and not tok.startswith("mix-external:"):
            raise click.UsageError(f"unknown model kind {tok!r}")

    datasets = []
    for entry in entries:
        for key in ("dataset", "config", "name"):
            if key not in entry:
                raise DataValidationError(f"{manifest}: entry missing {key!r}")
        config = load_config(str(manifest_path.parent / entry["config"]))
        ds = load_csv(str(manifest_path.parent / entry["dataset"]), config, label_column)
        datasets.append((entry["name"], ds, config, _file_digest(str(manifest_path.parent / entry["config"]))))

    matrices = {metric: {} for metric in _METRICS}
    model_ids = []
    for tok in model_tokens:
        model_id = _MODEL_IDS.get(tok, "MixExternal")
        model_ids.append(model_id)
        for name, ds, config, digest in datasets:
            plan = stratified_kfold(ds, k, seed)
            report = {
                "schema_version": 1,
                "classifier": model_id,
                "dataset": name,
                "folds": k,
                "seed": seed,
                "config_digest": digest,
                "cal_bins": cal_bins,
            }
            if tok.startswith("mix-external:"):
                report["external_scores"] = tok.split(":", 1)[1]
            if not no_timestamps:
                report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            try:
                if tok.startswith("mix-external:"):
                    score_path = tok.split(":", 1)[1].replace("{dataset}", name)
                    per_fold = _run_external(score_path, ds, plan, seed, model_id, cal_bins)
                else:
                    per_fold = _run_trainable(
                        tok, ds, config, plan, seed, c_reg, hedge_holdout, cal_bins, jobs
                    )
                report["per_fold"] = {
                    m: [f[m] for f in per_fold] for m in _METRICS
                }
                report["means"] = {
                    m: float(np.mean(report["per_fold"][m])) for m in _METRICS
                }
                if pool_calibration:
                    pooled_scores, pooled_labels = _pooled_predictions(
                        tok, ds, config, plan, seed, c_reg, hedge_holdout
                    )
                    table = calibration_table(pooled_scores, pooled_labels, cal_bins)
                    report["pooled"] = {"ece": ece(table), "mce": mce(table)}
                for metric in _METRICS:
                    matrices[metric].setdefault(model_id, {})[name] = report["means"][metric]
            except (DataValidationError, NumericalError) as exc:
                report["error"] = str(exc)
                for metric in _METRICS:
                    matrices[metric].setdefault(model_id, {})[name] = math.nan
            report_path = out / "reports" / f"{model_id}__{name}.json"
            with open(report_path, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")

    dataset_names = [name for name, *_ in datasets]
    for metric in _METRICS:
        rows = [["classifier", *dataset_names]]
        for model_id in model_ids:
            rows.append(
                [model_id]
                + [repr(float(matrices[metric][model_id][n])) for n in dataset_names]
            )
        with open(out / f"scores_{metric}.csv", "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerows(rows)
    click.echo(f"wrote {len(model_ids) * len(dataset_names)} reports to {out}")


def _pooled_predictions(tok, ds, config, plan, master_seed, c_reg, holdout):
    """Out-of-fold predictions for every row, for pooled calibration."""
    pooled = np.empty(ds.n_rows)
    for fold in range(plan.k):
        tr, te = plan.train_indices(fold), plan.test_indices(fold)
        if tok.startswith("mix-external:"):
            raise DataValidationError("pooled calibration is not supported for external scores")
        seed = _derive_seed(master_seed, _MODEL_IDS[tok], fold)
        model = _train_kind(tok, ds.subset_rows(tr), config, c_reg, seed, holdout)
        pooled[te] = np.atleast_1d(
            np.asarray(model.predict_proba(ds.features[te]), dtype=np.float64)
        )
    return pooled, ds.labels


@main.command()
@click.option("--scores", "score_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="Score matrix CSV (repeatable).")
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--lower-is-better", default="",
              help="Comma-separated file stems whose metric decreases with quality.")
@_exit_codes
def compare(score_paths, alpha, out_dir, lower_is_better):
    """Omnibus and pairwise comparison over one or more score matrices."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lower = {s.strip() for s in lower_is_better.split(",") if s.strip()}
    for path in score_paths:
        stem = Path(path).stem
        sm = ScoreMatrix.from_csv(path, higher_is_better=stem not in lower)
        result = compare_classifiers(sm, alpha)
        with open(out / f"{stem}_comparison.json", "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / f"{stem}_cd_edges.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["first", "second"])
            writer.writerows(result.edges)
        _write_pseudomedian_table(out / f"{stem}_pseudomedians.csv", result)
        click.echo(
            f"{stem}: chi2={result.chi2:.4f} F={result.f_statistic:.4f} "
            f"p={result.omnibus_p:.4g} edges={len(result.edges)}"
        )


def _write_pseudomedian_table(path: Path, result) -> None:
    """Upper-triangular pseudomedian matrix; '*' marks rejected pairs."""
    names = result.classifiers
    cell = {(p.first, p.second): p for p in result.pairwise}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["classifier", *names])
        for a in names:
            row = [a]
            for b in names:
                p = cell.get((a, b))
                if p is None:
                    row.append("---")
                else:
                    row.append(f"{p.pseudomedian:.6g}{'*' if p.rejected else ''}")
            writer.writerow(row)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--row", "row_path", required=True, type=click.Path(exists=True),
              help="CSV with a header and one data row.")
@click.option("--top-k", default=4, show_default=True,
              help="Number of reason codes to emit.")
@click.option("--out", type=click.Path(), help="Write the report here instead of stdout.")
@_exit_codes
def explain(model_path, row_path, top_k, out):
    """Attribution report for a single input row."""
    model = load_model(model_path)
    X = _read_rows(row_path, model.feature_names)
    if X.shape[0] != 1:
        raise DataValidationError(f"{row_path}: expected exactly one data row, got {X.shape[0]}")
    report = _explain_model(model, X[0], top_k)
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


def _feature_contributions(pipeline, x: np.ndarray) -> dict:
    """Per-source-feature additive contributions for one row."""
    if isinstance(pipeline, Arm1Model):
        encoded = pipeline.transform.transform(x[None, :])[0]
        sources = tuple(c.source for c in pipeline.transform.columns)
        inner = pipeline.model
    else:
        encoded = x
        sources = pipeline.feature_names
        inner = pipeline.model
    if inner.link is Link.LINEARISED:
        attribution = attribute_lam(inner, encoded)
        return {
            "space": "probability",
            "bias_term": attribution.bias_term,
            "faithful": attribution.faithful,
            "pre_clip_score": attribution.pre_clip_score,
            "prediction": attribution.prediction,
            "features": attribution.by_feature(sources),
        }
    contribs: dict[str, float] = {}
    for src, c, v in zip(sources, inner.coefficients, encoded):
        contribs[src] = contribs.get(src, 0.0) + float(c * v)
    logit = float(inner.predict_logit(encoded))
    return {
        "space": "log-odds",
        "bias_term": float(inner.bias),
        "prediction": float(inner.predict_proba(encoded)),
        "logit": logit,
        "features": contribs,
    }


def _explain_model(model, x: np.ndarray, top_k: int) -> dict:
    if isinstance(model, MixtureModel):
        contributions = attribute_subscales(model, x)
        prediction = float(sum(contributions.values()))
        reasons = []
        for name, value in list(contributions.items())[:top_k]:
            entry = {"subscale": name, "contribution": value,
                     "weight": model.weights[name]}
            sub = model.submodels[name]
            if isinstance(sub, (Arm1Model, RawLinearModel)):
                pos = {n: i for i, n in enumerate(model.feature_names)}
                cols = [pos[f] for f in sub.feature_names]
                entry["breakdown"] = _feature_contributions(sub, x[cols])
            reasons.append(entry)
        return {
            "kind": "mixture",
            "prediction": prediction,
            "subscale_contributions": contributions,
            "reason_codes": reasons,
        }
    if isinstance(model, TwoLayerModel):
        risks = model.subscale_risks(x[None, :])[0]
        out = {
            "kind": "two-layer",
            "prediction": float(np.atleast_1d(model.predict_proba(x[None, :]))[0]),
            "subscale_risks": {
                n: float(r) for n, r in zip(model.subscale_names, risks)
            },
            "outer": _feature_contributions_raw(model.outer, risks),
        }
        return out
    report = _feature_contributions(model, x)
    features = report.pop("features")
    ranked = sorted(features.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    report["kind"] = "additive"
    report["feature_contributions"] = dict(ranked)
    report["reason_codes"] = [
        {"feature": n, "contribution": v} for n, v in ranked[:top_k]
    ]
    return report


def _feature_contributions_raw(inner, values: np.ndarray) -> dict:
    if inner.link is Link.LINEARISED:
        attribution = attribute_lam(inner, values)
        return {
            "space": "probability",
            "bias_term": attribution.bias_term,
            "faithful": attribution.faithful,
            "contributions": dict(zip(attribution.column_names,
                                      map(float, attribution.contributions))),
        }
    return {
        "space": "log-odds",
        "bias_term": float(inner.bias),
        "contributions": {
            n: float(c * v)
            for n, c, v in zip(inner.column_names, inner.coefficients, values)
        },
    }


@main.command("approx-report")
@click.option("--tol", default=1e-10, show_default=True)
@click.option("--out", type=click.Path(), help="Report JSON path (stdout if omitted).")
@click.option("--grid-csv", type=click.Path(),
              help="Also write an (alpha, squared_error) sample grid.")
@_exit_codes
def approx_report(tol, out, grid_csv):
    """Search for the optimal clipped-linear slope and report the fit."""
    report = find_alpha_star(tol=tol)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)
    if grid_csv:
        with open(grid_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha", "squared_error"])
            for a, se in approximation_grid():
                writer.writerow([repr(a), repr(se)])
        click.echo(f"wrote {grid_csv}")


@main.command("split-rows")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--ranges", required=True,
              help="Comma-separated half-open row ranges, e.g. '0:100000,100000:200000'.")
@click.option("--out-template", required=True,
              help="Output path template containing {i}, e.g. part_{i}.csv.")
@_exit_codes
def split_rows(data, ranges, out_template):
    """Cut a CSV into contiguous row ranges (header repeated in each part)."""
    if "{i}" not in out_template:
        raise click.UsageError("--out-template must contain {i}")
    with open(data, "r", encoding="utf-8", newline="") as fh:
        lines = fh.readlines()
    if not lines:
        raise DataValidationError(f"{data}: empty file")
    header, body = lines[0], lines[1:]
    for i, token in enumerate(t for t in ranges.split(",") if t.strip()):
        try:
            lo_s, hi_s = token.split(":")
            lo, hi = int(lo_s), int(hi_s)
        except ValueError:
            raise click.UsageError(f"bad range token {token!r}") from None
        if not 0 <= lo < hi <= len(body):
            raise DataValidationError(
                f"range [{lo}, {hi}) out of bounds for {len(body)} data rows"
            )
        out_path = out_template.format(i=i)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header)
            fh.writelines(body[lo:hi])
        click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
