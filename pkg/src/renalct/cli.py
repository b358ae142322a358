"""Command-line orchestration of the pipeline.

Stages communicate only through files (JSONL/CSV/PNG/DICOM/raw tensors), so
external trainers can splice in at any boundary. Every stage that owns an
output directory echoes its effective configuration (plus template hashes)
into run_config.json there; no timestamps, so identical configs produce
identical artifacts.

Exit codes: 0 success, 2 config error, 3 data error, 4 backend error,
5 not-computable metrics requested strictly.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__
from .backend import BackendConfig, generate_batch, report_to_dict
from .errors import ConfigError, DataError, RenalCtError
from .evaluation import (
    check_strict,
    evaluate_extractions,
    evaluate_prediction_columns,
)
from .extract import extraction_from_dict, extraction_to_dict, parse_report_llm, parse_report_rule_based
from .ingest import adjacent_indices, export_png, load_series, resolve_slice
from .metrics.nlg import TOKENIZER_VERSION
from .metrics.table import (
    FeatureRow,
    MetricTable,
    feature_csv,
    mean_over_folds,
    nlg_csv,
    text_table,
)
from .phantom import PhantomConfig, export_case_dicom, sample_cohort, save_truth
from .preprocess import SliceImage, WindowSpec, load_tensor, preprocess_slice, save_tensor
from .prompt import Modality, render_generation_prompt, template_hashes
from .schema import load_manifest, save_manifest
from .split import SplitConfig, load_fold_assignment, save_fold_assignment, split_manifest


def _fail(exc: RenalCtError) -> None:
    line = json.dumps(
        {"error": type(exc).__name__, "code": exc.exit_code, "message": str(exc)}
    )
    click.echo(line, err=True)
    sys.exit(exc.exit_code)


def pipeline_command(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RenalCtError as exc:
            _fail(exc)

    return wrapper


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None


def _resolve(ctx: click.Context, name: str, config: dict, *keys):
    """Flag beats config file beats click default."""
    source = ctx.get_parameter_source(name)
    if source is not None and source.name == "COMMANDLINE":
        return ctx.params[name]
    value = config
    for key in keys:
        if not isinstance(value, dict) or key not in value:
            return ctx.params[name]
        value = value[key]
    return value


def _echo_run_config(
    out_dir: Path, stage: str, params: dict, filename: str = "run_config.json"
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "stage": stage,
        "package_version": __version__,
        "tokenizer_version": TOKENIZER_VERSION,
        "template_hashes": template_hashes(),
        "params": params,
    }
    (out_dir / filename).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _echo_beside(out_path: Path, stage: str, params: dict) -> None:
    # Config echo for stages whose output is a single file.
    _echo_run_config(
        out_path.parent, stage, params, filename=f"{out_path.stem}.run_config.json"
    )


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise DataError(f"file not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
    return rows


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "\n".join(json.dumps(r, sort_keys=True) for r in rows) + ("\n" if rows else ""),
        encoding="utf-8",
    )


@click.group()
@click.version_option(version=__version__)
def main():
    """Renal CT reporting pipeline: curate, preprocess, prompt, generate,
    re-extract, and score."""


# ---------------------------------------------------------------------------
# phantom gen
# ---------------------------------------------------------------------------


@main.group()
def phantom():
    """Synthetic cohort generation."""


@phantom.command("gen")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--n", "n_annotations", default=130, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--slices", "slices_per_volume", default=5, show_default=True)
@click.option("--grid", "grid_size", default=512, show_default=True)
@click.option("--fov-cm", default=40.0, show_default=True)
@click.option("--exact-marginals/--sampled-marginals", default=False, show_default=True)
@click.option("--dicom/--no-dicom", "write_dicom", default=True, show_default=True)
@pipeline_command
def phantom_gen(out_dir, n_annotations, seed, slices_per_volume, grid_size,
                fov_cm, exact_marginals, write_dicom):
    """Generate a synthetic cohort: manifest, ground truth, DICOM series."""
    cfg = PhantomConfig(
        n_annotations=n_annotations,
        seed=seed,
        fov_cm=fov_cm,
        grid_size=grid_size,
        slices_per_volume=slices_per_volume,
        exact_marginals=exact_marginals,
    )
    manifest, cases = sample_cohort(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    save_truth(cases, out_dir / "truth.jsonl")
    if write_dicom:
        dicom_dir = out_dir / "dicom"
        for case in cases:
            export_case_dicom(case, dicom_dir)
    _echo_run_config(
        out_dir, "phantom_gen",
        {
            "n": n_annotations, "seed": seed, "slices": slices_per_volume,
            "grid": grid_size, "fov_cm": fov_cm,
            "exact_marginals": exact_marginals, "dicom": write_dicom,
        },
    )
    click.echo(f"wrote {len(manifest)} annotations to {out_dir}")


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--dicom-root", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--png", "write_png", is_flag=True, default=False)
@click.option("--adjacent", "write_adjacent", is_flag=True, default=False,
              help="Also resolve the -1/+1 neighbor slices.")
@click.option("--descending", is_flag=True, default=False,
              help="Series stores SliceLocation descending.")
@pipeline_command
def ingest(manifest_path, dicom_root, out_dir, write_png, write_adjacent, descending):
    """Resolve each annotation's slice reference to an HU grid on disk."""
    manifest = load_manifest(manifest_path)
    hu_dir = out_dir / "hu"
    hu_dir.mkdir(parents=True, exist_ok=True)
    index_rows = []
    for annotation in manifest.annotations:
        series_dir = Path(dicom_root) / annotation.annotation_id
        volume = load_series(series_dir, descending=descending)
        raw = resolve_slice(volume, annotation.slice)
        save_tensor(raw.hu_grid, hu_dir / f"{annotation.annotation_id}.f32",
                    annotation.annotation_id, window=None)
        neighbors = adjacent_indices(volume, annotation.slice.image_number)
        if write_adjacent:
            for idx in neighbors:
                if idx == annotation.slice.image_number:
                    continue
                suffix = "m1" if idx < annotation.slice.image_number else "p1"
                neighbor = resolve_slice(
                    volume, dataclasses.replace(annotation.slice, image_number=idx)
                )
                save_tensor(
                    neighbor.hu_grid,
                    hu_dir / f"{annotation.annotation_id}_{suffix}.f32",
                    annotation.annotation_id, window=None,
                )
        if write_png:
            export_png(raw, out_dir / "png", annotation.report_id)
        index_rows.append(
            {
                "annotation_id": annotation.annotation_id,
                "n_slices": len(volume),
                "slice_location": raw.slice_location,
                "instance_number": raw.instance_number,
                "adjacent": neighbors,
                "rows": volume.rows,
                "cols": volume.cols,
            }
        )
    _write_jsonl(out_dir / "index.jsonl", index_rows)
    _echo_run_config(out_dir, "ingest", {"descending": descending, "adjacent": write_adjacent})
    click.echo(f"resolved {len(index_rows)} slices into {out_dir}")


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--hu", "hu_dir", required=True, type=click.Path(path_type=Path),
              help="Ingest output directory containing hu/*.f32 tensors.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--window-level", default=50.0, show_default=True)
@click.option("--window-width", default=400.0, show_default=True)
@click.option("--pad-literal-zero", is_flag=True, default=False,
              help="Pad with HU 0 instead of the window lower bound.")
@click.option("--window-sweep", default=None,
              help='Comma-separated level:width pairs (e.g. "40:400,50:400,60:350"); '
                   "each lands in its own subdirectory.")
@click.option("--png", "write_png", is_flag=True, default=False)
@click.option("--jobs", default=1, show_default=True)
@click.pass_context
@pipeline_command
def preprocess(ctx, manifest_path, hu_dir, out_dir, config_path, window_level,
               window_width, pad_literal_zero, window_sweep, write_png, jobs):
    """Window, standardize to 512x512, and normalize each resolved slice."""
    config = _load_config_file(config_path)
    if window_sweep:
        try:
            windows = [
                WindowSpec(level=float(level), width=float(width))
                for level, width in (pair.split(":") for pair in window_sweep.split(","))
            ]
        except ValueError:
            raise ConfigError(f"cannot parse --window-sweep {window_sweep!r}") from None
    else:
        windows = [
            WindowSpec(
                level=float(_resolve(ctx, "window_level", config, "window", "level")),
                width=float(_resolve(ctx, "window_width", config, "window", "width")),
            )
        ]
    manifest = load_manifest(manifest_path)
    hu_root = Path(hu_dir) / "hu" if (Path(hu_dir) / "hu").is_dir() else Path(hu_dir)

    class _Raw:
        def __init__(self, grid, ref):
            self.hu_grid = grid
            self.ref = ref

    for window in windows:
        target = out_dir if len(windows) == 1 else (
            out_dir / f"L{window.level:g}_W{window.width:g}"
        )
        tensor_dir = target / "tensors"
        tensor_dir.mkdir(parents=True, exist_ok=True)

        def run_one(annotation):
            path = hu_root / f"{annotation.annotation_id}.f32"
            if not path.exists():
                raise DataError(f"missing HU tensor for {annotation.annotation_id}: {path}")
            grid, _ = load_tensor(path)
            image = preprocess_slice(
                _Raw(grid, annotation.slice), window,
                pad_in_hu=0.0 if pad_literal_zero else None,
            )
            save_tensor(image.grid, tensor_dir / f"{annotation.annotation_id}.f32",
                        annotation.annotation_id, window)
            if write_png:
                from PIL import Image
                import numpy as np

                png_dir = target / "png"
                png_dir.mkdir(parents=True, exist_ok=True)
                scaled = ((image.grid + 1.0) / 2.0 * 255.0).round().astype(np.uint8)
                Image.fromarray(scaled, mode="L").save(
                    png_dir / f"{annotation.annotation_id}.png"
                )

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                list(pool.map(run_one, manifest.annotations))
        else:
            for annotation in manifest.annotations:
                run_one(annotation)
        _echo_run_config(
            target, "preprocess",
            {
                "window": {"level": window.level, "width": window.width},
                "pad_literal_zero": pad_literal_zero,
            },
        )
    click.echo(
        f"preprocessed {len(manifest)} slices x {len(windows)} window(s) into {out_dir}"
    )


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--k", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--stratify", default=None,
              help="Comma-separated feature list (default: all seven categorical/boolean).")
@click.option("--patient-level", is_flag=True, default=False)
@click.pass_context
@pipeline_command
def split(ctx, manifest_path, out_path, config_path, k, seed, stratify, patient_level):
    """Stratified k-fold assignment with minority-presence repair."""
    config = _load_config_file(config_path)
    kwargs = {
        "k": int(_resolve(ctx, "k", config, "split", "k")),
        "seed": int(_resolve(ctx, "seed", config, "split", "seed")),
        "patient_level": bool(_resolve(ctx, "patient_level", config, "split", "patient_level")),
    }
    if stratify:
        kwargs["stratify_on"] = tuple(s.strip() for s in stratify.split(",") if s.strip())
    elif isinstance(config.get("split", {}).get("stratify_on"), list):
        kwargs["stratify_on"] = tuple(config["split"]["stratify_on"])
    cfg = SplitConfig(**kwargs)
    manifest = load_manifest(manifest_path)
    assignment = split_manifest(manifest, cfg)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_fold_assignment(assignment, out_path)
    _echo_beside(out_path, "split", {
        "k": cfg.k, "seed": cfg.seed, "stratify_on": list(cfg.stratify_on),
        "patient_level": cfg.patient_level,
    })
    for warning in assignment.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(
        f"assigned {len(assignment.fold_of)} annotations to {cfg.k} folds "
        f"({assignment.swap_count} repair swaps) -> {out_path}"
    )


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _backend_from(ctx, config) -> BackendConfig:
    return BackendConfig(
        endpoint=str(_resolve(ctx, "endpoint", config, "backend", "endpoint")),
        model=str(_resolve(ctx, "model", config, "backend", "model")),
        temperature=float(_resolve(ctx, "temperature", config, "backend", "temperature")),
        max_tokens=int(_resolve(ctx, "max_tokens", config, "backend", "max_tokens")),
        timeout_s=float(_resolve(ctx, "timeout", config, "backend", "timeout_s")),
        max_retries=int(_resolve(ctx, "max_retries", config, "backend", "max_retries")),
        max_concurrent_requests=int(
            _resolve(ctx, "max_concurrent", config, "backend", "max_concurrent_requests")
        ),
        api_key_env=str(_resolve(ctx, "api_key_env", config, "backend", "api_key_env")),
    )


_BACKEND_OPTIONS = [
    click.option("--endpoint", default="stub:", show_default=True),
    click.option("--model", default="stub", show_default=True),
    click.option("--temperature", default=0.0, show_default=True),
    click.option("--max-tokens", default=512, show_default=True),
    click.option("--timeout", default=30.0, show_default=True),
    click.option("--max-retries", default=2, show_default=True),
    click.option("--max-concurrent", default=4, show_default=True),
    click.option("--api-key-env", default="RENALCT_API_KEY", show_default=True),
]


def backend_options(fn):
    for option in reversed(_BACKEND_OPTIONS):
        fn = option(fn)
    return fn


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--modality", type=click.Choice([m.value for m in Modality]),
              default="feature_only", show_default=True)
@click.option("--mode", type=click.Choice(["ft", "zs"]), default="zs", show_default=True,
              help="Provenance label recorded on generated reports.")
@click.option("--images", "images_dir", default=None, type=click.Path(path_type=Path),
              help="Preprocess output directory (required for image modalities).")
@backend_options
@click.pass_context
@pipeline_command
def generate(ctx, manifest_path, out_path, config_path, modality, mode, images_dir, **_):
    """Render generation prompts and obtain reports from the backend."""
    config = _load_config_file(config_path)
    backend_cfg = _backend_from(ctx, config)
    modality = Modality(_resolve(ctx, "modality", config, "modality"))
    mode = str(_resolve(ctx, "mode", config, "mode"))
    manifest = load_manifest(manifest_path)

    needs_image = modality in (Modality.IMAGE_ONLY, Modality.BOTH)
    if needs_image and images_dir is None:
        raise ConfigError(f"modality {modality.value} requires --images")

    prompts, ids = [], []
    for annotation in manifest.annotations:
        image = None
        if needs_image:
            tensor_root = (
                Path(images_dir) / "tensors"
                if (Path(images_dir) / "tensors").is_dir()
                else Path(images_dir)
            )
            grid, sidecar = load_tensor(tensor_root / f"{annotation.annotation_id}.f32")
            window = sidecar.get("window") or {}
            image = SliceImage(
                grid=grid,
                window=WindowSpec(window.get("level", 50.0), window.get("width", 400.0)),
                spatial_op="none",
                source=annotation.slice,
            )
        features = None if modality == Modality.IMAGE_ONLY else annotation.features
        prompts.append(render_generation_prompt(features, image, modality))
        ids.append(annotation.annotation_id)

    reports = generate_batch(
        prompts, backend_cfg, annotation_ids=ids, modality=modality.value, mode=mode
    )
    _write_jsonl(out_path, [report_to_dict(r) for r in reports])
    _echo_beside(out_path, "generate", {
        "modality": modality.value, "mode": mode,
        "backend": {"endpoint": backend_cfg.endpoint, "model": backend_cfg.model,
                    "temperature": backend_cfg.temperature,
                    "max_tokens": backend_cfg.max_tokens},
    })
    click.echo(f"generated {len(reports)} reports -> {out_path}")


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


@main.command()
@click.option("--reports", "reports_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--method", type=click.Choice(["rule", "llm"]), default="rule",
              show_default=True)
@backend_options
@click.pass_context
@pipeline_command
def extract(ctx, reports_path, out_path, config_path, method, **_):
    """Re-extract structured features from generated report text."""
    config = _load_config_file(config_path)
    method = str(_resolve(ctx, "method", config, "extraction_method"))
    rows = _read_jsonl(reports_path)
    backend_cfg = _backend_from(ctx, config) if method == "llm" else None
    out_rows = []
    for i, row in enumerate(rows, start=1):
        if "text" not in row:
            raise DataError(f"{reports_path}: row {i} has no generated text")
        if method == "rule":
            result = parse_report_rule_based(row["text"])
        else:
            result = parse_report_llm(row["text"], backend_cfg)
        out_rows.append(extraction_to_dict(result, annotation_id=row.get("annotation_id")))
    _write_jsonl(out_path, out_rows)
    _echo_beside(out_path, "extract", {"method": method})
    click.echo(f"extracted features from {len(out_rows)} reports -> {out_path}")


# ---------------------------------------------------------------------------
# evaluate / report
# ---------------------------------------------------------------------------


def _tables_to_json(tables: list[MetricTable]) -> list[dict]:
    return [
        {
            "fold": t.fold,
            "rows": [dataclasses.asdict(r) for r in t.rows],
            "nlg": t.nlg,
        }
        for t in tables
    ]


def _tables_from_json(payload: list[dict]) -> list[MetricTable]:
    return [
        MetricTable(
            fold=t["fold"],
            rows=[FeatureRow(**r) for r in t["rows"]],
            nlg=t.get("nlg"),
        )
        for t in payload
    ]


def _write_tables(out_dir: Path, tables: list[MetricTable]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics_features.csv").write_text(feature_csv(tables), encoding="utf-8")
    nlg = nlg_csv(tables)
    if nlg.count("\n") > 1:
        (out_dir / "metrics_nlg.csv").write_text(nlg, encoding="utf-8")
    for table in tables:
        (out_dir / f"fold_{table.fold}.txt").write_text(text_table(table), encoding="utf-8")
    (out_dir / "tables.json").write_text(
        json.dumps(_tables_to_json(tables), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(path_type=Path))
@click.option("--folds", "folds_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--extractions", "extractions_path", default=None, type=click.Path(path_type=Path))
@click.option("--predictions", "predictions_path", default=None, type=click.Path(path_type=Path))
@click.option("--reports", "reports_path", default=None, type=click.Path(path_type=Path),
              help="Generated-report JSONL for the NLG block.")
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--bleu-smooth", is_flag=True, default=False,
              help="Add-one BLEU smoothing for short corpora.")
@click.option("--strict", is_flag=True, default=False,
              help="Exit 5 when any requested metric is not computable.")
@click.pass_context
@pipeline_command
def evaluate(ctx, manifest_path, folds_path, out_dir, extractions_path, predictions_path,
             reports_path, config_path, bleu_smooth, strict):
    """Score extractions or an external prediction file, per fold."""
    config = _load_config_file(config_path)
    bleu_smooth = bool(_resolve(ctx, "bleu_smooth", config, "metrics", "bleu_smooth"))
    if (extractions_path is None) == (predictions_path is None):
        raise ConfigError("provide exactly one of --extractions or --predictions")
    if reports_path is not None and predictions_path is not None:
        raise ConfigError("--reports applies to --extractions evaluation only")
    manifest = load_manifest(manifest_path)
    assignment = load_fold_assignment(folds_path)

    generated_texts = None
    if reports_path is not None:
        generated_texts = {}
        for i, row in enumerate(_read_jsonl(Path(reports_path)), start=1):
            if "annotation_id" not in row or "text" not in row:
                raise DataError(f"{reports_path}: row {i} needs annotation_id and text")
            generated_texts[row["annotation_id"]] = row["text"]

    if extractions_path is not None:
        extracted = {}
        for row in _read_jsonl(Path(extractions_path)):
            if "annotation_id" not in row:
                raise DataError("extraction rows must carry annotation_id")
            extracted[row["annotation_id"]] = extraction_from_dict(row).features
        tables = evaluate_extractions(
            manifest, assignment, extracted, generated_texts, bleu_smooth=bleu_smooth
        )
    else:
        from .predictions import join_predictions, load_prediction_file

        predictions = load_prediction_file(predictions_path)
        columns, size, warnings, score_only = join_predictions(predictions, manifest)
        for warning in warnings:
            click.echo(f"warning: {warning}", err=True)
        tables = evaluate_prediction_columns(manifest, assignment, columns, size, score_only)

    _write_tables(Path(out_dir), tables)
    _echo_run_config(
        Path(out_dir), "evaluate",
        {
            "folds": str(folds_path),
            "source": "extractions" if extractions_path else "predictions",
            "bleu_smooth": bleu_smooth,
            "strict": strict,
        },
    )
    if strict:
        check_strict(tables)
    click.echo(f"evaluated {len(tables)} folds -> {out_dir}")


@main.command("report")
@click.option("--evaluation", "eval_dir", required=True, type=click.Path(path_type=Path))
@click.option("--out", "out_dir", default=None, type=click.Path(path_type=Path))
@pipeline_command
def report_cmd(eval_dir, out_dir):
    """Aggregate fold tables into their mean (the cross-validation average)."""
    eval_dir = Path(eval_dir)
    out_dir = Path(out_dir) if out_dir else eval_dir
    tables_path = eval_dir / "tables.json"
    if not tables_path.exists():
        raise DataError(f"no tables.json under {eval_dir}; run evaluate first")
    tables = _tables_from_json(json.loads(tables_path.read_text(encoding="utf-8")))
    mean = mean_over_folds(tables)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "mean_features.csv").write_text(feature_csv([mean]), encoding="utf-8")
    if mean.nlg is not None:
        (out_dir / "mean_nlg.csv").write_text(nlg_csv([mean]), encoding="utf-8")
    (out_dir / "summary.txt").write_text(text_table(mean), encoding="utf-8")
    click.echo(f"aggregated {len(tables)} folds -> {out_dir}")


if __name__ == "__main__":
    main()
