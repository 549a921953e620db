"""``freespan`` command line: simulate, train, score, evaluate.

Log level comes from the FREESPAN_LOG environment variable (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dasio import (
    DasFormatError,
    atomic_write_text,
    list_trials,
    read_metadata,
    read_report,
    read_trial,
    write_report,
    write_trial,
)
from .ocsvm import ConvergenceError
from .pipeline import (
    ExperimentConfig,
    SectionModel,
    TrainedModels,
    baseline_trials,
    score_all,
    split_trials,
    train_feature_extractor,
    train_section,
    trial_spectrogram,
)
from .pls import PlsModel
from .simulator import GridSpec, simulate_grid
from .stats import evaluate_report

log = logging.getLogger("freespan")

DEFAULT_SEED = 42


class CliError(Exception):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def load_config(path) -> tuple[ExperimentConfig, GridSpec]:
    if path is None:
        return ExperimentConfig(), GridSpec()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object")
    grid_raw = raw.get("grid", {})
    exp_raw = {k: v for k, v in raw.items() if k != "grid"}
    unknown = set(exp_raw) - set(ExperimentConfig.__dataclass_fields__)
    if unknown:
        raise CliError(f"invalid config: unknown fields {sorted(unknown)}")
    try:
        return ExperimentConfig.from_dict(exp_raw), GridSpec.from_dict(grid_raw)
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(f"invalid config: {exc}") from exc


def manifest(command: str, args, inputs: list, output) -> dict:
    return {
        "command": command,
        "config": None if args.config is None else str(args.config),
        "inputs": [str(p) for p in inputs],
        "output": str(output),
        "seed": args.seed,
        "tool_version": __version__,
    }


def _load_trials(data_dir: Path):
    """(stem, metadata) pairs for every trial in ``data_dir``."""
    stems = list_trials(data_dir)
    if not stems:
        raise CliError(f"no trials found in {data_dir}")
    return [(stem, read_metadata(stem)) for stem in stems]


def _spectrograms(items, cfg):
    out = []
    for stem, meta in items:
        record, meta = read_trial(stem)
        out.append((trial_spectrogram(record, cfg), meta))
    return out


def cmd_simulate(args) -> None:
    _, grid = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for record, meta in simulate_grid(grid, args.seed):
        write_trial(record, meta, out / meta.trial_id)
        n += 1
    atomic_write_text(out / "manifest.json", dumps(manifest("simulate", args, [], out)))
    log.info("wrote %d trials to %s", n, out)


def cmd_train(args) -> None:
    cfg, _ = load_config(args.config)
    data_dir = Path(args.data_dir)
    model_dir = Path(args.model_dir)
    items = _load_trials(data_dir)
    train_items, _ = split_trials(items, cfg.train_trial_index)
    train = _spectrograms(train_items, cfg)
    pls = train_feature_extractor(train, cfg)
    sections = {}
    for sec in cfg.sections:
        sections[sec.section_id] = train_section(baseline_trials(train, sec), pls, cfg)

    model_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(model_dir / "pls.json", pls.dumps())
    for sid, model in sections.items():
        atomic_write_text(model_dir / f"{sid}.svm.json", model.dumps())
    atomic_write_text(model_dir / "config.json", dumps(cfg.to_dict()))
    atomic_write_text(model_dir / "manifest.json", dumps(manifest("train", args, [data_dir], model_dir)))


def load_models(model_dir: Path) -> tuple[TrainedModels, ExperimentConfig]:
    try:
        cfg = ExperimentConfig.from_dict(json.loads((model_dir / "config.json").read_text()))
        pls = PlsModel.from_dict(json.loads((model_dir / "pls.json").read_text()))
        sections = {}
        for sec in cfg.sections:
            path = model_dir / f"{sec.section_id}.svm.json"
            sections[sec.section_id] = SectionModel.from_dict(json.loads(path.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CliError(f"missing or unreadable models in {model_dir}: {exc}") from exc
    for sid, m in sections.items():
        if m.pls_ref != pls.fingerprint():
            raise CliError(f"section model {sid} was trained against a different PLS model")
    return TrainedModels(pls, sections), cfg


def cmd_score(args) -> None:
    model_dir = Path(args.model_dir)
    models, cfg = load_models(model_dir)
    items = _load_trials(Path(args.data_dir))
    _, eval_items = split_trials(items, cfg.train_trial_index)
    eval_items = [it for it in eval_items if it[1].section_id in models.sections]
    report = score_all(models, _spectrograms(eval_items, cfg), cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    atomic_write_text(
        out.with_name(out.name + ".manifest.json"),
        dumps(manifest("score", args, [model_dir, args.data_dir], out)),
    )


def cmd_evaluate(args) -> None:
    report_path = Path(args.report)
    try:
        report = read_report(report_path)
    except OSError as exc:
        raise CliError(f"cannot read report {report_path}: {exc}") from exc
    if len(report) == 0:
        raise CliError("empty report")
    result = evaluate_report(report)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out, dumps(result))
    atomic_write_text(
        out.with_name(out.name + ".manifest.json"),
        dumps(manifest("evaluate", args, [report_path], out)),
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freespan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON (defaults if omitted)")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)

    sp = sub.add_parser("simulate", help="generate the synthetic trial grid")
    common(sp)
    sp.add_argument("--out", "--data-dir", dest="out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="fit the PLS extractor and per-section SVMs")
    common(sp)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--model-dir", "--out", dest="model_dir", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="score evaluation trials into a report CSV")
    common(sp)
    sp.add_argument("--model-dir", required=True)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--out", required=True, help="report CSV path")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("evaluate", help="compute evaluation metrics from a report")
    common(sp)
    sp.add_argument("--report", required=True, help="report CSV written by score")
    sp.add_argument("--out", required=True, help="evaluation JSON path")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FREESPAN_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, DasFormatError, ConvergenceError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"freespan {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
