"""Command-line driver for the file-based pipeline.

Every command resolves its parameters from built-in defaults, then an
optional ``--config`` JSON file (a flat parameter object or a previous
``run.json``), then explicit flags. The resolved parameters are echoed into
``run.json`` in the output directory together with sha256 digests of every
file written, so any run can be repeated with ``--config <dir>/run.json``.

Exit codes: 0 success, 2 usage, 3 schema/format violation, 4 numerical
failure during training, 5 missing input file.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .corpus import Sample, read_jsonl, write_jsonl
from .ffl import FFLParseError, Lexicon, UnknownTermError, normalize_ffl, parse_ffl
from .fc import FCConfig
from .fc.config import GIOU_CONVENTIONS, MODES, TEXT_INPUTS
from .perturb import PerturbConfig, build_pools, generate_corpus
from .schema import KINDS, validate_file
from .splits import make_split, select
from .toyworld import CapacityError, RegionLayout, ToyConfig, ToyImage, generate_gold

OUTPUT_ROOT_ENV = "GROUNDCHECK_OUTPUT_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_MISSING = 0, 2, 3, 4, 5


class UsageError(Exception):
    code = EXIT_USAGE


class SchemaError(Exception):
    code = EXIT_SCHEMA


class NumericalError(Exception):
    code = EXIT_NUMERICAL


class MissingInputError(Exception):
    code = EXIT_MISSING


# -- parameters ---------------------------------------------------------------

REQUIRED = object()


@dataclass(frozen=True)
class Param:
    default: Any
    type: type
    help: str = ""
    choices: tuple | None = None
    many: bool = False  # list-valued


def _from_dataclass(cls, skip=()) -> dict[str, Param]:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if isinstance(default, tuple):
            out[f.name] = Param(list(default), int, f"{cls.__name__}.{f.name} (default: {list(default)})", many=True)
        else:
            out[f.name] = Param(default, type(default), f"{cls.__name__}.{f.name} (default: {default})")
    return out


_SPLIT = {
    "fold": Param(0, int, "fold index used to regenerate the 70-10-20 split"),
    "folds": Param(3, int, "number of split folds"),
    "split_seed": Param(0, int, "seed of the split shuffle"),
}

_MODEL = _from_dataclass(FCConfig)
_MODEL["mode"] = dataclasses.replace(_MODEL["mode"], choices=MODES)
_MODEL["giou"] = dataclasses.replace(_MODEL["giou"], choices=GIOU_CONVENTIONS)
_MODEL["text_input"] = dataclasses.replace(_MODEL["text_input"], choices=TEXT_INPUTS)
_MODEL["activation"] = dataclasses.replace(_MODEL["activation"], choices=("relu", "identity"))

_CONVENTION = Param("default", str, "FC score convention", choices=("default", "paper-literal"))

PARAMS: dict[str, dict[str, Param]] = {
    "gen-gold": {
        "n": Param(REQUIRED, int, "number of gold images"),
        "seed": Param(0, int, "random seed"),
        "lexicon": Param(None, str, "lexicon JSON (default: packaged lexicon)"),
        **_from_dataclass(ToyConfig),
    },
    "gen-synth": {
        "gold": Param(REQUIRED, str, "gold corpus JSONL"),
        "seed": Param(0, int, "random seed"),
        "lexicon": Param(None, str, "lexicon JSON (default: packaged lexicon)"),
        "table2": Param(False, bool, "preset with two relocations per finding"),
        "reversal": Param(1, int, "reversal fakes per real finding"),
        "relocate": Param(None, int, "relocation fakes per real finding (default 1, or 2 with --table2)"),
        "substitution": Param(1, int, "substitution fakes per real finding"),
        "overlap_threshold": Param(0.2, float, "max IoU between a relocated box and the original"),
        "reverse_negatives": Param(False, bool, "also reverse negative mentions"),
    },
    "train": {
        "corpus": Param(REQUIRED, str, "training corpus JSONL"),
        "images": Param(None, str, "image directory (default: <corpus dir>/images)"),
        "seed": Param(0, int, "random seed"),
        "lexicon": Param(None, str, "lexicon JSON (default: packaged lexicon)"),
        **_SPLIT,
        **_MODEL,
    },
    "predict": {
        "checkpoint": Param(REQUIRED, str, "checkpoint JSON"),
        "image": Param(REQUIRED, str, "PNG image"),
        "ffl": Param(REQUIRED, str, "findings to verify, 'type | polarity | finding | anatomy'", many=True),
    },
    "assess": {
        "checkpoint": Param(REQUIRED, str, "checkpoint JSON"),
        "reports": Param(REQUIRED, str, "reports JSONL: {image_id, findings: [ffl, ...]}"),
        "images": Param(None, str, "image directory (default: <reports dir>/images)"),
        "gold": Param(None, str, "optional gold corpus for ground-truth boxes and RQ(A,G)"),
        "convention": _CONVENTION,
        "anatomy_strict": Param(False, bool, "ground-truth match also requires equal anatomy"),
        "margin_px": Param(2, int, "slot inset used to recover indicated boxes"),
        "overlays": Param(True, bool, "write overlay PNGs"),
        "overlay_scale": Param(4, int, "overlay upscaling factor"),
    },
    "evaluate": {
        "checkpoint": Param(REQUIRED, str, "checkpoint JSON"),
        "corpus": Param(REQUIRED, str, "corpus JSONL"),
        "images": Param(None, str, "image directory (default: <corpus dir>/images)"),
        "part": Param("test", str, "split part to evaluate", choices=("train", "val", "test", "all")),
        **_SPLIT,
    },
    "concordance": {
        "checkpoint": Param(REQUIRED, str, "checkpoint JSON"),
        "gold": Param(REQUIRED, str, "gold corpus JSONL"),
        "images": Param(None, str, "image directory (default: <gold dir>/images)"),
        "seed": Param(0, int, "seed of the simulated generators"),
        "part": Param("test", str, "split part to assess", choices=("train", "val", "test", "all")),
        **_SPLIT,
        "generators": Param(7, int, "number of simulated report generators"),
        "max_error_rate": Param(0.8, float, "error rate of the noisiest generator"),
        "convention": _CONVENTION,
        "anatomy_strict": Param(False, bool, "ground-truth match also requires equal anatomy"),
        "margin_px": Param(2, int, "slot inset used to recover indicated boxes"),
    },
    "ablate": {
        "corpus": Param(REQUIRED, str, "corpus JSONL"),
        "images": Param(None, str, "image directory (default: <corpus dir>/images)"),
        "seed": Param(0, int, "random seed"),
        "lexicon": Param(None, str, "lexicon JSON (default: packaged lexicon)"),
        "modes": Param(list(MODES), str, "ablation modes", choices=MODES, many=True),
        **_SPLIT,
        **{k: v for k, v in _MODEL.items() if k != "mode"},
    },
    "validate-schema": {
        "kind": Param(REQUIRED, str, "file kind", choices=KINDS),
        "path": Param(REQUIRED, str, "file to validate"),
    },
}

HELP = {
    "gen-gold": "render a toy gold corpus (JSONL + PNG images)",
    "gen-synth": "apply synthetic perturbations to a gold corpus",
    "train": "train a fact-checking model",
    "predict": "verify findings against one image",
    "assess": "score reports against their images (FC score / RQ)",
    "evaluate": "accuracy and mIoU of a checkpoint on a split",
    "concordance": "RQ(A,P) vs RQ(A,G) over simulated report generators",
    "ablate": "train and evaluate the ablation modes on one split",
    "validate-schema": "check a file against its schema",
}

# flags that set another parameter to a fixed value
ALIASES = {
    "paper_literal_giou": ("giou", "paper-literal", "use the printed GIoU-style term"),
    "paper_literal_rq": ("convention", "paper-literal", "use the printed FC score expression"),
}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundcheck", description="Fact-check findings in toy radiology reports.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, params in PARAMS.items():
        p = sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd])
        if cmd != "validate-schema":
            p.add_argument("--config", help="JSON parameter file or a previous run.json")
            p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/{cmd} or runs/{cmd})")
        p.add_argument("-v", "--verbose", action="store_true")
        for name, spec in params.items():
            kw: dict[str, Any] = {"dest": name, "default": argparse.SUPPRESS, "help": spec.help}
            if spec.type is bool:
                kw["action"] = argparse.BooleanOptionalAction
            else:
                kw["type"] = spec.type
                kw["metavar"] = name.upper()
                if spec.choices and not spec.many:
                    kw["choices"] = spec.choices
                if spec.many:
                    kw["nargs"] = "+"
            p.add_argument(_flag(name), **kw)
        for alias, (target, value, text) in ALIASES.items():
            if target in params:
                p.add_argument(_flag(alias), dest=target, action="store_const", const=value, default=argparse.SUPPRESS, help=text)
    return parser


def _coerce(name: str, spec: Param, value: Any) -> Any:
    if value is None:
        return None
    if spec.many:
        if not isinstance(value, list):
            raise UsageError(f"{name}: expected a list, got {value!r}")
        return [_coerce(name, dataclasses.replace(spec, many=False), v) for v in value]
    if spec.type is bool:
        if not isinstance(value, bool):
            raise UsageError(f"{name}: expected true/false, got {value!r}")
        return value
    if spec.type is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, spec.type) or isinstance(value, bool) and spec.type is not bool:
        raise UsageError(f"{name}: expected {spec.type.__name__}, got {value!r}")
    if spec.choices and value not in spec.choices:
        raise UsageError(f"{name}: {value!r} not in {list(spec.choices)}")
    return value


def resolve_params(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the config file, then explicit flags."""
    specs = PARAMS[command]
    params = {k: s.default for k, s in specs.items()}
    config_path = getattr(ns, "config", None)
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise MissingInputError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path} is not JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        if "command" in data and "config" in data:  # a previous run.json
            if data["command"] != command:
                raise UsageError(f"run.json is for {data['command']!r}, not {command!r}")
            data = data["config"]
        unknown = sorted(set(data) - set(specs))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {unknown}")
        params.update(data)
    for name in specs:
        if hasattr(ns, name):
            params[name] = getattr(ns, name)
    missing = [k for k, v in params.items() if v is REQUIRED]
    if missing:
        raise UsageError("missing required parameters: " + ", ".join(_flag(k) for k in missing))
    return {k: _coerce(k, specs[k], v) for k, v in params.items()}


# -- file helpers ---------------------------------------------------------------


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.write_text(_dump(obj), encoding="utf-8")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def output_digests(out: Path) -> dict[str, str]:
    return {
        p.relative_to(out).as_posix(): sha256_file(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "run.json"
    }


def write_run(out: Path, command: str, params: dict) -> dict:
    run = {
        "command": command,
        "config": params,
        "seed": params.get("seed"),
        "version": __version__,
        "outputs": output_digests(out),
    }
    write_json(out / "run.json", run)
    return run


def _existing(path: str | None, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{what} not found: {path}")
    return p


def _validated(kind: str, path: str, what: str) -> Path:
    p = _existing(path, what)
    errors = validate_file(kind, p)
    if errors:
        shown = "\n  ".join(errors[:10])
        more = f"\n  ... {len(errors) - 10} more" if len(errors) > 10 else ""
        raise SchemaError(f"{what} {path} failed validation:\n  {shown}{more}")
    return p


def _lexicon(path: str | None) -> Lexicon:
    if path is None:
        return Lexicon.load()
    p = _validated("lexicon", path, "lexicon")
    return Lexicon.load(p)


def _checkpoint(path: str):
    from .fc import Checkpoint, CheckpointError

    try:
        return Checkpoint.load(_validated("checkpoint", path, "checkpoint"))
    except CheckpointError as exc:
        raise SchemaError(str(exc)) from exc


def _image_dir(images: str | None, corpus: Path) -> Path:
    d = Path(images) if images else corpus.parent / "images"
    if not d.is_dir():
        raise MissingInputError(f"image directory not found: {d}")
    return d


class ImageStore(dict):
    """Loads ``<root>/<image_id>.png`` on first access."""

    def __init__(self, root: Path):
        super().__init__()
        self.root = root

    def __missing__(self, image_id: str) -> ToyImage:
        path = self.root / f"{image_id}.png"
        if not path.exists():
            raise MissingInputError(f"image not found: {path}")
        img = ToyImage.load(path, image_id)
        self[image_id] = img
        return img


def _split_part(samples: list[Sample], params: dict, part: str) -> list[Sample]:
    if part == "all":
        return list(samples)
    try:
        split = make_split([s.image_id for s in samples], params["fold"], params["folds"], params["split_seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return select(samples, split.part(part))


def _model_config(params: dict, **overrides) -> FCConfig:
    keys = {f.name for f in dataclasses.fields(FCConfig)}
    d = {k: v for k, v in params.items() if k in keys}
    d.update(overrides)
    try:
        return FCConfig.from_dict(d)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- commands ---------------------------------------------------------------------


def cmd_gen_gold(params: dict, out: Path) -> None:
    if params["n"] < 1:
        raise UsageError("--n must be >= 1")
    lex = _lexicon(params["lexicon"])
    toy_keys = {f.name for f in dataclasses.fields(ToyConfig)}
    try:
        toy = ToyConfig(**{k: v for k, v in params.items() if k in toy_keys})
        images, samples = generate_gold(params["n"], lex, toy, params["seed"])
    except (CapacityError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    (out / "images").mkdir(parents=True, exist_ok=True)
    for img in images:
        img.save(out / "images" / f"{img.image_id}.png")
    write_jsonl(out / "gold.jsonl", samples)
    print(f"wrote {len(samples)} gold samples to {out}")


def cmd_gen_synth(params: dict, out: Path) -> None:
    gold_path = _validated("gold", params["gold"], "gold corpus")
    lex = _lexicon(params["lexicon"])
    gold = read_jsonl(gold_path)
    relocate = params["relocate"]
    if relocate is None:
        relocate = 2 if params["table2"] else 1
    if min(params["reversal"], relocate, params["substitution"]) < 0:
        raise UsageError("variant counts must be non-negative")
    config = PerturbConfig(
        reversal=params["reversal"],
        relocate=relocate,
        substitution=params["substitution"],
        overlap_threshold=params["overlap_threshold"],
        reverse_negatives=params["reverse_negatives"],
    )
    try:
        samples, report = generate_corpus(gold, lex, config, params["seed"], build_pools(gold))
    except UnknownTermError as exc:
        raise SchemaError(f"gold corpus uses a term outside the lexicon: {exc}") from exc
    write_jsonl(out / "synth.jsonl", samples)
    write_json(out / "report.json", {"config": params, "perturb_config": config.to_dict(), "report": report.to_dict()})
    print(f"wrote {report.samples} samples ({report.real} real, {report.fake} fake findings) to {out}")


def _train_one(params: dict, config: FCConfig, lex: Lexicon, train_set, val_set, images, log_path: Path | None):
    from .fc import train
    from .fc.train import TrainingDiverged

    try:
        ckpt = train(train_set, config, params["seed"], images, lex, val=val_set or None)
    except TrainingDiverged as exc:
        raise NumericalError(str(exc)) from exc
    except UnknownTermError as exc:
        raise SchemaError(f"corpus uses a term outside the lexicon: {exc}") from exc
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for row in ckpt.metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return ckpt


def _load_corpus(params: dict, key: str = "corpus"):
    path = _validated("corpus", params[key], "corpus")
    return path, read_jsonl(path), ImageStore(_image_dir(params.get("images"), path))


def cmd_train(params: dict, out: Path) -> None:
    config = _model_config(params)
    lex = _lexicon(params["lexicon"])
    _, samples, images = _load_corpus(params)
    train_set = _split_part(samples, params, "train")
    val_set = _split_part(samples, params, "val")
    ckpt = _train_one(params, config, lex, train_set, val_set, images, out / "history.jsonl")
    ckpt.save(out / "checkpoint.json")
    last = ckpt.metrics[-1] if ckpt.metrics else {}
    print(f"trained {config.mode} on {len(train_set)} samples; last epoch {json.dumps(last, sort_keys=True)}")


def _parse_report_ffl(text: str, lex: Lexicon):
    f = parse_ffl(text)
    try:
        return normalize_ffl(f, lex)
    except UnknownTermError:
        return f  # the model reports the unknown term per finding


def cmd_predict(params: dict, out: Path) -> None:
    from .fc import predict

    ckpt = _checkpoint(params["checkpoint"])
    lex = Lexicon.from_dict(ckpt.lexicon)
    try:
        ffls = [_parse_report_ffl(t, lex) for t in params["ffl"]]
    except FFLParseError as exc:
        raise SchemaError(str(exc)) from exc
    image_path = _existing(params["image"], "image")
    image = ToyImage.load(image_path)
    try:
        preds = predict(ckpt, image, ffls)
    except ValueError as exc:
        raise SchemaError(f"image {image_path}: {exc}") from exc
    result = {"config": params, "predictions": [p.to_json() for p in preds]}
    write_json(out / "predictions.json", result)
    print(_dump(result["predictions"]), end="")


def _layout(ckpt, lex: Lexicon, margin_px: int) -> RegionLayout:
    return RegionLayout(lex.regions, ckpt.config.image_size, ckpt.config.grid, margin_px)


def _indicate(f, layout: RegionLayout):
    from .geometry import BBox
    from .scoring import IndicatedFinding, indicate

    try:
        return indicate(f, layout)
    except (KeyError, ValueError):  # anatomy outside the layout
        return IndicatedFinding(f, BBox.zero())


def cmd_assess(params: dict, out: Path) -> None:
    from .scoring import assess_report, ground_truth_rows, match_gold, rq
    from .toyworld import render_overlay

    ckpt = _checkpoint(params["checkpoint"])
    lex = Lexicon.from_dict(ckpt.lexicon)
    reports_path = _validated("reports", params["reports"], "reports")
    images = ImageStore(_image_dir(params["images"], reports_path))
    gold = {}
    if params["gold"]:
        gold = {s.image_id: s for s in read_jsonl(_validated("gold", params["gold"], "gold corpus"))}
    layout = _layout(ckpt, lex, params["margin_px"])
    if params["overlays"]:
        (out / "overlays").mkdir(parents=True, exist_ok=True)
    lines = []
    with open(reports_path, encoding="utf-8") as fh:
        reports = [json.loads(line) for line in fh if line.strip()]
    for rep in reports:
        indicated = [_indicate(_parse_report_ffl(t, lex), layout) for t in rep["findings"]]
        image = images[rep["image_id"]]
        try:
            a = assess_report(ckpt, image, indicated, params["convention"])
        except ValueError as exc:
            raise SchemaError(f"report {rep['image_id']}: {exc}") from exc
        rec = a.to_json()
        g = gold.get(rep["image_id"])
        if g is not None:
            rec["rq_ground_truth"] = rq(ground_truth_rows(indicated, g, params["anatomy_strict"]), params["convention"])
        lines.append(json.dumps(rec, sort_keys=True))
        if params["overlays"]:
            boxes = []
            for row in a.rows:
                short = row.ffl.core_finding
                boxes.append((row.indicated_box, "indicated", ""))
                if g is not None:
                    m = match_gold(row.ffl, g, params["anatomy_strict"])
                    if m is not None:
                        boxes.append((m.box, "ground_truth", ""))
                if row.real:
                    boxes.append((row.predicted_box, "predicted", short))
            render_overlay(image, boxes, out / "overlays" / f"{rep['image_id']}.png", params["overlay_scale"])
    (out / "assessments.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    mean = sum(json.loads(line)["rq"] for line in lines) / len(lines) if lines else float("nan")
    print(f"assessed {len(lines)} reports; mean RQ {mean:.4f}")


def cmd_evaluate(params: dict, out: Path) -> None:
    from .scoring import evaluate_model

    ckpt = _checkpoint(params["checkpoint"])
    _, samples, images = _load_corpus(params)
    test = _split_part(samples, params, params["part"])
    if not test:
        raise UsageError(f"split part {params['part']!r} is empty")
    try:
        metrics = evaluate_model(ckpt, test, images)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    write_json(out / "evaluation.json", {"config": params, "metrics": metrics, "n_samples": len(test)})
    print(f"accuracy {metrics['accuracy']:.4f}  mIoU {metrics['miou']:.4f}  ({metrics['n_findings']} findings)")


def cmd_concordance(params: dict, out: Path) -> None:
    from .scoring import concordance_study, default_profiles

    if params["generators"] < 2:
        raise UsageError("--generators must be >= 2")
    if not 0 <= params["max_error_rate"] <= 1:
        raise UsageError("--max-error-rate must lie in [0, 1]")
    ckpt = _checkpoint(params["checkpoint"])
    lex = Lexicon.from_dict(ckpt.lexicon)
    gold_path = _validated("gold", params["gold"], "gold corpus")
    gold = read_jsonl(gold_path)
    images = ImageStore(_image_dir(params["images"], gold_path))
    test = _split_part(gold, params, params["part"])
    pool_src = _split_part(gold, params, "train") if params["part"] == "test" else gold
    profiles = default_profiles(params["generators"], params["max_error_rate"])
    result = concordance_study(
        ckpt,
        test,
        images,
        lex,
        _layout(ckpt, lex, params["margin_px"]),
        profiles,
        params["seed"],
        build_pools(pool_src),
        params["convention"],
        params["anatomy_strict"],
    )
    result["config"] = params
    write_json(out / "concordance.json", result)
    for row in result["rows"]:
        print(f"{row['generator']}  error rate {row['error_rate']:.3f}  RQ(A,P) {row['rq_ap']:.4f}  RQ(A,G) {row['rq_ag']:.4f}")
    print(f"CCC {result['ccc']:.4f}")


def cmd_ablate(params: dict, out: Path) -> None:
    from .scoring import evaluate_model

    lex = _lexicon(params["lexicon"])
    _, samples, images = _load_corpus(params)
    train_set = _split_part(samples, params, "train")
    val_set = _split_part(samples, params, "val")
    test_set = _split_part(samples, params, "test")
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    rows = []
    for mode in params["modes"]:
        config = _model_config(params, mode=mode)
        ckpt = _train_one(params, config, lex, train_set, val_set, images, None)
        ckpt.save(out / "checkpoints" / f"{mode}.json")
        m = evaluate_model(ckpt, test_set, images)
        rows.append({"method": mode, "accuracy": m["accuracy"], "miou": m["miou"]})
        print(f"{mode:10s}  accuracy {m['accuracy']:.4f}  mIoU {m['miou']:.4f}")
    ranking = [r["method"] for r in sorted(rows, key=lambda r: (-r["miou"], r["method"]))]
    write_json(out / "ablation.json", {"config": params, "rows": rows, "ranking_by_miou": ranking})


def cmd_validate_schema(params: dict, out: Path | None) -> None:
    path = _existing(params["path"], params["kind"])
    errors = validate_file(params["kind"], path)
    if errors:
        raise SchemaError("\n".join(errors))
    print(f"{path}: valid {params['kind']}")


COMMANDS: dict[str, Callable[[dict, Path], None]] = {
    "gen-gold": cmd_gen_gold,
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "assess": cmd_assess,
    "evaluate": cmd_evaluate,
    "concordance": cmd_concordance,
    "ablate": cmd_ablate,
    "validate-schema": cmd_validate_schema,
}


def output_dir(command: str, out: str | None) -> Path:
    if out:
        return Path(out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / command


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    command = ns.command
    params = resolve_params(command, ns)
    if command == "validate-schema":
        cmd_validate_schema(params, None)
        return EXIT_OK
    import torch

    torch.use_deterministic_algorithms(True)
    out = output_dir(command, ns.out)
    out.mkdir(parents=True, exist_ok=True)
    COMMANDS[command](params, out)
    write_run(out, command, params)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except (UsageError, SchemaError, NumericalError, MissingInputError) as exc:
        print(f"groundcheck: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
