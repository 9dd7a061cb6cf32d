"""Command-line pipeline: generate -> train -> eval / fuse -> report.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import copy
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import fusion as fz
from .dataio import (
    Geometry,
    apply_normalization,
    export_dataset,
    fit_normalization,
    generate_trimodal,
    load_checkpoint,
    load_dataset_dir,
    save_checkpoint,
    split_dataset,
)
from .errors import TrimodalError
from .metrics import auc_score, build_report
from .modalities import MODALITIES, TrainConfig, build_model, predict_batch, train_modality

log = logging.getLogger("trimodal")

SEED_OFFSET = {"image": 1, "cognitive": 2, "biomarker": 3}
ROW_NAMES = {"image": "MRI (CNN)", "cognitive": "Cognitive (LSTM)", "biomarker": "Biomarkers (LSTM)"}
FUSION_NAMES = {
    "weighted": "Aggregated (weighted average)",
    "majority": "Aggregated (majority vote)",
    "bayes": "Aggregated (log-odds pooling)",
    "stacked": "Aggregated (stacking)",
}
SUBCOMMANDS = ("generate", "train", "eval", "fuse", "report", "pipeline")

DEFAULT_CONFIG = {
    "seed": 42,
    "dataset": {
        "n_subjects": 1000,
        "geometry": [32, 32, 6, 3, 4, 3],
        "prevalence": 0.5,
        "corruption_rate": 0.15,
    },
    "train": {
        "default": {"epochs": 30, "batch_size": 32, "lr": 1e-3, "patience": 5},
        "image": {},
        "cognitive": {},
        "biomarker": {},
    },
    "fusion": {
        "strategy": ["weighted", "majority", "bayes", "stacked"],
        "weights": None,
        "prior": 0.5,
    },
    "paths": {"workdir": "run", "checkpoint_dir": None, "report": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class RunConfig:
    """Resolved configuration: flag > config file > built-in default."""

    def __init__(self, doc):
        unknown = set(doc) - set(DEFAULT_CONFIG)
        if unknown:
            raise UsageError(f"unknown config section(s): {sorted(unknown)}")
        self.doc = _merge(DEFAULT_CONFIG, doc)
        d = self.doc
        try:
            self.seed = int(d["seed"])
            ds = d["dataset"]
            self.n_subjects = int(ds["n_subjects"])
            self.geometry = Geometry(*[int(v) for v in ds["geometry"]]).validate()
            self.prevalence = float(ds["prevalence"])
            self.corruption_rate = float(ds["corruption_rate"])
            strategies = d["fusion"]["strategy"]
            self.strategies = [strategies] if isinstance(strategies, str) else list(strategies)
            self.manual_weights = d["fusion"]["weights"]
            self.prior = float(d["fusion"]["prior"])
            self._train_cfgs = {m: self._train_config(m) for m in MODALITIES}
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from None
        bad = [s for s in self.strategies if s not in fz.STRATEGIES]
        if bad:
            raise UsageError(f"unknown fusion strategy {bad[0]!r}; expected one of {', '.join(fz.STRATEGIES)}")
        if self.manual_weights is not None:
            if not isinstance(self.manual_weights, dict) or set(self.manual_weights) - set(MODALITIES):
                raise UsageError("fusion.weights must map modality names to numbers")

    def _train_config(self, modality):
        t = dict(self.doc["train"]["default"])
        t.update(self.doc["train"].get(modality) or {})
        t.setdefault("seed", self.seed + SEED_OFFSET[modality])
        return TrainConfig(**t)

    def train_config(self, modality):
        return self._train_cfgs[modality]

    @property
    def workdir(self):
        return Path(self.doc["paths"]["workdir"])

    @property
    def data_dir(self):
        return self.workdir / "data"

    @property
    def checkpoint_dir(self):
        p = self.doc["paths"]["checkpoint_dir"]
        return Path(p) if p else self.workdir / "checkpoints"

    @property
    def report_path(self):
        p = self.doc["paths"]["report"]
        return Path(p) if p else self.workdir / "report.json"

    @classmethod
    def from_args(cls, args):
        doc = {}
        if args.config:
            try:
                doc = json.loads(Path(args.config).read_text())
            except FileNotFoundError:
                raise UsageError(f"config file not found: {args.config}") from None
            except json.JSONDecodeError as exc:
                raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
            if not isinstance(doc, dict):
                raise UsageError("config must be a JSON object")
        doc = _merge({}, doc)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.workdir is not None:
            doc.setdefault("paths", {})["workdir"] = args.workdir
        if args.checkpoint_dir is not None:
            doc.setdefault("paths", {})["checkpoint_dir"] = args.checkpoint_dir
        if args.report is not None:
            doc.setdefault("paths", {})["report"] = args.report
        if args.n_subjects is not None:
            doc.setdefault("dataset", {})["n_subjects"] = args.n_subjects
        if args.epochs is not None:
            doc.setdefault("train", {}).setdefault("default", {})["epochs"] = args.epochs
        if getattr(args, "strategy", None):
            doc.setdefault("fusion", {})["strategy"] = args.strategy
        return cls(doc)


# ------------------------------------------------------------------ stages

def cmd_generate(cfg):
    ds = generate_trimodal(cfg.seed, cfg.n_subjects, cfg.geometry, cfg.prevalence, cfg.corruption_rate)
    export_dataset(ds, cfg.data_dir)
    log.info("generated %d subjects under %s", len(ds), cfg.data_dir)


def _load_splits(cfg):
    ds = load_dataset_dir(cfg.data_dir, cfg.seed)
    return ds, split_dataset(ds, seed=cfg.seed)


def _ckpt_path(cfg, modality):
    return cfg.checkpoint_dir / f"{modality}.tmf"


def cmd_train(cfg, modality):
    ds, (train, val, _) = _load_splits(cfg)
    stats = fit_normalization(train)
    if modality not in stats.mean:
        raise TrimodalError(f"no {modality} data in the training split")
    stats = stats.only(modality)
    train, val = apply_normalization(train, stats), apply_normalization(val, stats)
    tcfg = cfg.train_config(modality)
    spec = build_model(modality, ds.geometry, seed=tcfg.seed)
    _, Xt, yt = train.arrays(modality)
    _, Xv, yv = val.arrays(modality)
    t0 = time.time()
    spec, hist = train_modality(spec, Xt, yt, Xv, yv, tcfg, log=log.info)
    log.info("%s trained in %.1fs (best epoch %d)", modality, time.time() - t0, hist.best_epoch)
    cfg.checkpoint_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(spec, stats, _ckpt_path(cfg, modality), tuple(ds.geometry))
    with open(cfg.checkpoint_dir / f"{modality}_history.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for e, row in enumerate(zip(hist.train_loss, hist.val_loss, hist.val_acc), start=1):
            w.writerow([e] + [repr(float(v)) for v in row])
    return spec, hist


def _predict_split(spec, stats, split, modality):
    ids, X, y = apply_normalization(split, stats).arrays(modality)
    if not ids:
        return {}
    probs = predict_batch(spec, X)[:, 1]
    return dict(zip(ids, probs.tolist()))


def cmd_eval(cfg, modality, split_name, out=None):
    _, splits = _load_splits(cfg)
    split = dict(zip(("train", "val", "test"), splits))[split_name]
    spec, stats = load_checkpoint(_ckpt_path(cfg, modality))
    probs = _predict_split(spec, stats, split, modality)
    labels = [split[s].label for s in probs]
    report = build_report({ROW_NAMES[modality]: (list(probs.values()), labels)}, dataset=split_name, seed=cfg.seed)
    (out or sys.stdout).write(report.to_text())
    return report


def _fused_csv(cfg, strategy):
    return cfg.workdir / f"fusion_{strategy}.csv"


def cmd_fuse(cfg, drop=()):
    """Fuse every configured strategy over the test split with whatever checkpoints exist."""
    _, (_, val, test) = _load_splits(cfg)
    val_probs, test_probs, aucs = {}, {}, {}
    for m in MODALITIES:
        path = _ckpt_path(cfg, m)
        if m in drop or not path.exists():
            log.info("modality %s unavailable (%s)", m, "dropped" if m in drop else "no checkpoint")
            continue
        spec, stats = load_checkpoint(path)
        val_probs[m] = _predict_split(spec, stats, val, m)
        test_probs[m] = _predict_split(spec, stats, test, m)
        vids = list(val_probs[m])
        aucs[m] = auc_score(list(val_probs[m].values()), [val[s].label for s in vids])
    if not test_probs:
        raise TrimodalError("no modality checkpoints available for fusion")

    if cfg.manual_weights is not None:
        weights = fz.FusionWeights({m: cfg.manual_weights.get(m, 0.0) for m in MODALITIES})
    else:
        # an unavailable modality keeps a placeholder share (mean available AUC), so its absence lowers confidence
        placeholder = float(np.mean(list(aucs.values())))
        weights = fz.derive_weights({m: aucs.get(m, placeholder) for m in MODALITIES})

    def preds_for(probs, sid):
        return [fz.ModalityPrediction.positive(m, probs[m][sid]) if sid in probs.get(m, {})
                else fz.ModalityPrediction.missing(m) for m in MODALITIES]

    stacker = None
    if "stacked" in cfg.strategies:
        meta = np.array([[val_probs[m].get(s, np.nan) if m in val_probs else np.nan for m in MODALITIES]
                         for s in val.ids])
        stacker = fz.train_stacker(meta, val.labels)

    results = {}
    for strategy in cfg.strategies:
        rows = []
        for s in test.ids:
            preds = preds_for(test_probs, s)
            if not any(p.present for p in preds):
                continue
            res = fz.fuse(strategy, preds, weights, cfg.prior, stacker)
            rows.append((s, preds, res, test[s].label))
        results[strategy] = rows
        with open(_fused_csv(cfg, strategy), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["subject_id", *MODALITIES, "fused", "predicted", "label", "confidence"])
            for s, preds, res, lab in rows:
                cells = [repr(float(p.probabilities[1])) if p.present else "MISSING" for p in preds]
                w.writerow([s, *cells, repr(res.positive), res.label, lab, repr(float(res.confidence))])
        log.info("fused %d subjects with %s", len(rows), strategy)
    meta_doc = {
        "available": sorted(test_probs, key=MODALITIES.index),
        "validation_auc": {m: round(a, 12) for m, a in aucs.items()},
        "weights": {m: round(w, 12) for m, w in weights.weights.items()},
        "stacker": None if stacker is None else {
            "weights": [round(float(v), 12) for v in stacker.weights],
            "bias": round(stacker.bias, 12),
            "iterations": stacker.iterations,
        },
    }
    (cfg.workdir / "fusion_meta.json").write_text(json.dumps(meta_doc, indent=2) + "\n")
    return results, weights


def _read_fused(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def cmd_report(cfg, out=None):
    sets = {}
    fused = {s: _read_fused(_fused_csv(cfg, s)) for s in fz.STRATEGIES if _fused_csv(cfg, s).exists()}
    if not fused:
        raise TrimodalError(f"no fusion results under {cfg.workdir}; run 'fuse' first")
    rows = next(iter(fused.values()))
    for m in MODALITIES:
        present = [r for r in rows if r[m] != "MISSING"]
        if present:
            sets[ROW_NAMES[m]] = ([float(r[m]) for r in present], [int(r["label"]) for r in present])
    for s, rows in fused.items():
        sets[FUSION_NAMES[s]] = ([float(r["fused"]) for r in rows], [int(r["label"]) for r in rows])
    report = build_report(sets, dataset=f"synthetic-n{cfg.n_subjects}-test", seed=cfg.seed)
    cfg.report_path.parent.mkdir(parents=True, exist_ok=True)
    cfg.report_path.write_text(report.to_json())
    cfg.report_path.with_suffix(".txt").write_text(report.to_text())
    for row in report.rows:
        slug = "".join(c if c.isalnum() else "_" for c in row.model.lower()).strip("_")
        while "__" in slug:
            slug = slug.replace("__", "_")
        with open(cfg.workdir / f"roc_{slug}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["fpr", "tpr"])
            w.writerows([repr(float(a)), repr(float(b))] for a, b in row.roc)
    (out or sys.stdout).write(report.to_text())
    return report


def cmd_pipeline(cfg, drop=()):
    t0 = time.time()
    cmd_generate(cfg)
    for m in MODALITIES:
        if m not in drop:
            cmd_train(cfg, m)
    cmd_fuse(cfg, drop)
    report = cmd_report(cfg)
    log.info("pipeline finished in %.1fs", time.time() - t0)
    return report


# ------------------------------------------------------------------ entry

def make_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--workdir")
    common.add_argument("--checkpoint-dir")
    common.add_argument("--report", help="report JSON path")
    common.add_argument("--n-subjects", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="trimodal", description="Multimodal late-fusion pipeline on synthetic cohorts.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="write the synthetic dataset files")
    p = sub.add_parser("train", parents=[common], help="train one modality and save its checkpoint")
    p.add_argument("--modality", required=True, choices=MODALITIES)
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on one split")
    p.add_argument("--modality", required=True, choices=MODALITIES)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    for name, helptext in (("fuse", "fuse available checkpoints over the test split"),
                           ("pipeline", "run generate, train, fuse and report")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--strategy", action="append", choices=fz.STRATEGIES)
        p.add_argument("--drop-modality", action="append", default=[], choices=MODALITIES,
                       help="treat a modality as missing for every subject")
    sub.add_parser("report", parents=[common], help="assemble the metrics report from fusion results")
    return parser


def run_cli(argv=None):
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = make_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            raise UsageError("missing subcommand")
        if argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
            parser.print_usage(sys.stderr)
            raise UsageError(f"unknown subcommand {argv[0]!r}")
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return 0 if exc.code in (0, None) else 2
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("missing subcommand")
        cfg = RunConfig.from_args(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        if args.command not in ("eval", "report"):
            cfg.workdir.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.modality)
        elif args.command == "eval":
            cmd_eval(cfg, args.modality, args.split)
        elif args.command == "fuse":
            cmd_fuse(cfg, tuple(args.drop_modality))
        elif args.command == "report":
            cmd_report(cfg)
        elif args.command == "pipeline":
            cmd_pipeline(cfg, tuple(args.drop_modality))
    except (TrimodalError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())
