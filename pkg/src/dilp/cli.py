"""Batch command-line front end.

Subcommands: ``synth`` (write scenario datasets), ``prepare`` (transaction
CSV to fact tables plus a manifest), ``train`` (end to end: facts, learned
weights, extracted rules, SQL when applicable, metrics), ``eval`` (crisp
evaluation of stored rules on a fact table) and ``emit-sql``.

Exit codes: 2 for configuration problems, 3 for data problems, 4 for
training failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from . import metrics
from .clausegen import (
    DEFAULT_MEMORY_CAP_BYTES,
    ProgramTemplate,
    RuleTemplate,
)
from .emit import (
    evaluate_boolean_matrix,
    evaluate_program_rows,
    format_flat_rules,
    rephrase,
    to_sql,
)
from .errors import (
    ConfigError,
    DataError,
    RecursivePredicate,
    TrainingError,
    UnsupportedArity,
)
from .logic import (
    Language,
    Predicate,
    PredicateKind,
    Program,
    crisp_fixpoint,
    format_program,
    parse_program,
)
from .synth import (
    ABCD_SEED,
    abcd_fact_table,
    gen_abcd,
    gen_fraud_chain,
    gen_fraud_relationship,
)
from .tabular import (
    FactTable,
    SplitSpec,
    THRESHOLD_PRESETS,
    ThresholdRule,
    ThresholdSpec,
    add_negations,
    binarize,
    compute_aggregates,
    group_split,
    load_paysim_csv,
    paysim_clean,
    sample_balanced,
    standard_scale,
    threshold_matrix,
)
from .trainer import TrainConfig, train, evaluate

log = logging.getLogger("dilp")

SCALE_COLUMNS = (
    "amount",
    "oldbalanceOrg",
    "newbalanceOrig",
    "oldbalanceDest",
    "newbalanceDest",
    "avg_amount_3",
    "max_amount_3",
    "avg_amount_7",
    "max_amount_7",
)


def write_text(path: Path, content: str) -> None:
    """Write-then-rename so failures never leave partial output files."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content)
    os.replace(tmp, path)


@dataclass
class ExperimentConfig:
    name: str
    data: dict
    template: dict
    train: dict = field(default_factory=dict)
    emit_sql: bool = True
    output_dir: str | None = None
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP_BYTES
    mask_circular: bool = True

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {path} is not valid JSON: {err}") from None
        known = {
            "name",
            "data",
            "template",
            "train",
            "emit_sql",
            "output_dir",
            "memory_cap_bytes",
            "mask_circular",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("name", "data", "template"):
            if key not in raw:
                raise ConfigError(f"config {path} lacks required key {key!r}")
        if not isinstance(raw["data"], dict) or "kind" not in raw["data"]:
            raise ConfigError("config data section needs a 'kind'")
        return cls(**raw)

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(**self.train)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad train section: {err}") from None


def _build_template(cfg: ExperimentConfig, table: FactTable) -> ProgramTemplate:
    section = cfg.template
    target = table.language.target
    aux_spec = section.get("auxiliary", 0)
    if isinstance(aux_spec, int):
        aux_names = [f"pred{i + 1}" for i in range(aux_spec)]
    else:
        aux_names = list(aux_spec)
    aux = tuple(
        Predicate(n, target.arity, PredicateKind.AUXILIARY) for n in aux_names
    )
    raw_templates = section.get("templates", {})
    default = raw_templates.get("default") or section.get("default_template")

    def slot_pair(name):
        entry = raw_templates.get(name, default)
        if entry is None:
            raise ConfigError(f"no rule templates for predicate {name}")
        if len(entry) != 2:
            raise ConfigError(f"predicate {name} needs exactly two rule templates")
        try:
            return tuple(RuleTemplate(int(n), bool(flag)) for n, flag in entry)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad rule template for {name}: {err}") from None

    templates = {p: slot_pair(p.name) for p in (target,) + aux}
    steps = section.get("inference_steps")
    if steps is None:
        raise ConfigError("template section needs inference_steps")
    try:
        return ProgramTemplate(
            target,
            aux,
            templates,
            int(steps),
            bool(section.get("prevent_target_recursion", False)),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


def _thresholds_from_config(data: dict) -> ThresholdSpec:
    if "thresholds" in data:
        rules = tuple(
            ThresholdRule(
                r["column"],
                float(r["threshold"]),
                r.get("direction", "greater"),
                r["predicate"],
            )
            for r in data["thresholds"]
        )
        spec = ThresholdSpec(rules)
    else:
        preset = data.get("preset")
        if preset not in THRESHOLD_PRESETS:
            raise ConfigError(
                f"data preset must be one of {sorted(THRESHOLD_PRESETS)}, got {preset!r}"
            )
        spec = THRESHOLD_PRESETS[preset]
    if data.get("negations", False):
        spec = add_negations(spec)
    return spec


@dataclass
class PreparedData:
    train_table: FactTable
    test_frame: pd.DataFrame | None = None
    test_spec: ThresholdSpec | None = None
    holdout_table: FactTable | None = None
    manifest: dict = field(default_factory=dict)


def _prepare_paysim(data: dict) -> PreparedData:
    path = data.get("path")
    if not path:
        raise ConfigError("paysim data section needs a csv 'path'")
    if not Path(path).exists():
        raise DataError(f"transaction csv {path} does not exist")
    split_seed = int(data.get("split_seed", 0))
    sample_seed = int(data.get("sample_seed", 0))
    frame = load_paysim_csv(path)
    frame = paysim_clean(frame)
    frame = compute_aggregates(frame)
    split = SplitSpec(seed=split_seed)
    train_frame, val_frame, test_frame = group_split(frame, split)
    scale_cols = [c for c in SCALE_COLUMNS if c in frame.columns]
    train_frame, (val_frame, test_frame), scaler = standard_scale(
        train_frame, [val_frame, test_frame], scale_cols
    )
    manifest = {
        "split_seed": split_seed,
        "sample_seed": sample_seed,
        "rows_total": len(frame),
        "rows_train_split": len(train_frame),
        "rows_validation_split": len(val_frame),
        "rows_test_split": len(test_frame),
        "scaler": {c: [m, s] for c, (m, s) in scaler.items()},
    }
    sample = data.get("sample")
    if sample:
        n_pos, n_neg = int(sample[0]), int(sample[1])
        train_frame = sample_balanced(train_frame, n_pos, n_neg, sample_seed)
        manifest["sample"] = [n_pos, n_neg]
    spec = _thresholds_from_config(data)
    manifest["thresholds"] = [
        [r.column, r.threshold, r.direction, r.predicate] for r in spec
    ]
    table = binarize(train_frame, spec, "isFraud")
    manifest["train_rows_sampled"] = len(train_frame)
    manifest["train_constants"] = len(table.language.constants)
    manifest["train_dropped_rows"] = len(train_frame) - len(table.language.constants)
    manifest["train_positives"] = len(table.examples.positives)
    manifest["train_negatives"] = len(table.examples.negatives)
    return PreparedData(
        train_table=table,
        test_frame=test_frame,
        test_spec=spec,
        manifest=manifest,
    )


def load_data(data: dict) -> PreparedData:
    kind = data.get("kind")
    if kind == "abcd":
        n = int(data.get("n", 100))
        seed = int(data.get("seed", ABCD_SEED))
        table = abcd_fact_table(gen_abcd(n, seed))
        prepared = PreparedData(train_table=table, manifest={"n": n, "seed": seed})
        holdout_seed = data.get("holdout_seed")
        if holdout_seed is not None:
            prepared.holdout_table = abcd_fact_table(gen_abcd(n, int(holdout_seed)))
            prepared.manifest["holdout_seed"] = int(holdout_seed)
        return prepared
    if kind == "fraud_relationship":
        return PreparedData(train_table=gen_fraud_relationship())
    if kind == "fraud_chain":
        return PreparedData(train_table=gen_fraud_chain())
    if kind == "paysim":
        return _prepare_paysim(data)
    if kind == "facts":
        path = data.get("path")
        if not path:
            raise ConfigError("facts data section needs a 'path'")
        if not Path(path).exists():
            raise DataError(f"fact table {path} does not exist")
        prepared = PreparedData(train_table=FactTable.load(path))
        test_path = data.get("test_path")
        if test_path:
            if not Path(test_path).exists():
                raise DataError(f"fact table {test_path} does not exist")
            prepared.holdout_table = FactTable.load(test_path)
        return prepared
    raise ConfigError(f"unknown data kind {kind!r}")


def _crisp_rule_metrics(program: Program, table: FactTable) -> metrics.MetricsReport:
    """Score the extracted program crisply against a fact table's examples."""
    try:
        rows = evaluate_program_rows(program, table)
        column_of = {c: i for i, c in enumerate(table.language.constants)}
        preds = [
            bool(rows[column_of[a.terms[0]]])
            for a in table.examples.positives + table.examples.negatives
        ]
    except (RecursivePredicate, UnsupportedArity, KeyError):
        extended = _extend_language(program, table.language)
        derived = crisp_fixpoint(program, table.facts, extended)
        preds = [
            a in derived for a in table.examples.positives + table.examples.negatives
        ]
    labels = [True] * len(table.examples.positives) + [False] * len(
        table.examples.negatives
    )
    return metrics.report(metrics.confusion(preds, labels))


def _extend_language(program: Program, language: Language) -> Language:
    known = {p.name for p in language.predicates}
    extra = tuple(p for p in program.head_predicates() if p.name not in known)
    return Language(language.predicates + extra, language.constants)


def _metrics_on_frame(
    program: Program, frame: pd.DataFrame, spec: ThresholdSpec
) -> metrics.MetricsReport:
    """Crisp rule metrics over a raw (already scaled) transaction frame."""
    truth = threshold_matrix(frame, spec)
    env = {rule.predicate: truth[:, j] for j, rule in enumerate(spec)}
    rows = evaluate_boolean_matrix(program, env)
    labels = frame["isFraud"].to_numpy().astype(bool)
    return metrics.report(metrics.confusion(list(rows), list(labels)))


def run_experiment(config_path: str, out_override: str | None = None) -> Path:
    cfg = ExperimentConfig.load(config_path)
    out_dir = Path(out_override or cfg.output_dir or f"out/{cfg.name}")
    prepared = load_data(cfg.data)
    table = prepared.train_table
    template = _build_template(cfg, table)
    train_cfg = cfg.train_config()

    model = train(
        table,
        template,
        train_cfg,
        memory_cap_bytes=cfg.memory_cap_bytes,
        mask_circular=cfg.mask_circular,
    )

    rules_text = format_program(model.extracted)
    write_text(out_dir / f"{cfg.name}.rules", rules_text)
    model.weights.save(out_dir / f"{cfg.name}.weights")
    write_text(
        out_dir / "loss.csv",
        "step,loss\n"
        + "\n".join(f"{i},{v:.10g}" for i, v in enumerate(model.loss_trace))
        + "\n",
    )

    rephrased_note = None
    try:
        flats = rephrase(model.extracted)
        write_text(out_dir / f"{cfg.name}.rephrased.rules", format_flat_rules(flats))
        rephrased_note = format_flat_rules(flats).strip()
    except RecursivePredicate as err:
        rephrased_note = f"recursive program; not rephrased ({err})"

    sql_note = None
    if cfg.emit_sql:
        try:
            query = to_sql(model.extracted, table_name=f"{cfg.name}_table")
            write_text(out_dir / f"{cfg.name}.sql", query.text)
            sql_note = "written"
        except (RecursivePredicate, UnsupportedArity) as err:
            sql_note = f"skipped: {err}"

    rows = [metrics.CSV_HEADER]
    train_soft = evaluate(model, table)
    rows.append(metrics.csv_row(train_soft, cfg.name, "train_soft"))
    train_rule = _crisp_rule_metrics(model.extracted, table)
    rows.append(metrics.csv_row(train_rule, cfg.name, "train_rule"))
    test_rule = None
    if prepared.holdout_table is not None:
        test_soft = evaluate(model, prepared.holdout_table)
        rows.append(metrics.csv_row(test_soft, cfg.name, "test_soft"))
        test_rule = _crisp_rule_metrics(model.extracted, prepared.holdout_table)
        rows.append(metrics.csv_row(test_rule, cfg.name, "test_rule"))
    if prepared.test_frame is not None:
        test_rule = _metrics_on_frame(
            model.extracted, prepared.test_frame, prepared.test_spec
        )
        rows.append(metrics.csv_row(test_rule, cfg.name, "test_rule"))
    write_text(out_dir / "metrics.csv", "\n".join(rows) + "\n")

    manifest = dict(prepared.manifest)
    manifest.update(
        {
            "experiment": cfg.name,
            "data_kind": cfg.data.get("kind"),
            "train": asdict(train_cfg),
            "inference_steps": template.inference_steps,
            "prevent_target_recursion": template.prevent_target_recursion,
            "mask_circular": cfg.mask_circular,
            "memory_estimate_bytes": model.space.memory_estimate_bytes,
            "steps_run": len(model.loss_trace),
            "final_loss": f"{model.final_loss:.10g}",
            "margin_violations": model.margin_violations,
        }
    )
    write_text(
        out_dir / "manifest",
        "\n".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in sorted(manifest.items()))
        + "\n",
    )

    print(f"[{cfg.name}] extracted program:")
    print(rules_text.strip())
    if rephrased_note:
        print(f"[{cfg.name}] rephrased: {rephrased_note}")
    if sql_note:
        print(f"[{cfg.name}] sql: {sql_note}")
    print(f"[{cfg.name}] train (rule): {train_rule.as_text().replace(chr(10), ' ')}")
    if test_rule is not None:
        print(f"[{cfg.name}] test (rule): {test_rule.as_text().replace(chr(10), ' ')}")
    return out_dir


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "abcd":
        frame = gen_abcd(args.n, args.seed)
        target = out / "abcd.csv"
        tmp = target.with_name(target.name + ".tmp")
        frame.to_csv(tmp, index=False)
        os.replace(tmp, target)
        abcd_fact_table(frame).save(out / "abcd.facts")
        print(f"wrote {target} ({len(frame)} rows) and {out / 'abcd.facts'}")
    elif args.kind == "fraud_relationship":
        table = gen_fraud_relationship()
        table.save(out / "fraud_relationship.facts")
        print(f"wrote {out / 'fraud_relationship.facts'} ({len(table.facts)} facts)")
    elif args.kind == "fraud_chain":
        table = gen_fraud_chain()
        table.save(out / "fraud_chain.facts")
        print(f"wrote {out / 'fraud_chain.facts'} ({len(table.facts)} facts)")
    return 0


def cmd_prepare(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if cfg.data.get("kind") != "paysim":
        raise ConfigError("prepare expects a config with data kind 'paysim'")
    out_dir = Path(args.out or cfg.output_dir or f"out/{cfg.name}")
    prepared = _prepare_paysim(cfg.data)
    out_dir.mkdir(parents=True, exist_ok=True)
    prepared.train_table.save(out_dir / "train.facts")
    spec = prepared.test_spec
    test_table = binarize(prepared.test_frame, spec, "isFraud")
    test_table.save(out_dir / "test.facts")
    manifest = dict(prepared.manifest)
    manifest["test_constants"] = len(test_table.language.constants)
    write_text(
        out_dir / "manifest",
        "\n".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in sorted(manifest.items()))
        + "\n",
    )
    print(f"wrote {out_dir / 'train.facts'} and {out_dir / 'test.facts'}")
    return 0


def cmd_train(args) -> int:
    configs = args.config
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_experiment, c, args.out) for c in configs]
            for future in futures:
                future.result()
    else:
        for c in configs:
            run_experiment(c, args.out)
    return 0


def cmd_eval(args) -> int:
    table = FactTable.load(args.facts)
    if len(table.examples) == 0:
        raise DataError("fact table has no examples to evaluate")
    text = Path(args.rules).read_text()
    program = parse_program(
        text, language=table.language, target_name=table.language.target.name
    )
    report = _crisp_rule_metrics(program, table)
    print(report.as_text())
    if args.out:
        write_text(
            Path(args.out),
            metrics.CSV_HEADER + "\n" + metrics.csv_row(report, Path(args.rules).stem, "eval") + "\n",
        )
    return 0


def cmd_emit_sql(args) -> int:
    text = Path(args.rules).read_text()
    program = parse_program(text, target_name=args.target)
    query = to_sql(program, args.table)
    if args.out:
        write_text(Path(args.out), query.text)
        print(f"wrote {args.out}")
    else:
        print(query.text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dilp",
        description="Differentiable rule induction over binarized transaction tables",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a synthetic scenario dataset")
    p_synth.add_argument("kind", choices=["abcd", "fraud_relationship", "fraud_chain"])
    p_synth.add_argument("--n", type=int, default=100)
    p_synth.add_argument("--seed", type=int, default=ABCD_SEED)
    p_synth.add_argument("--out", default="out/synth")
    p_synth.set_defaults(func=cmd_synth)

    p_prep = sub.add_parser("prepare", help="convert a transaction CSV to fact tables")
    p_prep.add_argument("--config", required=True)
    p_prep.add_argument("--out", default=None)
    p_prep.set_defaults(func=cmd_prepare)

    p_train = sub.add_parser("train", help="run one or more experiment configs")
    p_train.add_argument("--config", action="append", required=True)
    p_train.add_argument("--out", default=None)
    p_train.add_argument("--jobs", type=int, default=1)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate stored rules on a fact table")
    p_eval.add_argument("--rules", required=True)
    p_eval.add_argument("--facts", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_sql = sub.add_parser("emit-sql", help="translate stored rules to SQL")
    p_sql.add_argument("--rules", required=True)
    p_sql.add_argument("--table", default="fraud_table")
    p_sql.add_argument("--target", default=None)
    p_sql.add_argument("--out", default=None)
    p_sql.set_defaults(func=cmd_emit_sql)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except TrainingError as err:
        print(f"training error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
