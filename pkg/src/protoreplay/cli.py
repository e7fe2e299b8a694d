"""Command line interface.

Subcommands cover the full workflow: ``ingest`` converts CSV dumps into
the binary dataset format, ``gen-bench`` writes synthetic benchmarks,
``run``/``fscil``/``sweep`` execute the incremental protocols, ``report``
pretty-prints a saved report, ``normality`` exports per-class Gaussian
diagnostics, and ``proto`` exports or inspects prototype containers.

Exit codes: 0 on success, 2 for invalid inputs (bad flags, malformed or
inconsistent files), 3 for unexpected runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import seeds
from .benchmark import BenchSpec, generate, nearest_mean_oracle
from .checkpoint import load_state, save_state
from .classifier import TrainConfig
from .errors import ParseError, ProtoReplayError, ValidationError
from .protocol import (
    RunReport,
    SessionPlan,
    replay_size_sweep,
    run_dfcil,
    run_fscil,
    sweep_csv_rows,
)
from .prototypes import PrototypeStore, fit_prototype, principal_component_report
from .sampling import SamplerConfig
from .store import DatasetReader, read_csv_features, write_dataset

CONFIG_SCHEMA_VERSION = 1


def _fail(message: str) -> None:
    raise ValidationError(message)


def _load_json(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return doc


def _build_section(cls, doc: dict, path: Path, section: str):
    """Instantiate a config dataclass from a partial JSON object."""
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: '{section}' must be an object")
    fields = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(doc) - fields
    if unknown:
        raise ParseError(f"{path}: unknown {section} fields: {sorted(unknown)}")
    return cls(**doc)


_RUN_CONFIG_KEYS = {
    "schema_version",
    "dataset",
    "output_dir",
    "seed",
    "trials",
    "trial_seeds",
    "plan",
    "shots",
    "augment",
    "sampler",
    "train",
    "prototype_mode",
}

_PLAN_KEYS = {"base_classes", "increments", "shuffle_classes", "class_order_seeds"}


class RunSetup:
    """Everything a protocol subcommand needs, resolved from config + flags."""

    def __init__(self, args, *, need_shots: bool):
        path = Path(args.config)
        doc = _load_json(path)
        unknown = set(doc) - _RUN_CONFIG_KEYS
        if unknown:
            raise ParseError(f"{path}: unknown config fields: {sorted(unknown)}")
        version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ValidationError(f"{path}: unsupported config schema {version}")
        if "dataset" not in doc:
            raise ParseError(f"{path}: missing required field 'dataset'")

        self.dataset = Path(doc["dataset"])
        self.reader = DatasetReader(self.dataset)

        out = args.out if args.out else doc.get("output_dir")
        if not out:
            _fail("no output directory: set 'output_dir' in the config or pass --out")
        self.out_dir = Path(out)

        self.seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
        trials = int(doc.get("trials", 1))
        if trials < 1:
            _fail("'trials' must be >= 1")
        if "trial_seeds" in doc:
            trial_seeds = tuple(int(s) for s in doc["trial_seeds"])
        else:
            trial_seeds = tuple(
                seeds.subseed(self.seed, seeds.TRIAL, t) for t in range(trials)
            )

        shots = getattr(args, "shots", None)
        if shots is None:
            shots = doc.get("shots")
        if need_shots and shots is None:
            _fail("few-shot run needs 'shots' in the config or --shots")
        if not need_shots:
            shots = None
        self.shots = int(shots) if shots is not None else None

        self.augment = bool(getattr(args, "augment", False) or doc.get("augment", False))

        plan_doc = doc.get("plan", {})
        if not isinstance(plan_doc, dict):
            raise ParseError(f"{path}: 'plan' must be an object")
        unknown = set(plan_doc) - _PLAN_KEYS
        if unknown:
            raise ParseError(f"{path}: unknown plan fields: {sorted(unknown)}")
        manifest_plan = SessionPlan.from_manifest(
            self.reader.manifest, trial_seeds, shots=self.shots
        )
        base = tuple(plan_doc.get("base_classes", manifest_plan.base_classes))
        increments = tuple(
            tuple(inc) for inc in plan_doc.get("increments", manifest_plan.increments)
        )
        self.plan = SessionPlan(
            base_classes=base,
            increments=increments,
            trial_seeds=trial_seeds,
            shots=self.shots,
            shuffle_classes=bool(plan_doc.get("shuffle_classes", True)),
            class_order_seeds=(
                tuple(int(s) for s in plan_doc["class_order_seeds"])
                if "class_order_seeds" in plan_doc
                else None
            ),
        )

        self.sampler = _build_section(
            SamplerConfig, doc.get("sampler", {}), path, "sampler"
        )
        self.train = _build_section(TrainConfig, doc.get("train", {}), path, "train")
        self.prototype_mode = doc.get("prototype_mode", "auto")
        if self.prototype_mode not in ("auto", "reduce", "full"):
            _fail(f"unknown prototype_mode '{self.prototype_mode}'")
        self.jobs = getattr(args, "jobs", 1)
        if self.jobs < 1:
            _fail("--jobs must be >= 1")


def _write_report(report: RunReport, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    with open(out_dir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(report.csv_rows())
    return report_path


def _print_aggregate(report: RunReport) -> None:
    agg = report.aggregate()
    parts = []
    for name in ("mean_g", "final_g", "sad", "mean_ifm"):
        stats = agg[name]
        if stats is None:
            continue
        parts.append(f"{name}={stats['mean']:.2f}+-{stats['std']:.2f}")
    print(f"{report.protocol}: {len(report.trials)} trials, " + ", ".join(parts))


def _cmd_ingest(args) -> int:
    train = read_csv_features(Path(args.train))
    test = read_csv_features(Path(args.test)) if args.test else None
    labels = train.class_labels()
    if test is not None:
        extra = set(test.class_labels()) - set(labels)
        if extra:
            _fail(f"test classes {sorted(extra)} have no training rows")
    if args.base_classes < 1 or args.base_classes > len(labels):
        _fail(
            f"--base-classes must be in [1, {len(labels)}], got {args.base_classes}"
        )
    rest = labels[args.base_classes :]
    if rest and args.increment_size < 1:
        _fail("--increment-size must be >= 1 when incremental classes remain")
    if rest and len(rest) % args.increment_size != 0:
        _fail(
            f"{len(rest)} incremental classes do not divide into sessions of "
            f"{args.increment_size}"
        )
    dim = train.dim

    def block(label):
        test_rows = test.for_label(label) if test is not None else np.zeros((0, dim))
        return (label, train.for_label(label), test_rows)

    sessions = [[block(l) for l in labels[: args.base_classes]]]
    for at in range(0, len(rest), args.increment_size):
        sessions.append([block(l) for l in rest[at : at + args.increment_size]])
    manifest_path = write_dataset(Path(args.out), dim, sessions)
    print(
        f"wrote {len(labels)} classes, {len(sessions)} sessions, dim {dim} "
        f"-> {manifest_path}"
    )
    return 0


def _cmd_gen_bench(args) -> int:
    spec = BenchSpec.from_json(Path(args.spec))
    if args.seed is not None:
        spec = BenchSpec.from_dict({**spec.__dict__, "seed": args.seed})
    manifest_path = generate(spec, Path(args.out))
    oracle = nearest_mean_oracle(Path(args.out)) if spec.test_per_class else None
    line = (
        f"wrote {spec.scheduled_classes} classes, dim {spec.dim}, "
        f"separation {spec.separation} -> {manifest_path}"
    )
    if oracle is not None:
        line += f" (nearest-mean oracle {oracle:.1f}%)"
    print(line)
    return 0


def _cmd_run(args) -> int:
    setup = RunSetup(args, need_shots=False)
    report = run_dfcil(
        setup.reader,
        setup.plan,
        setup.sampler,
        setup.train,
        prototype_mode=setup.prototype_mode,
        jobs=setup.jobs,
        state_dir=setup.out_dir if args.save_state else None,
    )
    path = _write_report(report, setup.out_dir)
    _print_aggregate(report)
    print(f"report: {path}")
    return 0


def _cmd_fscil(args) -> int:
    setup = RunSetup(args, need_shots=True)
    report = run_fscil(
        setup.reader,
        setup.plan,
        setup.sampler,
        setup.train,
        augment=setup.augment,
        prototype_mode=setup.prototype_mode,
        jobs=setup.jobs,
        state_dir=setup.out_dir if args.save_state else None,
    )
    path = _write_report(report, setup.out_dir)
    _print_aggregate(report)
    print(f"report: {path}")
    return 0


def _cmd_sweep(args) -> int:
    setup = RunSetup(args, need_shots=False)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"--sizes must be comma-separated integers: '{args.sizes}'")
    results = replay_size_sweep(
        setup.reader,
        setup.plan,
        sizes,
        setup.sampler,
        setup.train,
        prototype_mode=setup.prototype_mode,
        jobs=setup.jobs,
    )
    setup.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = setup.out_dir / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(sweep_csv_rows(results))
    doc = {str(size): report.to_dict() for size, report in results.items()}
    with open(setup.out_dir / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    for size, report in results.items():
        agg = report.aggregate()
        print(
            f"size {size}: mean_g={agg['mean_g']['mean']:.2f}"
            f" final_g={agg['final_g']['mean']:.2f}"
        )
    print(f"sweep: {csv_path}")
    return 0


def _cmd_report(args) -> int:
    doc = _load_json(Path(args.report))
    for key in ("protocol", "trials", "aggregate"):
        if key not in doc:
            _fail(f"{args.report}: not a run report (missing '{key}')")
    trials = doc["trials"]
    print(f"protocol: {doc['protocol']}, trials: {len(trials)}")

    n_tasks = max(len(t["sessions"]) for t in trials) if trials else 0
    tail = n_tasks - 1  # tasks after the base session
    headers = ["trial"] + [f"Task {k}" for k in range(n_tasks)]
    if tail > 0:
        headers.append(f"Mean (Task 1->{tail})")

    def table(metric):
        print(f"{metric.upper()} per task:")
        print("  " + "  ".join(f"{h:>12}" for h in headers))
        for t in trials:
            vals = [rec[metric] for rec in t["sessions"]]
            cells = [f"{t['index']} (seed {t['seed']})"] + [f"{v:.2f}" for v in vals]
            if tail > 0:
                cells.append(f"{float(np.mean(vals[1:])):.2f}")
            print("  " + "  ".join(f"{c:>12}" for c in cells))

    table("g")
    table("ifm")
    print("aggregate (mean +- std over trials):")
    for name, stats in doc["aggregate"].items():
        if stats is None:
            print(f"  {name}: n/a")
        else:
            print(f"  {name}: {stats['mean']:.2f} +- {stats['std']:.2f}")
    return 0


def _cmd_normality(args) -> int:
    reader = DatasetReader(Path(args.dataset))
    rows = reader.train_features(args.label)
    reports = principal_component_report(rows, args.components)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        # projection is in data order; the qq columns are the i-th sorted pair
        writer.writerow(
            ["component", "index", "projection", "theoretical_quantile", "sample_quantile"]
        )
        for rep in reports:
            for i in range(rep.projections.shape[0]):
                writer.writerow(
                    [
                        rep.component,
                        i,
                        repr(float(rep.projections[i])),
                        repr(float(rep.qq[i, 0])),
                        repr(float(rep.qq[i, 1])),
                    ]
                )
    print(
        f"class {args.label}: {len(reports)} components x {rows.shape[0]} samples "
        f"-> {out}"
    )
    return 0


def _cmd_proto_export(args) -> int:
    reader = DatasetReader(Path(args.dataset))
    store = PrototypeStore(reader.dim)
    for label in reader.labels():
        store.add(
            fit_prototype(label, reader.train_features(label), mode=args.mode)
        )
    path = save_state(Path(args.out), store)
    print(f"exported {len(store)} prototypes (dim {store.dim}) -> {path}")
    return 0


def _cmd_proto_import(args) -> int:
    store, clf = load_state(Path(args.file))
    print(f"container: dim {store.dim}, {len(store)} prototypes")
    for p in store.prototypes():
        form = f"reduced rank {p.rank}" if p.reduced else "full"
        print(f"  class {p.label}: {form}, fitted from {p.sample_count} rows")
    if clf is not None:
        print(f"  classifier head: {clf.n_classes} classes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoreplay",
        description="Embedding-space continual learning with synthetic feature replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert CSV feature dumps into a dataset directory")
    p.add_argument("--train", required=True, help="CSV with header label,f0,...")
    p.add_argument("--test", default=None, help="optional CSV of test rows")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--base-classes", type=int, required=True,
                   help="number of (smallest) labels forming session 0")
    p.add_argument("--increment-size", type=int, default=1,
                   help="classes per incremental session")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("gen-bench", help="generate a synthetic benchmark dataset")
    p.add_argument("--spec", required=True, help="benchmark spec JSON")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--seed", type=int, default=None, help="override the seed in the benchmark spec")
    p.set_defaults(func=_cmd_gen_bench)

    def add_run_flags(p, *, shots: bool):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
        p.add_argument("--save-state", action="store_true",
                       help="also write per-trial prototype+classifier containers")
        if shots:
            p.add_argument("--shots", type=int, default=None,
                           help="rows per new class (overrides config)")
            p.add_argument("--augment", action="store_true",
                           help="expand shots into synthetic training pools")

    p = sub.add_parser("run", help="run the class-incremental protocol")
    add_run_flags(p, shots=False)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("fscil", help="run the few-shot class-incremental protocol")
    add_run_flags(p, shots=True)
    p.set_defaults(func=_cmd_fscil)

    p = sub.add_parser("sweep", help="sweep the replay buffer size")
    add_run_flags(p, shots=False)
    p.add_argument("--sizes", required=True, help="comma-separated buffer sizes")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="pretty-print a saved report.json")
    p.add_argument("report", help="path to report.json")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("normality", help="export Gaussian diagnostics for one class")
    p.add_argument("--dataset", required=True)
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--components", type=int, default=6,
                   help="principal components to report")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.set_defaults(func=_cmd_normality)

    p = sub.add_parser("proto", help="export or inspect prototype containers")
    psub = p.add_subparsers(dest="proto_command", required=True)
    pe = psub.add_parser("export", help="fit prototypes from a dataset and save them")
    pe.add_argument("--dataset", required=True)
    pe.add_argument("--out", required=True, help="container file to write")
    pe.add_argument("--mode", choices=("auto", "reduce", "full"), default="auto")
    pe.set_defaults(func=_cmd_proto_export)
    pi = psub.add_parser("import", help="load a container and print its contents")
    pi.add_argument("file", help="container file")
    pi.set_defaults(func=_cmd_proto_import)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ProtoReplayError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())
