"""Command-line interface: generate -> fit/train -> register -> eval / predict.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 infeasible
prediction.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen, evaluation, mlp, regression
from .core import (
    DataError,
    ModelFile,
    ModelKind,
    Scheduler,
    VbsPowerError,
    emit_csv,
    ingest_csv,
    load_model,
    save_model,
)
from .registry import REGISTRY_ENV, Registry

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list[int]:
    """'1..10', '1,3,5' or '7'."""
    seeds: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise UsageError(f"no seeds in {text!r}")
    return seeds


def _scenario_arg(text: str) -> str:
    try:
        return evaluation.Scenario.parse(text).name
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown scenario {text!r} (choose A, B, C or D)") from None


def _train_config(args, seed: int) -> mlp.TrainConfig:
    return mlp.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        l1_activity_coeff=args.l1,
        seed=seed,
    )


# --------------------------------------------------------------------------
# Commands


def cmd_generate(args, reg: Registry) -> int:
    if args.gen_config:
        cfg = datagen.GenConfig.from_dict(json.loads(Path(args.gen_config).read_text(encoding="utf-8")))
        if args.seed is not None:
            cfg = datagen.GenConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
        pairs = [(cfg.scheduler, datagen.generate(cfg))]
        platform, seed = cfg.platform.alias, cfg.seed
    else:
        if args.platform is None:
            raise UsageError("--platform is required")
        if args.platform not in datagen.BUILTIN_PROFILES:
            raise UsageError(f"unknown platform {args.platform!r}; built-in: {', '.join(datagen.BUILTIN_PROFILES)}")
        seed = 0 if args.seed is None else args.seed
        platform = args.platform
        if args.campaign == "paper":
            ds_default, ds_custom = datagen.default_campaign(platform, seed)
            pairs = [(Scheduler.DEFAULT, ds_default), (Scheduler.CUSTOM, ds_custom)]
        else:
            if args.n is None or args.n <= 0:
                raise UsageError("--n must be a positive integer")
            sched = Scheduler(args.scheduler)
            profile = datagen.get_profile(platform)
            cfg = datagen.GenConfig(profile, sched, args.n, seed=seed)
            pairs = [(sched, datagen.generate(cfg))]

    reg.ensure()
    for sched, ds in pairs:
        target = reg.datasets / f"{platform}_{sched.value}_s{seed}.csv"
        emit_csv(ds, target)
        reg.register(target)
        if args.out:
            out = Path(args.out)
            if len(pairs) > 1 or out.is_dir():
                out.mkdir(parents=True, exist_ok=True)
                out = out / target.name
            shutil.copyfile(target, out)
        print(f"{sched.value}: {len(ds)} samples, seed {seed} -> {target}")
    return EXIT_OK


def cmd_ingest(args, reg: Registry) -> int:
    ds = ingest_csv(args.path, seed=args.seed)
    if len(ds) == 0:
        raise DataError(f"{args.path}: no data rows")
    reg.ensure()
    suffix = f"_s{args.seed}" if args.seed is not None else ""
    target = reg.datasets / f"{ds.platform}_{ds.scheduler.value}{suffix}.csv"
    emit_csv(ds, target)
    reg.register(target)
    print(f"ingested {len(ds)} samples ({ds.platform}, {ds.scheduler.value}) -> {target}")
    return EXIT_OK


def cmd_fit(args, reg: Registry) -> int:
    kind = ModelKind(args.model_kind)
    ds = ingest_csv(args.dataset, seed=args.seed)
    scenario = args.scenario or Path(args.dataset).stem
    if kind is ModelKind.DEFAULT_REG:
        rep = regression.fit_default(ds)
        payload = rep.params
        summary = f"train_rmse={rep.train_rmse:.6f} W n={rep.n_samples} iters={rep.solver_iters}"
        if rep.unidentified:
            summary += f" unidentified={','.join(rep.unidentified)}"
    elif kind is ModelKind.CUSTOM_REG:
        rep = regression.fit_custom(ds, regression.Variant(args.variant))
        payload = rep.params
        summary = f"train_rmse={rep.train_rmse:.6f} W n={rep.n_samples} iters={rep.solver_iters}"
        if rep.unidentified:
            summary += f" unidentified={','.join(rep.unidentified)}"
    else:
        cfg = _train_config(args, args.seed)
        if args.init_model:
            source = load_model(args.init_model)
            if source.model_kind is not ModelKind.MLP:
                raise DataError(f"{args.init_model} is a {source.model_kind.value} model, not mlp")
            payload, trace = mlp.fine_tune(source.payload, ds, cfg)
        else:
            payload, trace = mlp.train(ds, cfg)
        train_rmse = float(np.sqrt(np.mean((mlp.predict_features(payload, ds.features()) - ds.power_w) ** 2)))
        summary = (
            f"epochs={cfg.epochs} steps={trace.n_steps} final_loss={trace.epoch_loss[-1]:.6f} "
            f"train_rmse={train_rmse:.6f} W"
        )
    model = ModelFile(kind, payload, ds.platform, scenario, args.seed)
    reg.ensure()
    target = reg.models / f"{ds.platform}_{kind.value}_{scenario}_s{args.seed}.json"
    save_model(model, target)
    reg.register(target)
    if args.out:
        shutil.copyfile(target, args.out)
    print(f"{kind.value}: {summary} -> {target}")
    return EXIT_OK


def _eval_one(args, seed: int, datasets):
    return evaluation.evaluate_scenario(
        args.scenario,
        args.platform,
        seed,
        args.models,
        datasets=datasets,
        train_config=_train_config(args, seed),
        variant=regression.Variant(args.variant),
    )


def _write_scatter(path: Path, run: evaluation.ScenarioRun) -> None:
    kinds = [o.report.model_kind.value for o in run.outcomes]
    test = run.test_set
    lines = [",".join(["airtime", "snr_db", "mcs", "actual_w", *[f"{k}_pred_w" for k in kinds]])]
    preds = [o.test_pred for o in run.outcomes]
    for i, s in enumerate(test.samples):
        cells = [f"{s.airtime:.3f}", f"{s.snr_db:.2f}", str(s.mcs), f"{s.power_w:.4f}"]
        cells += ["" if np.isnan(p[i]) else f"{p[i]:.4f}" for p in preds]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_bars(path: Path, reports) -> None:
    lines = ["scenario,platform,model_kind,n_seeds,median_train_rmse_w,median_test_rmse_w"]
    groups: dict = {}
    for r in reports:
        groups.setdefault((r.scenario.name, r.platform, r.model_kind.value), []).append(r)
    for (sc, plat, kind), rs in groups.items():
        tr = float(np.median([r.train_rmse_w for r in rs]))
        te = float(np.median([r.test_rmse_w for r in rs]))
        lines.append(f"{sc},{plat},{kind},{len(rs)},{tr:.6f},{te:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_eval(args, reg: Registry) -> int:
    scenario = evaluation.Scenario.parse(args.scenario)
    seeds = parse_seeds(args.seeds)
    args.models = [k.strip() for k in args.models.split(",") if k.strip()]
    bad = set(args.models) - set(evaluation.MODEL_FAMILIES)
    if bad:
        raise UsageError(f"unknown model kinds {sorted(bad)}; choose from {', '.join(evaluation.MODEL_FAMILIES)}")
    if args.platform not in datagen.BUILTIN_PROFILES and not (args.default_csv and args.custom_csv):
        raise UsageError(f"unknown platform {args.platform!r}; pass --default-csv/--custom-csv for other platforms")

    datasets = None
    if args.default_csv or args.custom_csv:
        missing = [p for p in (args.default_csv, args.custom_csv) if not p or not Path(p).is_file()]
        if missing:
            raise DataError(f"missing dataset artifacts: {', '.join(str(m) for m in missing)}")
        datasets = (ingest_csv(args.default_csv), ingest_csv(args.custom_csv))

    if args.workers > 1:
        with ThreadPoolExecutor(args.workers) as ex:
            runs = list(ex.map(lambda s: _eval_one(args, s, datasets), seeds))
    else:
        runs = [_eval_one(args, s, datasets) for s in seeds]

    reg.ensure()
    stem = f"{scenario.name}_{args.platform}"
    reports = [r for run in runs for r in run.reports]
    meta = {"scenario": scenario.value, "platform": args.platform, "seeds": seeds, "models": sorted(args.models)}
    (reg.reports / f"{stem}_report.csv").write_text(evaluation.reports_to_csv(reports), encoding="utf-8")
    json_path = reg.reports / f"{stem}_report.json"
    json_path.write_text(evaluation.reports_to_json(reports, meta), encoding="utf-8")
    _write_bars(reg.reports / f"{stem}_rmse_bars.csv", reports)
    for run in runs:
        _write_scatter(reg.reports / f"{stem}_s{run.seed}_scatter.csv", run)
        if args.save_models:
            for o in run.outcomes:
                kind = o.report.model_kind
                target = reg.models / f"{args.platform}_{kind.value}_{scenario.name}_s{run.seed}.json"
                save_model(ModelFile(kind, o.model, args.platform, scenario.name, run.seed), target)
                reg.register(target)
    reg.register(json_path)

    for r in reports:
        print(
            f"{r.scenario.name} {r.platform} {r.model_kind.value:<11} seed={r.seed:<3} "
            f"train_rmse={r.train_rmse_w:.4f} test_rmse={r.test_rmse_w:.4f} "
            f"n_train={r.n_train} n_test={r.n_test} skipped={r.n_infeasible_skipped} "
            f"test_set={r.test_fingerprint[:12]}"
        )
    return EXIT_OK


def cmd_predict(args, reg: Registry) -> int:
    m = load_model(args.model)
    a, c, mcs = args.airtime, args.snr, args.mcs
    if not 0.0 <= a <= 1.0 or c < 0 or not 0 <= mcs <= 28:
        raise UsageError("inputs out of domain: airtime in [0,1], snr >= 0, mcs in 0..28")
    try:
        if m.model_kind is ModelKind.DEFAULT_REG:
            value = regression.predict_default(m.payload, a, c)
        elif m.model_kind is ModelKind.CUSTOM_REG:
            value = regression.predict_custom(m.payload, a, c, mcs)
        else:
            value = mlp.predict(m.payload, a, c, mcs)
    except regression.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"{value:.4f}")
    return EXIT_OK


def cmd_registry(args, reg: Registry) -> int:
    entries = reg.rebuild() if args.action == "rebuild" else reg.read_index()
    for e in entries:
        print(f"{e['kind']:<15} {e['platform']:<8} {e['scenario'] or '-':<22} {e['seed']!s:<8} {e['path']}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=220)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--l1", type=float, default=1e-4, help="L1 activity regularization coefficient")
    p.add_argument("--variant", choices=[v.value for v in regression.Variant], default="continuous")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vbspower", description=__doc__.splitlines()[0])
    parser.add_argument("--registry", help=f"registry root (default ${REGISTRY_ENV} or ./registry)")
    parser.add_argument("--config", help="JSON file of flag defaults, top level or keyed by command")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a synthetic dataset or campaign")
    g.add_argument("--platform")
    g.add_argument("--campaign", choices=["paper"], help="both datasets at the reference campaign sizes")
    g.add_argument("--scheduler", choices=[s.value for s in Scheduler], default="custom")
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--gen-config", help="GenConfig JSON file")
    g.add_argument("--out", help="extra copy: file path, or directory for --campaign")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("ingest", help="validate a dataset CSV and register it")
    i.add_argument("path")
    i.add_argument("--seed", type=int)
    i.set_defaults(func=cmd_ingest)

    kinds = [k.value for k in ModelKind]
    for name, default_kind in (("fit", None), ("train", "mlp")):
        f = sub.add_parser(name, help="fit a regression model or train the NN")
        f.add_argument("--dataset", required=True)
        f.add_argument("--model-kind", choices=kinds, default=default_kind, required=default_kind is None)
        f.add_argument("--seed", type=int, default=0)
        f.add_argument("--scenario", help="training-scenario label stored in the model file")
        f.add_argument("--init-model", help="warm-start NN weights from this model file")
        f.add_argument("--out", help="extra copy of the model file")
        _add_train_flags(f)
        f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="run an evaluation scenario over seeds")
    e.add_argument("--scenario", required=True, type=_scenario_arg, help="A, B, C or D")
    e.add_argument("--platform", required=True)
    e.add_argument("--seeds", default="1..10")
    e.add_argument("--models", default="regression,nn")
    e.add_argument("--default-csv")
    e.add_argument("--custom-csv")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--no-save-models", dest="save_models", action="store_false")
    _add_train_flags(e)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="single-point power prediction")
    pr.add_argument("--model", required=True)
    pr.add_argument("--airtime", type=float, required=True)
    pr.add_argument("--snr", type=float, required=True)
    pr.add_argument("--mcs", type=int, required=True)
    pr.set_defaults(func=cmd_predict)

    r = sub.add_parser("registry", help="list or rebuild the registry index")
    r.add_argument("action", choices=["list", "rebuild"])
    r.set_defaults(func=cmd_registry)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        doc = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    flat = {k.replace("-", "_"): v for k, v in doc.items() if not isinstance(v, dict)}
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        sp.set_defaults(**flat, **{k.replace("-", "_"): v for k, v in doc.get(name, {}).items()})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    _apply_config(parser, argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    reg = Registry(args.registry)
    try:
        return args.func(args, reg)
    except UsageError as exc:
        print(f"vbspower: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VbsPowerError, ValueError, OSError) as exc:
        print(f"vbspower: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
