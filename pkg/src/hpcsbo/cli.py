"""Command-line entry point: assemble, run, campaign, train, eval, sweep, report.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal invariant violation. Stages share nothing but files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .campaign import (ATTACK, CLEAN, CSV_HEADER, DEFAULT_PCTS, PAPER_SCALE, CampaignConfig, CampaignError,
                       DatasetError, RunRecord, feature_matrix, labels, load_dataset, pct_tag, run_campaign)
from .config import ConfigError, load_config
from .detectors import DETECTORS, MODES, DetectorConfig, SemiSupervisedError, fit_pipeline, load_pipeline
from .detectors import rank_features, save_pipeline
from .detectors.io import ModelFormatError
from .detectors.ranking import METHODS
from .emulator import DEFAULT_STEP_LIMIT, HPC_FIELDS, run
from .evaluation import (SWEEP_MODES, EvalReport, SweepConfig, evaluate, load_report, render_report,
                         save_report, sweep)
from .isa import AssemblyError, assemble, program_from_dict, program_to_dict
from .workloads import WORKLOADS, build_workload, calibrate, craft_attack_input, gen_clean_input, workload_spec

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
AE_DETECTOR = "autoencoder"


class UsageError(Exception):
    pass


class InvariantViolation(RuntimeError):
    pass


def _color(code: str, text: str, stream) -> str:
    if os.environ.get("NO_COLOR") or not getattr(stream, "isatty", lambda: False)():
        return text
    return f"\033[{code}m{text}\033[0m"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# option tables: every value option defaults to None so a config file can
# fill it; the built-in default applies last

@dataclass(frozen=True)
class Opt:
    flag: str
    kind: str  # int | float | str | path | flag | floats | words
    default: object
    help: str
    choices: tuple | None = None
    short: str | None = None

    @property
    def key(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _words(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


_CONVERT = {"int": lambda s: int(s, 0), "float": float, "str": str, "path": Path, "flag": _parse_bool,
            "floats": _floats, "words": _words}


def _argtype(kind: str):
    conv = _CONVERT[kind]

    def parse(s):
        try:
            return conv(s)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid {kind} value {s!r}") from exc
    parse.__name__ = kind
    return parse


def _add(p: argparse.ArgumentParser, opts: list[Opt]) -> None:
    for o in opts:
        dflt = "" if o.default is None else f" (default: {_show(o.default)})"
        if o.choices and o.key != "detector":
            dflt = f"; one of {', '.join(o.choices)}" + dflt
        names = [o.short, o.flag] if o.short else [o.flag]
        if o.kind == "flag":
            p.add_argument(*names, dest=o.key, action="store_const", const=True, default=None, help=o.help)
        else:
            p.add_argument(*names, dest=o.key, type=_argtype(o.kind), default=None, help=o.help + dflt,
                           metavar=o.key.upper())


def _show(v) -> str:
    if isinstance(v, tuple):
        return ",".join(pct_tag(x) if isinstance(x, float) else str(x) for x in v)
    return str(v)


def _resolve(args, opts: list[Opt], file_values: dict[str, str], source: str) -> dict:
    known = {o.key: o for o in opts}
    for k in file_values:
        if k not in known:
            raise ConfigError(f"{source}: unknown key {k!r}; valid keys: {', '.join(sorted(known))}")
    out = {}
    for o in opts:
        v = getattr(args, o.key)
        if v is None and o.key in file_values:
            try:
                v = _CONVERT[o.kind](file_values[o.key])
            except ValueError as exc:
                raise ConfigError(f"{source}: {o.key}: {exc}") from exc
        if v is not None and o.choices is not None:
            for item in (v if isinstance(v, tuple) else (v,)):
                if item not in o.choices:
                    raise UsageError(f"{o.flag}: {item!r} is not one of {', '.join(o.choices)}")
        out[o.key] = o.default if v is None else v
        out[f"{o.key}__given"] = v is not None
    return out


def _file_values(args) -> tuple[dict[str, str], str]:
    path = getattr(args, "config", None)
    if path is None:
        return {}, "<none>"
    return load_config(path), str(path)


DETECTOR_OPTS = [
    Opt("--nu", "float", 0.05, "OC-SVM nu"),
    Opt("--gamma", "float", None, "OC-SVM RBF gamma (default: 1 / n_inputs)"),
    Opt("--k", "int", 20, "LOF neighbours"),
    Opt("--lof-quantile", "float", 0.95, "LOF threshold quantile of training scores"),
    Opt("--n-trees", "int", 100, "isolation forest trees"),
    Opt("--psi", "int", 256, "isolation forest subsample size"),
    Opt("--contamination", "float", 0.05, "IF / elliptic envelope threshold contamination"),
    Opt("--n-subsets", "int", 50, "FastMCD random starts"),
    Opt("--ae-epochs", "int", 200, "autoencoder epochs"),
    Opt("--ae-lr", "float", 1e-3, "autoencoder Adam learning rate"),
    Opt("--ae-batch", "int", 32, "autoencoder minibatch size"),
    Opt("--seed", "int", 0, "detector seed (IF, FastMCD, autoencoder)"),
]


def _detector_config(v: dict) -> DetectorConfig:
    return DetectorConfig(nu=v["nu"], gamma=v["gamma"], k=v["k"], lof_quantile=v["lof_quantile"],
                          n_trees=v["n_trees"], psi=v["psi"], contamination=v["contamination"],
                          n_subsets=v["n_subsets"], ae_epochs=v["ae_epochs"], ae_lr=v["ae_lr"],
                          ae_batch=v["ae_batch"], seed=v["seed"])


CAMPAIGN_OPTS = [
    Opt("--workload", "str", None, "workload name or 'all'", WORKLOADS + ("all",)),
    Opt("--n-train", "int", 2000, "clean training runs"),
    Opt("--n-test", "int", 2000, "balanced test runs per payload percentage (even)"),
    Opt("--n-calib", "int", 200, "balanced ranking-calibration runs per payload percentage (even)"),
    Opt("--pcts", "floats", DEFAULT_PCTS, "comma-separated payload percentages"),
    Opt("--master-seed", "int", 0, "64-bit master seed"),
    Opt("--compress", "flag", False, "build with compressed encodings"),
    Opt("--step-limit", "int", DEFAULT_STEP_LIMIT, "per-run instruction budget"),
    Opt("--out", "path", Path("campaign"), "output root; each workload goes to <out>/<workload>/"),
    Opt("--paper-scale", "flag", False, f"use {PAPER_SCALE} training and {PAPER_SCALE} test runs"),
    Opt("--jobs", "int", 1, "worker processes"),
]

TRAIN_OPTS = [
    Opt("--detector", "str", None, f"one of {', '.join(DETECTORS)}, or {AE_DETECTOR} with --mode ae_recon",
        DETECTORS + (AE_DETECTOR,)),
    Opt("--mode", "str", "raw", "input path", MODES),
    Opt("--train", "path", None, "clean training CSV"),
    Opt("--features", "int", len(HPC_FIELDS), "number of top-ranked features to keep"),
    Opt("--rank-method", "str", "single_feature_probe", "feature ranking method", METHODS),
    Opt("--out", "path", None, "model file to write", short="-o"),
] + DETECTOR_OPTS

SWEEP_OPTS = [
    Opt("--data-dir", "path", Path("campaign"), "campaign root holding one directory per workload"),
    Opt("--workloads", "words", WORKLOADS, "comma-separated workloads", WORKLOADS),
    Opt("--detectors", "words", DETECTORS, "comma-separated detectors", DETECTORS),
    Opt("--modes", "words", SWEEP_MODES, "comma-separated modes", SWEEP_MODES),
    Opt("--pcts", "floats", DEFAULT_PCTS, "comma-separated payload percentages"),
    Opt("--max-features", "int", len(HPC_FIELDS), "largest feature count swept (1..8)"),
    Opt("--rank-method", "str", "single_feature_probe", "feature ranking method", METHODS),
    Opt("--out", "path", Path("report.json"), "report file to write", short="-o"),
    Opt("--jobs", "int", 1, "worker processes"),
] + DETECTOR_OPTS


# ---------------------------------------------------------------------------
# subcommands

def cmd_assemble(args) -> int:
    try:
        src = Path(args.src).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {args.src}: {exc.strerror or exc}") from exc
    prog = assemble(src, compress=args.compress)
    Path(args.out).write_text(json.dumps(program_to_dict(prog), sort_keys=True) + "\n", encoding="utf-8")
    n2 = sum(i.width == 2 for i in prog.text)
    print(f"{args.out}: {len(prog.text)} instructions ({n2} compressed), {len(prog.data)} data bytes, "
          f"entry {prog.entry:#x}")
    return EXIT_OK


def _counter_summary(rec: RunRecord, out) -> None:
    print(_color("1", f"{rec.workload} seed={rec.seed} label={rec.label} status={rec.exit_status.value}", out),
          file=out)
    for name, v in zip(HPC_FIELDS, rec.hpc.as_tuple()):
        print(f"  {name:<16}{v:>12}", file=out)
    print(f"  payload_executed {'yes' if rec.payload_executed else 'no':>12}", file=out)


def cmd_run(args) -> int:
    if (args.workload is None) == (args.program is None):
        raise UsageError("run: give exactly one of --workload or --program")
    if args.attack and args.payload_pct is None:
        raise UsageError("run: --attack needs --payload-pct")
    if args.payload_pct is not None and not args.attack:
        raise UsageError("run: --payload-pct only applies with --attack")
    if args.program is not None and (args.attack or args.compress):
        raise UsageError("run: --attack and --compress need --workload (a program image is already built)")
    if args.input_hex is not None and args.program is None:
        raise UsageError("run: --input-hex only applies with --program")
    if args.payload_pct is not None and args.payload_pct <= 0:
        raise UsageError("run: --payload-pct must be positive")

    pct = 0.0
    if args.program is not None:
        try:
            prog = program_from_dict(json.loads(Path(args.program).read_text(encoding="utf-8")))
            data = bytes.fromhex(args.input_hex or "")
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"cannot load program image {args.program}: {exc}") from exc
        name = Path(args.program).stem
    else:
        name = args.workload
        spec = workload_spec(name)
        prog = build_workload(name, args.compress)
        if args.attack:
            params = calibrate(spec, prog, args.payload_pct, seed=args.master_seed, step_limit=args.step_limit)
            data, pct = craft_attack_input(spec, prog, params, args.seed), float(args.payload_pct)
        else:
            data = gen_clean_input(spec, args.seed)
    res = run(prog, data, args.step_limit)
    bad = res.hpc.violations()
    if bad:
        raise InvariantViolation(f"counter invariants broken: {'; '.join(bad)}")
    rec = RunRecord(name, 0, args.seed, ATTACK if args.attack else CLEAN, pct, res.hpc, res.exit_status,
                    res.payload_executed)
    if args.workload is not None and rec.soundness_errors():
        raise InvariantViolation(f"label soundness broken: {'; '.join(rec.soundness_errors())}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerow(rec.row())
    print()
    _counter_summary(rec, sys.stdout)
    return EXIT_OK


def cmd_campaign(args) -> int:
    fv, source = _file_values(args)
    v = _resolve(args, CAMPAIGN_OPTS, fv, source)
    if v["workload"] is None:
        raise UsageError("campaign: --workload is required (flag or config key 'workload')")
    if v["paper_scale"]:
        clash = [k for k in ("n_train", "n_test") if v[f"{k}__given"]]
        if clash:
            raise UsageError(f"campaign: --paper-scale conflicts with explicit {', '.join(clash)}")
        v["n_train"] = v["n_test"] = PAPER_SCALE
    if v["jobs"] < 1:
        raise UsageError("campaign: --jobs must be >= 1")
    names = WORKLOADS if v["workload"] == "all" else (v["workload"],)
    cfgs = [CampaignConfig(workload=w, n_train_clean=v["n_train"], n_test=v["n_test"], n_calib=v["n_calib"],
                           payload_pcts=tuple(v["pcts"]), master_seed=v["master_seed"],
                           compress=bool(v["compress"]), step_limit=v["step_limit"], out_dir=v["out"] / w)
            for w in names]
    for cfg in cfgs:
        res = run_campaign(cfg, v["jobs"])
        shares = ", ".join(f"{t}%->{res.metadata[f'achieved_share_pct{t}']}%" for t in res.tests)
        print(f"{cfg.workload}: {len(res.train)} train, {len(res.tests)} test sets in {cfg.out_dir} "
              f"(baseline {res.metadata['baseline_instret']} instr; achieved {shares})")
    return EXIT_OK


def _load_records(paths, what: str) -> list[RunRecord]:
    out = []
    for p in paths:
        if not Path(p).exists():
            raise DatasetError(f"{what} file {p} does not exist")
        out.extend(load_dataset(p))
    return out


def cmd_train(args) -> int:
    fv, source = _file_values(args)
    v = _resolve(args, TRAIN_OPTS, fv, source)
    for req in ("detector", "train", "out"):
        if v[req] is None:
            raise UsageError(f"train: --{req} is required")
    if (v["detector"] == AE_DETECTOR) != (v["mode"] == "ae_recon"):
        raise UsageError(f"train: detector {AE_DETECTOR} goes with --mode ae_recon and only with it "
                         f"(got --detector {v['detector']} --mode {v['mode']})")
    if not 1 <= v["features"] <= len(HPC_FIELDS):
        raise UsageError(f"train: --features must lie in [1, {len(HPC_FIELDS)}]")
    calib_paths = list(args.calib or [])
    if v["rank_method"] == "single_feature_probe" and not calib_paths:
        raise UsageError("train: --rank-method single_feature_probe needs --calib (or use "
                         "--rank-method dispersion)")
    if v["rank_method"] == "dispersion" and calib_paths:
        raise UsageError("train: --calib is only used by --rank-method single_feature_probe")

    train = _load_records([v["train"]], "training")
    if not train:
        raise DatasetError(f"{v['train']}: no rows")
    bad = [(i, r) for i, r in enumerate(train) if r.label != CLEAN]
    if bad:
        i, r = bad[0]
        raise SemiSupervisedError(f"{v['train']}: line {i + 2} (run_index {r.run_index}) is labelled "
                                  f"{r.label!r}; training data must be clean only ({len(bad)} such rows)")
    X = feature_matrix(train)
    dc = _detector_config(v)
    if calib_paths:
        calib = _load_records(calib_paths, "calibration")
        order = rank_features(X, feature_matrix(calib), labels(calib), v["rank_method"], labels(train), dc.k)
    else:
        order = rank_features(X, method=v["rank_method"], train_labels=labels(train))
    feats = order[:v["features"]]
    det = DETECTORS[0] if v["detector"] == AE_DETECTOR else v["detector"]
    pipe = fit_pipeline(X, det, v["mode"], feats, dc, labels(train))
    save_pipeline(pipe, v["out"])
    print(f"{v['out']}: {pipe.detector}/{pipe.mode} on {', '.join(HPC_FIELDS[i] for i in feats)} "
          f"({len(train)} clean rows)")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model_bytes = Path(args.model).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read model {args.model}: {exc.strerror or exc}") from exc
    pipe = load_pipeline(args.model)
    cells, tests = [], []
    for path in args.test:
        recs = _load_records([path], "test")
        if not recs:
            raise DatasetError(f"{path}: no rows")
        cells.append(evaluate(pipe, recs))
        # name and digest rather than the path, so reruns elsewhere compare equal
        tests.append({"name": Path(path).name, "sha256": hashlib.sha256(Path(path).read_bytes()).hexdigest()})
    report = EvalReport(tuple(cells), {"model_sha256": hashlib.sha256(model_bytes).hexdigest(), "tests": tests})
    save_report(report, args.out)
    for c in cells:
        print(f"{c.workload} {c.detector}/{c.mode} pct={pct_tag(c.payload_pct)} n={c.n_features}: "
              f"accuracy {c.accuracy:.4f}  tpr {c.tpr:.4f}  fpr {c.fpr:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    fv, source = _file_values(args)
    v = _resolve(args, SWEEP_OPTS, fv, source)
    if v["jobs"] < 1:
        raise UsageError("sweep: --jobs must be >= 1")
    cfg = SweepConfig(data_dir=v["data_dir"], workloads=tuple(v["workloads"]), detectors=tuple(v["detectors"]),
                      modes=tuple(v["modes"]), payload_pcts=tuple(v["pcts"]), max_features=v["max_features"],
                      ranking=v["rank_method"], detector=_detector_config(v))
    report = sweep(cfg, v["jobs"])
    save_report(report, v["out"])
    print(f"{v['out']}: {len(report.cells)} cells")
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_report(args.inp)
    if not report.cells:
        raise DatasetError(f"{args.inp}: report has no cells")
    for p in render_report(report, args.out):
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hpcsbo", description="HPC-based stack buffer overflow detection lab.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    a = sub.add_parser("assemble", help="assemble a source file into a program image")
    a.add_argument("src", help="assembly source (.s)")
    a.add_argument("-o", "--out", required=True, help="program image (JSON) to write")
    a.add_argument("--compress", action="store_true", help="use compressed encodings where eligible")
    a.set_defaults(func=cmd_assemble)

    r = sub.add_parser("run", help="execute one run and print its record and counters")
    r.add_argument("--workload", choices=WORKLOADS, help="built-in workload")
    r.add_argument("--program", help="program image written by 'assemble'")
    r.add_argument("--input-hex", help="input bytes for --program, hex encoded (default: empty)")
    r.add_argument("--seed", type=_argtype("int"), default=0, help="input seed (default: 0)")
    r.add_argument("--attack", action="store_true", help="craft an overflow input")
    r.add_argument("--payload-pct", type=_argtype("float"), help="payload size in percent of a clean run")
    r.add_argument("--master-seed", type=_argtype("int"), default=0,
                   help="seed for payload calibration (default: 0)")
    r.add_argument("--compress", action="store_true", help="build with compressed encodings")
    r.add_argument("--step-limit", type=_argtype("int"), default=DEFAULT_STEP_LIMIT,
                   help=f"instruction budget (default: {DEFAULT_STEP_LIMIT})")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="generate train/test/calibration datasets")
    c.add_argument("--config", help="key = value file; flags override its values")
    _add(c, CAMPAIGN_OPTS)
    c.set_defaults(func=cmd_campaign)

    t = sub.add_parser("train", help="fit one detector pipeline on clean data")
    t.add_argument("--config", help="key = value file; flags override its values")
    t.add_argument("--calib", action="append", help="labelled calibration CSV for ranking (repeatable)")
    _add(t, TRAIN_OPTS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score test sets with a trained model")
    e.add_argument("--model", required=True, help="model file written by 'train'")
    e.add_argument("--test", required=True, action="append", help="labelled test CSV (repeatable)")
    e.add_argument("-o", "--out", required=True, help="report file (JSON) to write")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="payload size x feature count x detector sweep")
    s.add_argument("--config", help="key = value file; flags override its values")
    _add(s, SWEEP_OPTS)
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="render results.csv and per-workload SVG charts")
    rp.add_argument("--in", dest="inp", required=True, help="report file written by 'eval' or 'sweep'")
    rp.add_argument("--out", required=True, help="output directory")
    rp.set_defaults(func=cmd_report)
    return p


def _fail(code: int, msg: str) -> int:
    print(f"{_color('31', 'error', sys.stderr)}: {msg}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, f"{exc}\n(run with --help for usage)")
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (InvariantViolation, CampaignError) as exc:
        return _fail(EXIT_INVARIANT, f"invariant violation: {exc}")
    except (DatasetError, ConfigError, ModelFormatError, AssemblyError, SemiSupervisedError) as exc:
        return _fail(EXIT_DATA, str(exc))
    except (OSError, ValueError) as exc:
        return _fail(EXIT_DATA, f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            traceback.print_exc()
        return _fail(EXIT_INVARIANT, f"internal error: {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
