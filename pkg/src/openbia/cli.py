"""Command-line interface: ``openbia <command> ...``.

Exit codes: 0 success, 1 input or usage error, 2 internal error.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .equations import builtin_registry, describe_transparency, load_spec, serialize_spec
from .estimator import (
    DISCLAIMER,
    CodingPolicy,
    ImpedanceReading,
    SubjectProfile,
    estimate_composition,
    recommend_coding,
)
from .exceptions import BIAError, InputError
from .refit import (
    DEFAULT_COVARIATES,
    cross_validate,
    fit_least_squares,
    ingest_dataset,
    refit_without_sex,
)
from .sensitivity import coding_swing, gradient, propagate
from .store import HistoryStore, MeasurementRecord, default_home, trend_report
from .validation import DEFAULT_THRESHOLD_PERCENT, subgroup_disaggregate

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

_GENDER = {"male": "male", "female": "female", "x": "nonbinary_or_unspecified"}
_HORMONE = {
    "testosterone": "testosterone_dominant",
    "estrogen": "estrogen_dominant",
    "mixed": "mixed_or_unknown",
}


class UsageError(InputError):
    def __init__(self, message, usage):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def _policy(text):
    try:
        return CodingPolicy.parse(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_subject(p, *, policy=True):
    p.add_argument("--equation", default="kyle2001", help="equation id (default: kyle2001)")
    p.add_argument("--height-cm", type=float, required=True)
    p.add_argument("--weight-kg", type=float, required=True)
    p.add_argument("--resistance-ohm", type=float, required=True)
    p.add_argument("--reactance-ohm", type=float, required=True)
    p.add_argument("--age", type=float, default=None, help="years")
    p.add_argument("--athlete", action="store_true")
    p.add_argument(
        "--gender",
        choices=sorted(_GENDER),
        default="x",
        help="male, female, or x (nonbinary or prefer not to say; default)",
    )
    p.add_argument("--hormone-status", choices=sorted(_HORMONE), default=None)
    if policy:
        p.add_argument(
            "--policy",
            type=_policy,
            default=CodingPolicy.parse("as-entered"),
            metavar="{as-entered|force-male|force-female|interval|sex-free=<id>}",
        )


def build_parser():
    parser = _Parser(prog="openbia", description="Transparent bioimpedance body-composition estimates.")
    parser.add_argument("--version", action="version", version=f"openbia {__version__}")
    parser.add_argument(
        "--spec-file",
        action="append",
        default=[],
        metavar="PATH",
        help="load an extra equation spec (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate FFM, FM and BF%%")
    _add_subject(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("swing", help="change in estimate when the sex code flips")
    _add_subject(p, policy=False)

    p = sub.add_parser("gradient", help="sensitivity of FFM to each measured input")
    _add_subject(p, policy=False)
    p.add_argument("--sex-code", type=int, choices=(0, 1), default=1)

    p = sub.add_parser("propagate", help="FFM range under input measurement error")
    _add_subject(p, policy=False)
    p.add_argument("--sex-code", type=int, choices=(0, 1), default=1)
    for name in ("resistance", "reactance", "weight", "height"):
        p.add_argument(f"--delta-{name}", type=float, default=0.0)

    p = sub.add_parser("registry", help="inspect available equations")
    reg = p.add_subparsers(dest="registry_command", required=True, parser_class=_Parser)
    reg.add_parser("list")
    reg.add_parser("show").add_argument("equation_id")
    reg.add_parser("describe").add_argument("equation_id")

    p = sub.add_parser("fit", help="fit an equation to a reference CSV")
    p.add_argument("--csv", required=True, help="dataset path, or - for stdin")
    p.add_argument(
        "--covariates",
        default=",".join(DEFAULT_COVARIATES),
        help="comma-separated covariates (intercept always included)",
    )
    p.add_argument("--drop-sex", action="store_true", help="fit without the sex term")
    p.add_argument("--kfold", type=int, default=None, help="also report k-fold CV RMSE")
    p.add_argument("--id", dest="equation_id", default=None)
    p.add_argument("--output", default=None, help="write the fitted spec JSON here")
    p.add_argument("--description", default="")
    p.add_argument("--sex-provenance", default="", help="how the dataset recorded sex")
    p.add_argument("--reference-method", default="", help="gold standard used for ref_ffm_kg")

    p = sub.add_parser("validate", help="agreement of an equation with reference data")
    p.add_argument("--csv", required=True)
    p.add_argument("--equation", default="kyle2001")
    p.add_argument("--policy", type=_policy, default=CodingPolicy.parse("as-entered"))
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_PERCENT, help="MAPE threshold in %%")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("history", help="record measurements and report trends")
    hist = p.add_subparsers(dest="history_command", required=True, parser_class=_Parser)
    rec = hist.add_parser("record")
    rec.add_argument("--profile-id", required=True)
    rec.add_argument("--timestamp", type=float, default=None, help="UTC seconds (default: now)")
    _add_subject(rec)
    tr = hist.add_parser("trend")
    tr.add_argument("--profile-id", required=True)
    tr.add_argument("--since", type=float, default=None)
    tr.add_argument("--until", type=float, default=None)
    return parser


def _registry(args):
    registry = builtin_registry()
    spec_dir = default_home() / "equations"
    if spec_dir.is_dir():
        registry = registry.with_directory(spec_dir)
    if args.spec_file:
        registry = registry.with_specs(*(load_spec(p) for p in args.spec_file))
    return registry


def _subject(args):
    profile = SubjectProfile(
        height=args.height_cm,
        weight=args.weight_kg,
        age=args.age,
        athlete=args.athlete,
        gender_entry=_GENDER[args.gender],
        hormone_status=_HORMONE.get(args.hormone_status),
    )
    return profile, ImpedanceReading(args.resistance_ohm, args.reactance_ohm)


def _fmt_breakdown(b, indent=""):
    flags = f" flags: {', '.join(sorted(b.flags))}" if b.flags else ""
    return f"{indent}FFM {b.ffm_kg:.4f} kg, FM {b.fm_kg:.4f} kg, BF {b.bf_percent:.4f}%{flags}"


def render_estimate(est, profile):
    lines = [f"equation: {est.equation_id}", f"coding: {est.policy_used}"]
    if est.is_interval:
        iv = est.breakdown
        lines += [
            f"FFM interval: [{iv.low.ffm_kg:.4f}, {iv.high.ffm_kg:.4f}] kg (midpoint {iv.mid.ffm_kg:.4f})",
            f"FM interval: [{iv.high.fm_kg:.4f}, {iv.low.fm_kg:.4f}] kg (midpoint {iv.mid.fm_kg:.4f})",
            f"BF% interval: [{iv.high.bf_percent:.4f}, {iv.low.bf_percent:.4f}] (midpoint {iv.mid.bf_percent:.4f})",
        ]
        for name, b in (("low", iv.low), ("mid", iv.mid), ("high", iv.high)):
            if b.flags:
                lines.append(f"{name} flags: {', '.join(sorted(b.flags))}")
    else:
        lines.append(_fmt_breakdown(est.breakdown))
    if profile.hormone_status is not None:
        rec = recommend_coding(profile)
        lines.append(f"suggested coding: {rec.policy} ({rec.rationale})")
    if est.warnings:
        lines.append("warnings:")
        lines += [f"  - {w}" for w in est.warnings]
    lines.append(f"note: {DISCLAIMER}")
    return "\n".join(lines)


def _cmd_estimate(args, out):
    registry = _registry(args)
    profile, reading = _subject(args)
    est = estimate_composition(registry[args.equation], profile, reading, args.policy, registry)
    if args.json:
        doc = {**est.to_dict(), "disclaimer": DISCLAIMER}
        print(json.dumps(doc, indent=2), file=out)
    else:
        print(render_estimate(est, profile), file=out)


def _cmd_swing(args, out):
    registry = _registry(args)
    profile, reading = _subject(args)
    s = coding_swing(registry[args.equation], profile, reading, registry)
    print(f"equation: {args.equation}", file=out)
    print(_fmt_breakdown(s.male, "male coding:   "), file=out)
    print(_fmt_breakdown(s.female, "female coding: "), file=out)
    print(f"swing (male - female): FFM {s.delta_ffm_kg:+.4f} kg, BF {-s.delta_bf_pp:+.4f} pp", file=out)
    print(f"note: {DISCLAIMER}", file=out)


def _cmd_gradient(args, out):
    registry = _registry(args)
    profile, reading = _subject(args)
    g = gradient(registry[args.equation], profile, reading, args.sex_code, registry)
    print(f"equation: {args.equation}", file=out)
    units = {"resistance": "kg/ohm", "reactance": "kg/ohm", "weight": "kg/kg", "height": "kg/cm"}
    for key, value in g.as_dict().items():
        name = key.rsplit("_", 1)[-1]
        print(f"{key}: {value:.6g} {units[name]}", file=out)


def _cmd_propagate(args, out):
    registry = _registry(args)
    profile, reading = _subject(args)
    deltas = {
        name: getattr(args, f"delta_{name}")
        for name in ("resistance", "reactance", "weight", "height")
        if getattr(args, f"delta_{name}")
    }
    iv = propagate(registry[args.equation], profile, reading, deltas, args.sex_code, registry)
    print(f"equation: {args.equation}", file=out)
    print(
        f"FFM {iv.point:.4f} kg, range [{iv.low:.4f}, {iv.high:.4f}] "
        f"(-{iv.below:.4f} / +{iv.above:.4f})",
        file=out,
    )


def _cmd_registry(args, out):
    registry = _registry(args)
    if args.registry_command == "list":
        for eq_id in sorted(registry):
            spec = registry[eq_id]
            print(f"{eq_id}\t{spec.sex_scheme}\t{spec.formula()}", file=out)
    elif args.registry_command == "show":
        spec = registry[args.equation_id]
        print(spec.formula(), file=out)
        print(serialize_spec(spec), end="", file=out)
    else:
        print(describe_transparency(registry[args.equation_id]).render(), file=out)


def _read_csv(path, args):
    kwargs = dict(
        description=getattr(args, "description", ""),
        sex_provenance=getattr(args, "sex_provenance", ""),
        reference_method=getattr(args, "reference_method", ""),
    )
    if path == "-":
        return ingest_dataset(sys.stdin, **kwargs)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return ingest_dataset(fh, **kwargs)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _cmd_fit(args, out):
    dataset = _read_csv(args.csv, args)
    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    if args.drop_sex:
        fitted = refit_without_sex(dataset, covariates, args.equation_id)
        covariates = [c for c in covariates if c != "sex_offset"]
    else:
        fitted = fit_least_squares(dataset, covariates, args.equation_id)
    d = fitted.diagnostics
    print(f"equation: {fitted.spec.id} (sex scheme: {fitted.spec.sex_scheme})", file=out)
    print(fitted.spec.formula(), file=out)
    for name, coef in fitted.spec.terms:
        print(f"  {name}: {coef:.6g} (SE {d.std_errors[name]:.3g})", file=out)
    print(f"n: {d.n}  in-sample RMSE: {d.rmse_kg:.4f} kg  R^2: {d.r_squared:.4f}", file=out)
    if args.kfold:
        cv = cross_validate(dataset, covariates, args.kfold)
        folds = ", ".join(f"{r:.4f}" for r in cv.fold_rmse)
        print(f"{args.kfold}-fold CV RMSE: {cv.mean_rmse:.4f} kg (folds: {folds})", file=out)
    if args.output:
        Path(args.output).write_text(serialize_spec(fitted.spec), encoding="utf-8")
        print(f"wrote {args.output}", file=out)


def _cmd_validate(args, out):
    registry = _registry(args)
    dataset = _read_csv(args.csv, args)
    report = subgroup_disaggregate(
        dataset, registry[args.equation], args.policy, registry, args.threshold
    )
    if args.json:
        print(report.to_json(), end="", file=out)
    else:
        print(report.render(), file=out)


def _cmd_history(args, out):
    store = HistoryStore()
    if args.history_command == "record":
        registry = _registry(args)
        profile, reading = _subject(args)
        est = estimate_composition(registry[args.equation], profile, reading, args.policy, registry)
        ts = args.timestamp if args.timestamp is not None else time.time()
        store.append(args.profile_id, MeasurementRecord(ts, profile, reading, est))
        print(f"recorded {args.profile_id} at {ts}", file=out)
        print(render_estimate(est, profile), file=out)
    else:
        report = trend_report(store, args.profile_id, (args.since, args.until))
        print(report.render(), file=out)
        print(f"note: {DISCLAIMER}", file=out)


_COMMANDS = {
    "estimate": _cmd_estimate,
    "swing": _cmd_swing,
    "gradient": _cmd_gradient,
    "propagate": _cmd_propagate,
    "registry": _cmd_registry,
    "fit": _cmd_fit,
    "validate": _cmd_validate,
    "history": _cmd_history,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        try:
            with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
                args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return EXIT_OK if not exc.code else EXIT_INPUT
        _COMMANDS[args.command](args, out)
        return EXIT_OK
    except UsageError as exc:
        print(exc.usage, end="", file=err)
        print(f"openbia: error: {exc}", file=err)
        return EXIT_INPUT
    except BIAError as exc:
        print(f"openbia: error: {exc}", file=err)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"openbia: internal error: {type(exc).__name__}: {exc}", file=err)
        return EXIT_INTERNAL


def run_cli(argv):
    """Run the CLI in-process; returns ``(exit_code, stdout_text, stderr_text)``."""
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def entry_point():
    sys.exit(main())
