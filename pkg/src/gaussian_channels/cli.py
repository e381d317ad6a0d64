"""Command-line front end.

Every subcommand reads JSON documents (``-`` for standard input) and writes a
single JSON report to standard output. Exit codes:

    0  success / all verdicts true
    1  semantic failure (a verdict is false, invalid domain)
    2  input does not parse or fails its schema
    3  operation not supported for this input

The default algebraic tolerance can be set with ``GQC_TOL``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import convert, mastereq, oracle, schemas
from .core import (
    DEFAULT_TOL,
    AffineChannel,
    GaussianState,
    apply,
    classify,
    compose,
    cp_min_eigenvalue,
    is_unitary,
)
from .kernels import (
    FormI,
    FormII,
    GaussianForm,
    InvalidDomain,
    KernelSpec,
    SigmaCoefficients,
    cp_closed_form_margin,
    validate_hp,
    validate_tp,
)

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_UNSUPPORTED = 0, 1, 2, 3
TOL_ENV = "GQC_TOL"
ORACLE_TOL = 1e-6


class SchemaError(ValueError):
    pass


def default_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise SchemaError(f"{TOL_ENV}={raw!r} is not a number") from None
    if not tol > 0:
        raise SchemaError(f"{TOL_ENV} must be positive")
    return tol


# documents

def load_json(path: str, schema: dict):
    try:
        if path == "-":
            doc = json.load(sys.stdin)
        else:
            with open(path) as fh:
                doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{path}: {exc.message}") from None
    return doc


def _finite(values, where):
    if not all(math.isfinite(v) for v in values):
        raise SchemaError(f"{where}: numbers must be finite")


def kernel_from_doc(doc: dict) -> KernelSpec:
    coeffs = SigmaCoefficients.from_groups(**doc["coefficients"])
    _finite(coeffs.values(), "coefficients")
    delta = doc.get("delta", {})
    _finite(delta.values(), "delta")
    form = doc["form"]
    if form == "gaussian":
        return GaussianForm(coeffs)
    if form == "delta1":
        return FormI(coeffs, delta["alpha"], delta["beta"])
    return FormII(coeffs, delta["alpha"], delta["beta"], delta["gamma"], delta["eta"])


def kernel_to_doc(k: KernelSpec) -> dict:
    doc = {
        "form": {GaussianForm: "gaussian", FormI: "delta1", FormII: "delta2"}[type(k)],
        "coefficients": k.coeffs.groups(),
    }
    if isinstance(k, FormI):
        doc["delta"] = {"alpha": k.alpha, "beta": k.beta}
    elif isinstance(k, FormII):
        doc["delta"] = {"alpha": k.alpha, "beta": k.beta, "gamma": k.gamma, "eta": k.eta}
    return doc


def state_from_doc(doc: dict) -> GaussianState:
    _finite([v for row in doc["sigma"] for v in row] + list(doc.get("mean", [])), "state")
    try:
        return GaussianState(doc["sigma"], doc.get("mean", (0.0, 0.0)))
    except ValueError as exc:
        raise SchemaError(f"state: {exc}") from None


def state_to_doc(s: GaussianState) -> dict:
    return {"sigma": s.sigma.tolist(), "mean": s.mean.tolist()}


def affine_to_doc(ch: AffineChannel) -> dict:
    # adding 0.0 turns -0.0 into 0.0
    return {k: (v + 0.0).tolist() for k, v in (("T", ch.T), ("N", ch.N), ("tau", ch.tau))}


def trajectory_from_doc(doc: dict) -> mastereq.CoefficientTrajectory:
    kernels, times = [], []
    for sample in doc["samples"]:
        times.append(sample["t"])
        kernels.append(kernel_from_doc({"form": doc["form"], **{k: sample[k] for k in ("coefficients", "delta")}}))
    return mastereq.CoefficientTrajectory(times, kernels)


def _sign_note(k: KernelSpec) -> str | None:
    if isinstance(k, GaussianForm):
        return None
    return (
        f"delta-form tuple uses the {convert.SIGN_CONVENTION.value} sign convention "
        "(audited against the quadrature oracle)"
    )


# commands

def _affine_summary(k: KernelSpec, tol: float) -> dict:
    ch = convert.to_affine(k)
    out = {
        "class": classify(ch, tol).value,
        "kernel_class": convert.classify_kernel(k).value,
        "unitary": is_unitary(ch, tol),
        "affine": affine_to_doc(ch),
    }
    try:
        out["form_tag"] = convert.form_tag(k, tol).value
    except convert.Unsupported:
        out["form_tag"] = None
    note = _sign_note(k)
    if note:
        out["sign_convention"] = note
    return out


def cmd_validate(args) -> tuple[dict, int]:
    k = kernel_from_doc(load_json(args.file, schemas.CHANNEL))
    tol = args.tol
    hp = validate_hp(k)
    try:
        tp = validate_tp(k, tol)
    except InvalidDomain as exc:
        return {"error": str(exc), "verdicts": {"hp": hp.to_dict()}}, EXIT_FAIL
    report = {"verdicts": {"hp": hp.to_dict(), "tp": tp.to_dict()}}
    try:
        ch = convert.to_affine(k)
    except InvalidDomain as exc:
        report["verdicts"]["cp"] = {"passed": False, "residual": None, "tol": tol, "note": str(exc)}
        return report, EXIT_FAIL
    lam = cp_min_eigenvalue(ch)
    cp = {"passed": lam >= -tol, "residual": lam, "tol": tol}
    try:
        margin = cp_closed_form_margin(k)
        cp["closed_form"] = {"passed": margin >= -tol, "margin": margin}
    except InvalidDomain as exc:
        cp["closed_form"] = {"passed": None, "note": str(exc)}
    report["verdicts"]["cp"] = cp
    report.update(_affine_summary(k, tol))
    ok = hp.passed and tp.passed and cp["passed"]
    return report, EXIT_OK if ok else EXIT_FAIL


def cmd_classify(args):
    k = kernel_from_doc(load_json(args.file, schemas.CHANNEL))
    ch = convert.to_affine(k)
    kernel_cls = convert.classify_kernel(k)
    affine_cls = classify(ch, args.tol)
    report = {
        "kernel_class": kernel_cls.value,
        "class": affine_cls.value,
        "agree": kernel_cls is affine_cls,
        "unitary": is_unitary(ch, args.tol),
    }
    try:
        report["form_tag"] = convert.form_tag(k, args.tol).value
    except convert.Unsupported:
        report["form_tag"] = None
    return report, EXIT_OK if report["agree"] else EXIT_FAIL


def cmd_to_affine(args):
    k = kernel_from_doc(load_json(args.file, schemas.CHANNEL))
    return _affine_summary(k, args.tol), EXIT_OK


def cmd_apply(args):
    k = kernel_from_doc(load_json(args.channel, schemas.CHANNEL))
    s = state_from_doc(load_json(args.state, schemas.STATE))
    ch = convert.to_affine(k)
    out = apply(ch, s)
    return {
        "input": state_to_doc(s),
        "output": state_to_doc(out),
        "class": classify(ch, args.tol).value,
        "physical": out.is_physical(args.tol),
    }, EXIT_OK


def cmd_compose(args):
    ka = kernel_from_doc(load_json(args.file_a, schemas.CHANNEL))
    kb = kernel_from_doc(load_json(args.file_b, schemas.CHANNEL))
    ch = compose(convert.to_affine(ka), convert.to_affine(kb))
    report = {
        "order": "file_a after file_b",
        "affine": affine_to_doc(ch),
        "class": classify(ch, args.tol).value,
        "unitary": is_unitary(ch, args.tol),
    }
    try:
        ta, tb = convert.form_tag(ka, args.tol), convert.form_tag(kb, args.tol)
        report["tags"] = [ta.value, tb.value]
        report["tag"] = convert.compose_form(ta, tb).value
    except convert.Unsupported as exc:
        report["tag"] = None
        report["tag_note"] = str(exc)
    return report, EXIT_OK


def cmd_master_eq(args):
    traj = trajectory_from_doc(load_json(args.trajectory, schemas.TRAJECTORY))
    t = args.t if args.t is not None else float(traj.times[len(traj) // 2])
    exists = mastereq.existence_check(traj, args.tol)
    report = {"t": t, "existence": exists}
    if not exists:
        report["note"] = "c(t) is not proportional to A(t); no generator exists"
        return report, EXIT_FAIL
    L = mastereq.liouvillian(traj, t)
    report["liouvillian"] = L.to_dict()
    code = EXIT_OK
    if args.state:
        s = state_from_doc(load_json(args.state, schemas.STATE))
        rep = mastereq.verify_master_equation(traj, s, t, n=args.grid_n, tol=args.verify_tol)
        report["verification"] = rep.to_dict()
        code = EXIT_OK if rep.passed else EXIT_FAIL
    return report, code


def cmd_oracle_check(args):
    k = kernel_from_doc(load_json(args.channel, schemas.CHANNEL))
    s = state_from_doc(load_json(args.state, schemas.STATE))
    grid = oracle.PositionGrid(args.grid_n, args.grid_extent) if args.grid_extent else None
    if grid is None:
        grid = oracle.adaptive_grid(k, s, args.grid_n)
    rep = oracle.oracle_compare(k, s, grid)
    report = rep.to_dict()
    report["tol"] = args.oracle_tol
    report["passed"] = rep.max_deviation <= args.oracle_tol
    return report, EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_qbm_demo(args):
    p = mastereq.QbmParams(args.damping, args.frequency, args.amplitude)
    traj = mastereq.qbm_trajectory(p, args.duration, args.samples)
    scan = mastereq.singular_time_scan(traj, args.threshold)
    flagged = set(scan.times.tolist())
    rows = []
    for t, k in zip(traj.times, traj.kernels):
        ch = convert.to_affine(k)
        rows.append(
            {
                "t": float(t),
                "b2": k.coeffs.b2,
                "det_T": float(np.linalg.det(ch.T)),
                "envelope": float(mastereq.qbm_det_envelope(p, t)),
                "class": classify(ch, args.tol).value,
                "near_A2": float(t) in flagged,
            }
        )
    if args.format == "csv":
        lines = ["t,b2,det_T,envelope,class,near_A2"]
        lines += [
            f"{r['t']:.10g},{r['b2']:.17g},{r['det_T']:.17g},{r['envelope']:.17g},"
            f"{r['class']},{int(r['near_A2'])}"
            for r in rows
        ]
        return "\n".join(lines), EXIT_OK
    return {
        "params": {"damping": p.damping, "frequency": p.frequency, "amplitude": p.amplitude},
        "constants": mastereq.QBM_CONSTANTS,
        "construction": "synthetic: b3 chosen so that det T = amplitude frequency^2 exp(-damping t)",
        "series": rows,
        "b2_zeros": scan.divergent.tolist(),
        "scan": scan.to_dict(),
    }, EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gqc", description="One-mode Gaussian channels in the position representation."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--tol", type=float, default=None, help=f"algebraic tolerance (env {TOL_ENV})")
        return p

    p = add("validate", cmd_validate, "HP, TP and CP verdicts for a channel document")
    p.add_argument("file")
    p = add("classify", cmd_classify, "singularity class of a channel")
    p.add_argument("file")
    p = add("to-affine", cmd_to_affine, "affine (T, N, tau) tuple of a channel")
    p.add_argument("file")
    p = add("apply", cmd_apply, "push a Gaussian state through a channel")
    p.add_argument("channel")
    p.add_argument("state")
    p = add("compose", cmd_compose, "channel A applied after channel B")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p = add("master-eq", cmd_master_eq, "generator of a kernel trajectory")
    p.add_argument("trajectory")
    p.add_argument("--t", type=float, default=None, help="sample time (default: middle sample)")
    p.add_argument("--state", default=None, help="state document; runs the grid verification")
    p.add_argument("--grid-n", type=int, default=301)
    p.add_argument("--verify-tol", type=float, default=1e-3)
    p = add("oracle-check", cmd_oracle_check, "compare quadrature moments with the affine route")
    p.add_argument("channel")
    p.add_argument("state")
    p.add_argument("--grid-n", type=int, default=401)
    p.add_argument("--grid-extent", type=float, default=None, help="half-width L (default: adaptive)")
    p.add_argument("--oracle-tol", type=float, default=ORACLE_TOL)
    p = add("qbm-demo", cmd_qbm_demo, "damped-oscillator determinant time series")
    p.add_argument("--damping", type=float, default=1.0)
    p.add_argument("--frequency", type=float, default=2.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--threshold", type=float, default=1e-6)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.tol is None:
            args.tol = default_tol()
        report, code = args.func(args)
    except SchemaError as exc:
        report, code = {"error": str(exc), "kind": "schema"}, EXIT_SCHEMA
    except (convert.Unsupported, oracle.UnsupportedDelta) as exc:
        report, code = {"error": str(exc), "kind": "unsupported"}, EXIT_UNSUPPORTED
    except (InvalidDomain, oracle.NotNormalized, ValueError) as exc:
        report, code = {"error": str(exc), "kind": "semantic"}, EXIT_FAIL
    if isinstance(report, str):
        print(report)
    else:
        print(json.dumps(report, indent=2, default=_json_default))
    return code


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
