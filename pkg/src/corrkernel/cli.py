"""Command-line front end.

    corrkernel check        --spec FILE [--profile P]      exit 0 bounded, 1 unbounded, 2 out of scope
    corrkernel integrable   --spec FILE                    exit 0 iff the kernel is locally integrable
    corrkernel endpoint     --spec FILE [--profile P]      exit 0 iff eligible for an endpoint estimate
    corrkernel fold         --spec FILE --mode M [--out DIR] [--dump-system]
    corrkernel find-profile --spec FILE [--dump-system]
    corrkernel process      --state FILE [--greedy] [--max-steps K]
    corrkernel verify       --suite S [--spec FILE] [--seed N] [--samples N]
    corrkernel scan         --spec FILE --grid 'alpha[1][2]=0:1:11' [--rebalance r]

Malformed input exits 64 with the offending field; a resource cap exits 3.
Rationals are printed as "num/den" strings throughout.
"""
import argparse
import csv
import io
import json
import math
import os
import re
import sys
from fractions import Fraction
from pathlib import Path

from . import conditions as cond
from . import linsys, numeric, setfamily
from .kernel import (
    DEFAULT_MAX_M, KernelSpec, LebesgueProfile, PreconditionError, SpecError, dump_problem,
    fmt_mask, fmt_rational, load_problem, mask_from_one_based, parse_rational,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_SCOPE = 2
EXIT_RESOURCE = 3
EXIT_USAGE = 64

MAX_SAMPLES_ENV = "CORRKERNEL_MAX_SAMPLES"
DEFAULT_MAX_SAMPLES = 10 ** 7

SCAN_COLUMNS = ("parameter", "value", "verdict", "first_failure", "equality_b")
VERIFY_COLUMNS = ("instance", "method", "seed", "samples", "mean", "stderr", "diagnostics")


class UsageError(Exception):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


# -- I/O -----------------------------------------------------------------------------

def _read_json(path, what="spec"):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {what} file: {exc.strerror}", "$") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "$") from None


def _parse_profile_arg(text, m):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if len(items) != m:
        raise SpecError(f"expected {m} comma-separated exponents", "p")
    return LebesgueProfile.from_p(items)


def load_inputs(args, need_profile=False):
    if not args.spec:
        raise UsageError("--spec is required", "spec")
    doc = _read_json(args.spec)
    spec, profile = load_problem(doc, getattr(args, "max_m", DEFAULT_MAX_M))
    if getattr(args, "profile", None):
        profile = _parse_profile_arg(args.profile, spec.m)
    if need_profile and profile is None:
        raise SpecError("missing key (or pass --profile)", "p")
    return spec, profile


def emit(doc, fmt="json", out=None):
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(doc, indent=2) + "\n")
    elif fmt == "text":
        out.write(_as_text(doc) + "\n")
    else:
        raise UsageError(f"format {fmt!r} is not available for this command", "format")


def _as_text(doc, indent=0):
    pad = "  " * indent
    lines = []
    if isinstance(doc, dict):
        for k, v in doc.items():
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{pad}{k}:")
                lines.append(_as_text(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {json.dumps(v)}")
    elif isinstance(doc, list):
        for v in doc:
            if isinstance(v, (dict, list)):
                lines.append(f"{pad}-")
                lines.append(_as_text(v, indent + 1))
            else:
                lines.append(f"{pad}- {json.dumps(v)}")
    else:
        lines.append(f"{pad}{json.dumps(doc)}")
    return "\n".join(lines)


def emit_csv(columns, rows, out=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row.get(c, "") for c in columns])
    (out or sys.stdout).write(buf.getvalue())


# -- check / integrable / endpoint ---------------------------------------------------

def cmd_check(args):
    spec, profile = load_inputs(args, need_profile=True)
    report = cond.decide_boundedness(spec, profile)
    doc = {"input": dump_problem(spec, profile)}
    doc.update(report.to_json())
    emit(doc, args.format)
    return {cond.BOUNDED: EXIT_OK, cond.UNBOUNDED: EXIT_FAIL}.get(report.verdict, EXIT_SCOPE)


def cmd_integrable(args):
    spec, _ = load_inputs(args)
    viol = cond.check_integrability(spec)
    doc = {"input": spec.to_json(), "integrable": not viol,
           "violations": [{"J": fmt_mask(J), "slack": fmt_rational(cond.integrability_slack(spec, J))}
                          for J in viol]}
    emit(doc, args.format)
    return EXIT_OK if not viol else EXIT_FAIL


def cmd_endpoint(args):
    spec, profile = load_inputs(args, need_profile=True)
    try:
        res = cond.check_endpoint(spec, profile)
    except PreconditionError as exc:
        emit({"input": dump_problem(spec, profile), "status": "out_of_scope", "reason": str(exc)}, args.format)
        return EXIT_SCOPE
    doc = {"input": dump_problem(spec, profile)}
    doc.update(res.to_json())
    emit(doc, args.format)
    return EXIT_OK if res.status != cond.NOT_ELIGIBLE else EXIT_FAIL


# -- fold / find-profile ----------------------------------------------------------

def _systems_json(solved):
    return [{"system": s.to_json(), "outcome": linsys.outcome_to_json(s, o)} for s, o in solved]


def cmd_fold(args):
    spec, profile = load_inputs(args)
    solved = [] if args.dump_system else None
    try:
        results = linsys.distribute_and_fold(spec, profile, args.mode, solved=solved)
    except (PreconditionError, linsys.FoldError) as exc:
        sys.stderr.write(f"fold: {exc}\n")
        doc = {"input": dump_problem(spec, profile), "mode": args.mode, "error": str(exc)}
        if isinstance(exc, linsys.FoldError) and exc.system is not None:
            doc["system"] = exc.system.to_json()
            doc["outcome"] = linsys.outcome_to_json(exc.system, exc.outcome)
        emit(doc, args.format)
        return EXIT_FAIL
    docs = []
    for res in results:
        d = res.to_json()
        d["mode"] = args.mode
        docs.append(d)
    summary = {"input": dump_problem(spec, profile), "mode": args.mode, "count": len(docs)}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        width = max(2, len(str(len(docs))))
        names = []
        for k, d in enumerate(docs, 1):
            name = f"fold_{k:0{width}d}.json"
            (out / name).write_text(json.dumps(d, indent=2) + "\n")
            names.append(name)
        summary["files"] = names
    else:
        summary["reduced"] = docs
    if solved is not None:
        summary["systems"] = _systems_json(solved)
    emit(summary, args.format)
    return EXIT_OK


def cmd_find_profile(args):
    spec, _ = load_inputs(args)
    try:
        search = cond.search_admissible_profile(spec)
    except PreconditionError as exc:
        emit({"input": spec.to_json(), "profile": None, "reason": str(exc)}, args.format)
        return EXIT_FAIL
    doc = {"input": spec.to_json(), "blocks": [fmt_mask(B) for B in search.blocks]}
    if search.profile is not None:
        doc["profile"] = search.profile.p_strings()
        doc["r"] = [fmt_rational(x) for x in search.profile.r]
    else:
        doc["profile"] = None
        doc["reason"] = ("reducible kernel: every block is an equality subset"
                         if len(search.blocks) > 1 else "the strict profile system is infeasible")
    if len(search.blocks) == 1:
        system = cond.profile_system(spec)
        doc["outcome"] = linsys.outcome_to_json(system, search.outcome)
        if args.dump_system:
            doc["system"] = system.to_json()
    elif args.dump_system:
        doc["systems"] = [cond.profile_system(spec.restrict(B)).to_json()
                          for B in search.blocks if bin(B).count("1") > 1]
    emit(doc, args.format)
    return EXIT_OK if search.profile is not None else EXIT_FAIL


# -- process ---------------------------------------------------------------------

def _mask_field(doc, key, m):
    val = doc.get(key)
    if not isinstance(val, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in val):
        raise SpecError("expected a list of 1-based indices", key)
    return mask_from_one_based(val, m)


def load_state(doc):
    if not isinstance(doc, dict):
        raise SpecError("top level must be an object", "$")
    if "ground" not in doc:
        raise SpecError("missing key", "ground")
    ground_list = doc["ground"]
    if not isinstance(ground_list, list) or not ground_list:
        raise SpecError("expected a nonempty list of indices", "ground")
    m = max(ground_list) if all(isinstance(i, int) for i in ground_list) else 0
    ground = _mask_field(doc, "ground", m)
    theta = _mask_field(doc, "theta", m) if "theta" in doc else ground
    family = doc.get("family", setfamily.FM)
    if family not in setfamily.FAMILY_KINDS:
        raise SpecError(f"expected one of {setfamily.FAMILY_KINDS}", "family")
    drive = parse_rational(doc.get("drive", "1"), "drive")
    mu = {}
    for k, item in enumerate(doc.get("mu", [])):
        if not isinstance(item, dict) or "J" not in item or "w" not in item:
            raise SpecError("expected {\"J\": [...], \"w\": \"q\"}", f"mu[{k}]")
        J = _mask_field(item, "J", m)
        mu[J] = mu.get(J, Fraction(0)) + parse_rational(item["w"], f"mu[{k}].w")
    try:
        state = setfamily.MeasureState(ground, theta, family, mu, drive)
    except setfamily.MergeError as exc:
        raise SpecError(str(exc), "mu") from None
    steps = []
    for k, pair in enumerate(doc.get("steps", [])):
        if not isinstance(pair, list) or len(pair) != 2:
            raise SpecError("expected [[...], [...]]", f"steps[{k}]")
        steps.append((mask_from_one_based(pair[0], m), mask_from_one_based(pair[1], m)))
    return state, steps, m


def _objective(doc, state, m):
    obj = doc.get("objective")
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise SpecError("expected an object", "objective")
    c0 = parse_rational(obj.get("c0", "0"), "objective.c0")
    coeffs = obj.get("coefficients", "integrability")
    if isinstance(coeffs, list):
        table = {}
        for k, item in enumerate(coeffs):
            table[mask_from_one_based(item["J"], m)] = parse_rational(item["c"], f"objective.coefficients[{k}]")
        return setfamily.ObjectiveSpec(table, c0)
    spec, profile = load_problem(doc)
    if spec.m < m:
        raise SpecError(f"the kernel needs at least {m} points", "alpha")
    if coeffs == "integrability":
        return setfamily.integrability_objective(spec, state.ground, c0)
    if coeffs == "size":
        return setfamily.size_objective(spec, state.ground, c0)
    if coeffs == "min_form":
        if profile is None:
            raise SpecError("min_form coefficients need exponents", "p")
        return setfamily.min_form_objective(spec, profile, state.ground, c0)
    raise SpecError("expected 'integrability', 'size', 'min_form' or a table",
                    "objective.coefficients")


TRACE_COLUMNS = ("step", "J1", "J2", "omega", "lambda_min", "objective")


def cmd_process(args):
    doc = _read_json(args.state, "state")
    state, steps, m = load_state(doc)
    objective = _objective(doc, state, m)
    summary = {}
    if args.greedy:
        res = setfamily.greedy_maximize_omega(state, args.max_steps)
        steps = list(res.trace)
        summary = {"reached_stable": res.reached_stable, "steps": res.steps,
                   "omega": fmt_rational(res.omega_value),
                   "ceiling": fmt_rational(res.ceiling) if res.ceiling is not None else None,
                   "ceiling_reached": res.ceiling_reached}
    try:
        final, rows = setfamily.replay(state, steps, objective)
    except setfamily.MergeError as exc:
        sys.stderr.write(f"process: {exc}\n")
        return EXIT_FAIL
    summary.setdefault("stable", setfamily.is_stable(final))
    summary["omega_stable"] = setfamily.omega_stability_criterion(final)
    if args.format == "csv":
        emit_csv(TRACE_COLUMNS, [{k: (" ".join(map(str, v)) if isinstance(v, list) else
                                      ("" if v is None else v)) for k, v in r.items()} for r in rows])
    elif args.format == "text":
        sys.stdout.write(_trace_table(rows) + "\n")
    else:
        emit({"initial": state.to_json(), "trace": rows, "final": final.to_json(), "summary": summary})
    return EXIT_OK


def _trace_table(rows):
    cells = [list(TRACE_COLUMNS)]
    for r in rows:
        cells.append(["" if r[c] is None else
                      ("{" + ",".join(map(str, r[c])) + "}" if isinstance(r[c], list) else str(r[c]))
                      for c in TRACE_COLUMNS])
    widths = [max(len(row[k]) for row in cells) for k in range(len(TRACE_COLUMNS))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells)


# -- verify ---------------------------------------------------------------------

SUITES = ("selberg", "envelope", "homogeneity", "witness")
RADII = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


class ResourceCap(Exception):
    pass


def _sample_cap():
    raw = os.environ.get(MAX_SAMPLES_ENV)
    if not raw:
        return DEFAULT_MAX_SAMPLES
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{MAX_SAMPLES_ENV} must be an integer", MAX_SAMPLES_ENV) from None


def _budget(samples, runs=1):
    cap = _sample_cap()
    if samples * runs > cap:
        raise ResourceCap(f"{samples} x {runs} samples exceed the cap {cap} ({MAX_SAMPLES_ENV})")
    return samples


def _check(name, ok, **details):
    return {"name": name, "pass": bool(ok), "details": details}


def _csv_row(instance, est):
    row = {"instance": instance}
    row.update(est.to_row())
    row["diagnostics"] = json.dumps(est.diagnostics, sort_keys=True)
    return row


def suite_selberg(spec, seed, samples):
    spec = spec or KernelSpec.uniform(1, 3, Fraction(2, 5))
    if cond.check_integrability(spec):
        return [_check("selberg_integrable", False, reason="the kernel is not locally integrable")], []
    _budget(samples, 3)
    a = numeric.mc_selberg_ball(spec, samples, seed)
    b = numeric.mc_selberg_ball(spec, samples, seed + 1)
    u = numeric.mc_selberg_ball(spec, samples, seed + 2, method=numeric.UNIFORM)
    checks = [_check("independent_runs_agree", a.agrees(b), a=a.mean, b=b.mean,
                     sigma=math.hypot(a.stderr, b.stderr)),
              _check("uniform_matches_importance", u.agrees(a), uniform=u.mean, importance=a.mean)]
    rows = [_csv_row("selberg/a", a), _csv_row("selberg/b", b), _csv_row("selberg/uniform", u)]
    if spec.n == 1 and spec.m in (2, 3):
        q = numeric.selberg_quadrature_1d(spec)
        checks.append(_check("matches_quadrature", a.agrees(q) and b.agrees(q), quadrature=q))
    return checks, rows


def suite_envelope(spec, seed, samples, configs=100):
    import numpy as np
    if spec is not None:
        last = spec.m - 1
        alphas = [spec.alpha[i][last] for i in range(last)]
        n = spec.n
    else:
        n, alphas = 1, [Fraction(1, 2)] * 3
    method = numeric.QUADRATURE_1D if n == 1 else numeric.IMPORTANCE
    if method == numeric.IMPORTANCE:
        _budget(samples, 2 * configs * (len(alphas) + 1))
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(configs):
        pts = rng.random((len(alphas), n))
        total = numeric.riesz_composition(n, alphas, pts, method, samples, seed).mean
        env = sum(numeric.envelope_L(n, alphas, pts, method, samples, seed))
        ratios.append(total / env)
    finite = all(math.isfinite(r) and r > 0 for r in ratios)
    spread = max(ratios) / min(ratios) if finite else math.inf
    return [_check("envelope_ratio_stable", finite and spread < 2, fitted_C=max(ratios),
                   min_ratio=min(ratios), spread=spread, configs=configs,
                   alphas=[fmt_rational(a) for a in alphas])], []


def suite_homogeneity(spec, profile, seed, samples):
    if spec is None or profile is None:
        spec = KernelSpec.uniform(1, 3, Fraction(1, 2))
        profile = LebesgueProfile([Fraction(1, 2)] * 3)
    _budget(samples, 7)
    fit = numeric.homogeneity_ratio_test(spec, profile, n_samples=samples, seed=seed)
    f1 = numeric.weak_power_integral(spec, profile, 1.0, samples, seed + 1)
    fq = numeric.weak_power_integral(spec, profile, 1.0, samples // 4, seed + 2)
    finite = math.isfinite(f1.mean) and f1.rel_err < 0.05 and f1.agrees(fq)
    # a finite-variance estimator halves its error when the sample count quadruples
    se_ratio = fq.stderr / f1.stderr if f1.stderr else math.inf
    rows = [_csv_row(f"homogeneity/|x1|={s}", e) for s, e in zip(fit.norms, fit.estimates)]
    return [_check("slope_matches", fit.within_error, slope=fit.slope, predicted=fit.predicted_slope,
                   stderr=fit.slope_stderr),
            _check("F1_finite", finite, mean=f1.mean, stderr=f1.stderr),
            _check("stderr_scaling", 1.5 < se_ratio < 2.7, ratio=se_ratio)], rows


def suite_witness(spec, profile, seed, samples):
    spec = spec or KernelSpec.uniform(1, 2, Fraction(1))
    _budget(samples)
    if cond.check_integrability(spec):
        rep = numeric.divergence_diagnostic(spec, RADII, samples, seed)
    elif profile is not None and profile.is_interior() and numeric.weak_deficit(spec, profile) >= 0:
        rep = numeric.weak_power_divergence(spec, profile, RADII, samples, seed)
    else:
        return [_check("divergence_confirmed", False, reason="no divergent integral for this input")], []
    return [_check("divergence_confirmed", rep.verdict == numeric.DIVERGES, **rep.to_json())], []


def cmd_verify(args):
    spec = profile = None
    if args.spec:
        spec, profile = load_inputs(args)
    suites = SUITES if args.suite == "all" else (args.suite,)
    results, rows = [], []
    try:
        for s in suites:
            if s == "selberg":
                c, r = suite_selberg(spec, args.seed, args.samples)
            elif s == "envelope":
                c, r = suite_envelope(spec, args.seed, min(args.samples, 50_000))
            elif s == "homogeneity":
                c, r = suite_homogeneity(spec, profile, args.seed, args.samples)
            else:
                c, r = suite_witness(spec, profile, args.seed, args.samples)
            results.append({"suite": s, "checks": c, "pass": all(x["pass"] for x in c)})
            rows.extend(r)
    except ResourceCap as exc:
        sys.stderr.write(f"verify: {exc}\n")
        return EXIT_RESOURCE
    except PreconditionError as exc:
        results.append({"suite": s, "checks": [_check("preconditions", False, reason=str(exc))], "pass": False})
    ok = all(r["pass"] for r in results)
    if args.format == "csv":
        emit_csv(VERIFY_COLUMNS, rows)
    else:
        emit({"seed": args.seed, "samples": args.samples, "suites": results, "pass": ok}, args.format)
    return EXIT_OK if ok else EXIT_FAIL


# -- scan ------------------------------------------------------------------------

_GRID = re.compile(r"^\s*(alpha\[(\d+)\]\[(\d+)\]|r\[(\d+)\])\s*=\s*([^:]+):([^:]+):(\d+)\s*$")


def parse_grid(text, m):
    g = _GRID.match(text or "")
    if not g:
        if text and re.match(r"^\s*(n|m)\s*=", text):
            raise SpecError("the dimension and point count are structural and cannot be swept", "grid")
        raise SpecError("expected alpha[i][j]=start:stop:steps or r[i]=start:stop:steps", "grid")
    start = parse_rational(g.group(5).strip(), "grid")
    stop = parse_rational(g.group(6).strip(), "grid")
    steps = int(g.group(7))
    if steps < 2:
        raise SpecError("need at least two grid points", "grid")
    if g.group(2):
        i, j = int(g.group(2)), int(g.group(3))
        if not (1 <= i <= m and 1 <= j <= m):
            raise SpecError(f"index out of range 1..{m}", "grid")
        if i == j:
            raise SpecError("diagonal exponents are fixed at 0", "grid")
        target = ("alpha", i - 1, j - 1)
    else:
        i = int(g.group(4))
        if not 1 <= i <= m:
            raise SpecError(f"index out of range 1..{m}", "grid")
        target = ("r", i - 1)
    values = [start + (stop - start) * k / (steps - 1) for k in range(steps)]
    return target, values


def _grid_point(spec, profile, target, value, rebalance):
    a = [list(row) for row in spec.alpha]
    r = list(profile.r)
    if target[0] == "alpha":
        _, i, j = target
        a[i][j] = a[j][i] = value
    else:
        r[target[1]] = value
    if rebalance == "r":
        m, n = len(r), spec.n
        total = sum(a[i][j] for i in range(m) for j in range(i + 1, m))
        gap = m - total / n - sum(r)
        free = [k for k in range(m) if target[0] != "r" or k != target[1]]
        for k in free:
            r[k] += gap / len(free)
    return KernelSpec(spec.n, a), r


def cmd_scan(args):
    spec, profile = load_inputs(args, need_profile=True)
    target, values = parse_grid(args.grid, spec.m)
    name = args.grid.split("=")[0].strip()
    rows = []
    verdicts = []
    for v in values:
        try:
            s2, r = _grid_point(spec, profile, target, v, args.rebalance)
        except SpecError as exc:
            rows.append({"parameter": name, "value": fmt_rational(v), "verdict": "invalid",
                         "first_failure": str(exc), "equality_b": ""})
            verdicts.append("invalid")
            continue
        if not all(0 <= x <= 1 for x in r):
            rows.append({"parameter": name, "value": fmt_rational(v), "verdict": "invalid",
                         "first_failure": "exponent outside [1, inf]", "equality_b": ""})
            verdicts.append("invalid")
            continue
        rep = cond.decide_boundedness(s2, LebesgueProfile(r))
        eq = [fmt_mask(I) for I, res in sorted(rep.iii_results.items()) if res.kind == cond.EQUALITY_B]
        rows.append({"parameter": name, "value": fmt_rational(v), "verdict": rep.verdict,
                     "first_failure": rep.first_failure,
                     "equality_b": ";".join("{" + ",".join(map(str, J)) + "}" for J in eq)})
        verdicts.append(rep.verdict)
    transitions = sum(1 for a, b in zip(verdicts, verdicts[1:]) if a != b)
    if args.format == "csv":
        emit_csv(SCAN_COLUMNS, rows)
    else:
        emit({"grid": args.grid, "rebalance": args.rebalance, "rows": rows, "transitions": transitions},
             args.format)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags, which would read as "out of scope"
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="corrkernel", description="Boundedness of multilinear fractional integrals.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt=("json", "text")):
        sp.add_argument("--spec", help="JSON file with n, alpha and optionally p")
        sp.add_argument("--profile", help="comma-separated exponents p_i (rationals or inf)")
        sp.add_argument("--format", choices=fmt, default=fmt[0])
        sp.add_argument("--max-m", type=int, default=DEFAULT_MAX_M, dest="max_m")

    sp = sub.add_parser("check", help="three-condition verdict")
    common(sp)
    sp.set_defaults(func=cmd_check)
    sp = sub.add_parser("integrable", help="local integrability of the kernel")
    common(sp)
    sp.set_defaults(func=cmd_integrable)
    sp = sub.add_parser("endpoint", help="eligibility for p = 1 / p = inf endpoint estimates")
    common(sp)
    sp.set_defaults(func=cmd_endpoint)
    sp = sub.add_parser("fold", help="eliminate the last point")
    common(sp)
    sp.add_argument("--mode", choices=linsys.MODES, default=linsys.INTEGRABILITY)
    sp.add_argument("--out", help="directory for one JSON file per reduced kernel")
    sp.add_argument("--dump-system", action="store_true", dest="dump_system")
    sp.set_defaults(func=cmd_fold)
    sp = sub.add_parser("find-profile", help="search an admissible interior profile")
    common(sp)
    sp.add_argument("--dump-system", action="store_true", dest="dump_system")
    sp.set_defaults(func=cmd_find_profile)
    sp = sub.add_parser("process", help="replay a merge process on a weighted set family")
    sp.add_argument("--state", required=True)
    sp.add_argument("--greedy", action="store_true")
    sp.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    sp.add_argument("--format", choices=("json", "text", "csv"), default="json")
    sp.set_defaults(func=cmd_process)
    sp = sub.add_parser("verify", help="numerical verification suites")
    common(sp, ("json", "text", "csv"))
    sp.add_argument("--suite", choices=SUITES + ("all",), default="all")
    sp.add_argument("--seed", type=int, default=numeric.DEFAULT_SEED)
    sp.add_argument("--samples", type=int, default=200_000)
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("scan", help="verdicts along a one-parameter sweep")
    common(sp, ("csv", "json", "text"))
    sp.add_argument("--grid", required=True)
    sp.add_argument("--rebalance", choices=("none", "r"), default="none")
    sp.set_defaults(func=cmd_scan)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, UsageError) as exc:
        where = getattr(exc, "field", None) or "$"
        msg = str(exc)
        if isinstance(exc, SpecError) and exc.field and msg.startswith(f"{exc.field}: "):
            msg = msg[len(exc.field) + 2:]
        sys.stderr.write(f"error at {where}: {msg}\n")
        return EXIT_USAGE
    except linsys.ResourceError as exc:
        sys.stderr.write(f"resource limit: {exc}\n")
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
