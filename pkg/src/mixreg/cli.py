"""Command-line front end: parse an experiment config, run it, write reports.

Usage::

    python -m mixreg solve --config torsion.yaml --out results/
    python -m mixreg regularity --config mixed.yaml --grid-h 0.0078125

Every run writes ``summary.json`` and ``MANIFEST.json`` next to the
subcommand's own CSV and JSON files. Outputs contain no timestamps, so a
re-run of the same config reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import operators
from .errors import ConfigError, MixregError
from .geometry import Domain, ball, ellipse, star

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COMMANDS = ("solve", "regularity", "barriers", "serrin", "check-kernel")
OUTPUT_ENV = "MIXREG_OUTPUT_DIR"

#: Defaults for every section. Keys not listed here are rejected.
DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "domain": {"shape": "ball", "radius": 1.0, "center": None, "semi_axes": None,
               "r0": 1.0, "coeffs": None, "n": 2},
    "kernel": {"family": "fractional", "alpha": 1.5, "Lambda": 1.0, "truncation": None,
               "mu1": None, "mu2": None, "beta_prime": None, "zeta": None, "base": None},
    "operator": {"a": 0.0, "A0": 1.0, "C0": 0.0},
    "problem": {"type": "linear", "f": -1.0, "H": None, "controls": None},
    "grid": {"h": 1 / 64},
    "kappa": 0.05,
    "diagnostics": {"regularity": False, "barriers": False, "overdetermined": False},
    "regularity": {"x0": None, "rho1": None, "levels": 5, "ratio": 2.0,
                   "harnack_radii": None, "alpha_hat": None},
    "barriers": {"radii": [0.25, 0.5, 1.0], "q": 2.0, "psi_r": 0.25, "theta": 0.5, "zeta": 0.5},
    "serrin": {"samples": 64, "directions": [[1.0, 0.0]], "scan_tol": 1e-3},
    "tolerances": {"normal_dev": 0.02, "harnack_ratio": 2.0, "fit_r2": 0.9,
                   "solve": 1e-10},
    "output": {"dir": None},
    "seed": 0,
}
REQUIRED_SECTIONS = ("domain", "kernel")


@dataclass
class ExperimentConfig:
    """Validated experiment description with every default filled in."""

    data: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def h(self) -> float:
        return float(self.data["grid"]["h"])

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


# ---------------------------------------------------------------------------
# parsing and validation


def _merge(defaults: dict, given: dict, path: str, errors: list) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            errors.append(f"unknown key '{where}'")
            continue
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                errors.append(f"'{where}' must be a mapping")
                continue
            out[key] = _merge(defaults[key], val, where, errors)
        else:
            out[key] = val
    return out


def _num(errors, where, val, lo=None, hi=None, lo_open=False, hi_open=False, allow_none=False):
    if val is None and allow_none:
        return
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        errors.append(f"{where} must be a finite number")
        return
    bad = ((lo is not None and (val < lo or (lo_open and val == lo)))
           or (hi is not None and (val > hi or (hi_open and val == hi))))
    if bad:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        rng = f"{lb}{'-inf' if lo is None else _fmt(lo)},{'inf' if hi is None else _fmt(hi)}{rb}"
        errors.append(f"{where} must lie in {rng}")


def _fmt(x):
    if x == 1 / 16:
        return "1/16"
    return f"{x:g}"


def _validate(d: dict, errors: list):
    dom = d["domain"]
    if dom["shape"] not in ("ball", "ellipse", "star"):
        errors.append("domain.shape must be one of ball, ellipse, star")
    if dom["shape"] == "ellipse" and dom["semi_axes"] is None:
        errors.append("domain.semi_axes is required for an ellipse")
    _num(errors, "domain.radius", dom["radius"], 0, None, lo_open=True)
    if dom["n"] not in (1, 2):
        errors.append("domain.n must be 1 or 2")

    ker = d["kernel"]
    fam = ker["family"]
    if fam not in ("fractional", "subordinate", "modified"):
        errors.append("kernel.family must be one of fractional, subordinate, modified")
    if fam in ("fractional", "modified"):
        _num(errors, "alpha", ker["alpha"], 0, 2, True, True)
        _num(errors, "kernel.Lambda", ker["Lambda"], 0, None, lo_open=True)
        _num(errors, "kernel.truncation", ker["truncation"], 0, None, lo_open=True, allow_none=True)
    if fam == "subordinate":
        _num(errors, "kernel.mu1", ker["mu1"], 0, 1, True, True)
        _num(errors, "kernel.mu2", ker["mu2"], 0, 1, True, True)
    if fam == "modified":
        _num(errors, "kernel.beta_prime", ker["beta_prime"], 0, None, lo_open=True)
        _num(errors, "kernel.zeta", ker["zeta"], 0, 1, True, True)

    op = d["operator"]
    _num(errors, "operator.A0", op["A0"], 0, None)
    a0 = op["A0"] if isinstance(op["A0"], (int, float)) else math.inf
    _num(errors, "a", op["a"], 0, a0)
    _num(errors, "operator.C0", op["C0"], 0, None)

    prob = d["problem"]
    if prob["type"] not in ("linear", "semilinear", "hjb", "serrin"):
        errors.append("problem.type must be one of linear, semilinear, hjb, serrin")
    if prob["type"] == "hjb" and not prob["controls"]:
        errors.append("problem.controls is required for hjb problems")
    _num(errors, "h", d["grid"]["h"], 0, 1, lo_open=True)
    _num(errors, "kappa", d["kappa"], 0, 1 / 16, True, True)
    if not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
        errors.append("seed must be an integer")
    if d["schema_version"] != SCHEMA_VERSION:
        errors.append(f"schema_version must be {SCHEMA_VERSION}")
    reg = d["regularity"]
    if not isinstance(reg["levels"], int) or reg["levels"] < 2:
        errors.append("regularity.levels must be an integer >= 2")
    _num(errors, "regularity.ratio", reg["ratio"], 1, None, lo_open=True)


def parse_config(text: str | dict) -> ExperimentConfig:
    """Parse and validate a YAML document (or an already-loaded mapping).

    Raises
    ------
    ConfigError
        Listing every problem found.
    """
    if isinstance(text, dict):
        raw = copy.deepcopy(text)
    else:
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([f"malformed document: {exc}"]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping at the top level"])
    errors = [f"missing section '{s}'" for s in REQUIRED_SECTIONS if s not in raw]
    data = _merge(DEFAULTS, raw, "", errors)
    try:
        _validate(data, errors)
    except (TypeError, ValueError) as exc:
        errors.append(f"malformed value: {exc}")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(data)


def render(config: ExperimentConfig) -> str:
    """YAML text that :func:`parse_config` maps back to ``config``."""
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)


# ---------------------------------------------------------------------------
# building objects from a config


def build_domain(spec: dict) -> Domain:
    shape = spec["shape"]
    center = spec["center"]
    if shape == "ball":
        return ball(spec["radius"], center, spec["n"])
    if shape == "ellipse":
        a, b = spec["semi_axes"]
        return ellipse(a, b, center or (0.0, 0.0))
    return star(spec["r0"], spec["coeffs"] or {}, center or (0.0, 0.0))


def build_kernel(spec: dict, n: int):
    from .kernels import make_fractional, make_subordinate, modified_kernel
    fam = spec["family"]
    if fam == "subordinate":
        return make_subordinate(spec["mu1"], spec["mu2"], n)
    k = make_fractional(spec["alpha"], spec["Lambda"], spec["truncation"], n)
    if fam == "modified":
        return modified_kernel(k, spec["beta_prime"], spec["zeta"])
    return k


def _source(spec):
    """``f(u)`` from a number or ``{intercept, slope}``."""
    if isinstance(spec, dict):
        c0, c1 = float(spec.get("intercept", 0.0)), float(spec.get("slope", 0.0))
        return lambda u: c0 + c1 * np.asarray(u)
    return float(spec)


def _gradient_term(spec):
    """``H(s) = coef * s^power`` from ``{coef, power}``."""
    if spec is None:
        return None
    c, p = float(spec.get("coef", 0.0)), float(spec.get("power", 1.0))
    return lambda s: c * np.asarray(s) ** p


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    """Stable JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class OutputDir:
    """Collects written files and their hashes for the manifest."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.path / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj):
        self.write(name, dumps(obj if "schema_version" in obj else {"schema_version": SCHEMA_VERSION, **obj}))

    def manifest(self, state: str, error: str | None = None):
        body = {"schema_version": SCHEMA_VERSION, "state": state, "error": error,
                "files": dict(sorted(self.files.items()))}
        (self.path / "MANIFEST.json").write_bytes(dumps(body).encode("utf-8"))


def _flag(ok: bool) -> str:
    return "pass" if ok else "fail"


# ---------------------------------------------------------------------------
# pipelines


def _solve(cfg: ExperimentConfig, domain, kernel):
    from .solver import assemble, solve_hjb, solve_linear, solve_semilinear
    op, prob = cfg["operator"], cfg["problem"]
    A = assemble(domain, kernel, op["a"], cfg.h, op["C0"], A0=op["A0"])
    tol = cfg["tolerances"]["solve"]
    if prob["type"] == "linear" or (prob["type"] == "serrin" and prob["H"] is None):
        return solve_linear(A, _source(prob["f"]), tol=tol)
    if prob["type"] in ("semilinear", "serrin"):
        return solve_semilinear(A, _gradient_term(prob["H"]), _source(prob["f"]))
    controls = [[(c["b"], c["f"]) for c in row] for row in prob["controls"]]
    return solve_hjb(A, controls)


def _center_value(u, domain) -> float:
    return float(u.interpolate(np.asarray(domain.center, dtype=float)[None])[0])


def run_solve(cfg, domain, kernel, out: OutputDir, summary: dict):
    from .overdetermined import normal_derivative
    rep = _solve(cfg, domain, kernel)
    out.write("solution.csv", rep.solution_csv())
    out.json("solve.json", rep.to_dict())
    _, _, tr, _ = normal_derivative(rep.solution, domain, cfg["serrin"]["samples"])
    mean = float(tr.mean())
    dev = float(np.max(np.abs(tr - mean)) / abs(mean)) if mean else math.inf
    summary.update({"u0": _center_value(rep.solution, domain), "residual": rep.residual,
                    "normal_derivative_mean": mean, "normal_dev": dev})
    summary["flags"]["solve_converged"] = _flag(rep.residual <= 1e-6)
    summary["flags"]["serrin_constancy"] = _flag(dev <= cfg["tolerances"]["normal_dev"])
    if rep.certificate is not None and rep.certificate.applicable:
        summary["flags"]["max_principle"] = _flag(rep.certificate.passed)
    return rep


def run_regularity(cfg, domain, kernel, out: OutputDir, summary: dict):
    from .regularity import regularity_suite
    rep = run_solve(cfg, domain, kernel, out, summary)
    rc = cfg["regularity"]
    kw = {"x0": rc["x0"], "rho1": rc["rho1"], "levels": rc["levels"], "ratio": rc["ratio"],
          "harnack_radii": rc["harnack_radii"], "kappa": cfg["kappa"]}
    if rc["alpha_hat"] is not None:
        kw["alpha_hat"] = rc["alpha_hat"]
    elif kernel is not None:
        kw["alpha_hat"] = max(2 - kernel.alpha, 0.5) if kernel.alpha >= 1 else 0.5
    reg = regularity_suite(rep.solution, domain, **kw)
    out.json("regularity.json", reg.to_dict())
    out.write("oscillation.csv", reg.oscillation_csv())
    out.write("harnack.csv", reg.harnack.to_csv())
    tol = cfg["tolerances"]
    summary.update({"tau_fit": reg.tau_fit, "tau_r2": reg.oscillation.fit.r2,
                    "kappa_fit": reg.kappa_fit, "gamma_fit": reg.gamma_fit,
                    "gamma_r2": reg.gamma.fit.r2, "harnack_max_ratio": reg.harnack.max_ratio,
                    "gradient_scaling_exponent": reg.scaling.exponent,
                    "lipschitz_estimate": reg.lipschitz_estimate})
    f = summary["flags"]
    f["tau_positive"] = _flag(reg.tau_fit > 0 and reg.oscillation.fit.r2 >= tol["fit_r2"])
    f["kappa_positive"] = _flag(reg.kappa_fit > 0)
    f["gamma_positive"] = _flag(reg.gamma_fit > 0)
    f["harnack_bounded"] = _flag(reg.harnack.max_ratio <= tol["harnack_ratio"])
    f["oscillation_monotone"] = _flag(reg.oscillation.monotone)
    f["gradient_scaling_consistent"] = _flag(reg.scaling.exponent >= reg.kappa_fit - 1 - 0.1)


def run_barriers(cfg, domain, kernel, out: OutputDir, summary: dict):
    from .barriers import build_exp_barrier, build_psi_barrier, log_inequality_check, verify_supersolution
    bc, op = cfg["barriers"], cfg["operator"]
    a = op["a"] if op["a"] > 0 else op["A0"]
    reports = {}
    ok = True
    for r in bc["radii"]:
        b = build_exp_barrier(float(r), domain.n, op["A0"], kernel)
        rep = verify_supersolution(b, kernel, a)
        reports[f"exp_r{r}"] = rep.to_dict()
        ok &= rep.passed
    summary["flags"]["exp_barrier"] = _flag(ok)
    psi = build_psi_barrier(float(bc["q"]), kernel.dominating, collar_gamma=domain.rho / 2)
    x0 = domain.boundary_points(1)[0]
    prep = verify_supersolution(psi, kernel, a, domain, x0=x0, r=float(bc["psi_r"]))
    reports["psi"] = prep.to_dict()
    summary["flags"]["psi_barrier"] = _flag(prep.passed)
    lrep = log_inequality_check(float(bc["theta"]), float(bc["zeta"]))
    reports["log_inequality"] = lrep.to_dict()
    summary["flags"]["log_inequality"] = _flag(not lrep.violations)
    summary.update({"psi_sigma1": psi.sigma1, "psi_s_q": psi.s_q, "r_theta": lrep.r_theta})
    out.json("barriers.json", reports)


def run_serrin(cfg, domain, kernel, out: OutputDir, summary: dict):
    from .overdetermined import moving_plane_scan, serrin_solve, symmetry_report
    op, prob, sc = cfg["operator"], cfg["problem"], cfg["serrin"]
    res = serrin_solve(domain, kernel if op["a"] > 0 else None, op["a"],
                       _gradient_term(prob["H"]), _source(prob["f"]), cfg.h,
                       cfg["tolerances"]["solve"], sc["samples"], op["A0"])
    out.write("solution.csv", res.report.solution_csv())
    out.write("normal_trace.csv", res.trace_csv())
    out.json("serrin.json", res.to_dict())
    scans = {}
    for i, e in enumerate(sc["directions"]):
        scan = moving_plane_scan(res.solution, domain, e, tol=sc["scan_tol"])
        out.write(f"scan_{i}.csv", scan.to_csv())
        scans[f"scan_{i}"] = dict(scan.to_dict(), direction=list(e))
    out.json("moving_plane.json", scans)
    sym = symmetry_report(res.solution, domain, res)
    out.json("symmetry.json", sym.to_dict())
    summary.update({"normal_dev": res.rel_deviation, "normal_derivative_mean": res.mean,
                    "u0": _center_value(res.solution, domain),
                    "angular_deviation": sym.angular_deviation,
                    "monotonicity_violations": sym.monotonicity_violations,
                    "lambda0": [scans[k]["lambda0"] for k in sorted(scans)]})
    summary["flags"]["serrin_constancy"] = _flag(res.rel_deviation <= cfg["tolerances"]["normal_dev"])
    summary["flags"]["moving_plane_nonnegative"] = _flag(all(s["nonnegative"] for s in scans.values()))


def run_check_kernel(cfg, domain, kernel, out: OutputDir, summary: dict):
    from .kernels import check_assumption, theta
    rep = check_assumption(kernel, seed=cfg["seed"])
    xi = [0.01, 0.1, 0.5, 1.0]
    body = {"kernel": kernel.to_dict(), "assumption": rep.to_dict(),
            "theta": {str(x): theta(kernel.dominating, x) for x in xi}}
    out.json("kernel.json", body)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["xi", "theta"])
    for x in xi:
        w.writerow([repr(x), repr(float(theta(kernel.dominating, x)))])
    out.write("theta.csv", buf.getvalue())
    summary.update({"max_ratio_a": rep.max_ratio_a, "violations": rep.violations_a})
    summary["flags"]["domination"] = _flag(rep.violations_a == 0)


PIPELINES = {"solve": run_solve, "regularity": run_regularity, "barriers": run_barriers,
             "serrin": run_serrin, "check-kernel": run_check_kernel}


def output_dir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    """``--out`` first, then the environment override, then the config."""
    for cand in (override, os.environ.get(OUTPUT_ENV), cfg["output"]["dir"]):
        if cand:
            return Path(cand)
    return Path("mixreg-out")


def run(cfg: ExperimentConfig, command: str = "solve", out_dir: str | Path | None = None,
        workers: int = 1) -> int:
    """Execute ``command`` for ``cfg``; returns the process exit status.

    Failures leave the files written so far plus a manifest recording the
    error.
    """
    if command not in PIPELINES:
        raise ConfigError([f"unknown command '{command}'"])
    operators.FFT_WORKERS = max(1, int(workers))
    out = OutputDir(output_dir(cfg, None if out_dir is None else str(out_dir)))
    out.write("config.yaml", render(cfg))
    summary = {"schema_version": SCHEMA_VERSION, "command": command, "flags": {},
               "config_sha256": hashlib.sha256(render(cfg).encode()).hexdigest()}
    try:
        np.random.seed(cfg["seed"])
        domain = build_domain(cfg["domain"])
        kernel = build_kernel(cfg["kernel"], domain.n)
        if command == "solve" and cfg["problem"]["type"] == "serrin":
            command = "serrin"
        PIPELINES[command](cfg, domain, kernel, out, summary)
        if command == "solve":
            d = cfg["diagnostics"]
            if d["regularity"]:
                run_regularity(cfg, domain, kernel, out, summary)
            if d["barriers"]:
                run_barriers(cfg, domain, kernel, out, summary)
            if d["overdetermined"]:
                run_serrin(cfg, domain, kernel, out, summary)
    except (MixregError, ValueError, MemoryError, ArithmeticError) as exc:
        log.error("%s failed: %s", command, exc)
        summary["error"] = f"{type(exc).__name__}: {exc}"
        out.json("summary.json", summary)
        out.manifest("failed", summary["error"])
        return 1
    out.json("summary.json", summary)
    out.manifest("complete")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixreg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="FFT worker threads")
    p.add_argument("--grid-h", type=float, default=None, help="override grid.h")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        raw = yaml.safe_load(text) or {}
        if args.grid_h is not None and isinstance(raw, dict):
            raw.setdefault("grid", {})["h"] = args.grid_h
        cfg = parse_config(raw)
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    return run(cfg, args.command, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
