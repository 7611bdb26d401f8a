"""Batch front end: ``univcode run <config>`` and ``univcode validate <config>``.

Configs are YAML files checked against ``schema/experiment.schema.json``.
Each run writes ``results.csv``, ``summary.json`` and ``manifest.json``
into the output directory; every file is written to a temporary name and
renamed, so readers only ever see complete files.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 a built-in acceptance check failed (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__, kernels
from .channels import (ChannelFamily, dmc_theta, make_dmc_family, make_gaussian_fading, make_mimo_gaussian)
from .combinatorics import (EXHAUSTIVE_MAX_D, EXHAUSTIVE_MAX_N, build_codebook, group_average_bound_check,
                            packing_violations, round_to_type, type_class_size, type_class_words)
from .errors import CapacityError, DesignError, DivergenceUndefined, DomainError, QuadratureError, UnivCodeError
from .infomeasures import (V_FLOOR, RateParameters, compound_design, dispersion, exponent_lower_bound, mutual_information,
                           optimal_r1_report)
from .mixtures import PriorSpec, clarke_barron_slope
from .simulator import EXACT_OUTPUT_CAP, JOINT_TABLE_CAP, fit_exponent, run_second_order

log = logging.getLogger("univcode")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(UnivCodeError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    text = resources.files("univcode").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def build_family(desc: dict) -> ChannelFamily:
    ctor = desc["constructor"]
    if ctor == "dmc":
        fam = make_dmc_family(desc["d"], desc["m"], desc.get("bound", 6.0))
    elif ctor == "gaussian_fading":
        kw = {k: desc[k] for k in ("eps0", "gain_range", "offset_range") if k in desc}
        fam = make_gaussian_fading(desc["signal_points"], **kw)
    elif ctor == "mimo":
        fam = make_mimo_gaussian(desc["signal_vectors"], desc["r"])
    else:  # unreachable after schema validation
        raise ConfigError(f"unknown family constructor {ctor!r}")
    if "lower" in desc or "upper" in desc:
        fam = fam.with_box(desc.get("lower", fam.lower), desc.get("upper", fam.upper))
    if "nested" in desc:
        fam = fam.with_nested_boxes([(np.asarray(lo, float), np.asarray(hi, float)) for lo, hi in desc["nested"]])
    return fam


def _points(cfg, fam, grid=False):
    if grid and "theta_grid" in cfg:
        return [fam.point(t) for t in cfg["theta_grid"]]
    if grid and "channel_grid" in cfg:
        return [fam.point(dmc_theta(m)) for m in cfg["channel_grid"]]
    if "theta" in cfg:
        return [fam.point(cfg["theta"])]
    if "channel" in cfg:
        return [fam.point(dmc_theta(cfg["channel"]))]
    raise ConfigError("missing channel parameter: give theta or channel" + (" (or a grid)" if grid else ""))


def _prior(spec):
    if spec is None:
        return None
    return PriorSpec(**spec)


def _priors(cfg):
    w_x = _prior(cfg.get("prior"))
    w_P = _prior(cfg.get("output_prior")) or w_x
    return None if w_x is None else (w_x, w_P)


def validate_config(cfg: dict) -> list:
    """Schema and semantic diagnostics; an empty list means the config is runnable."""
    diags = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
             for e in sorted(jsonschema.Draft202012Validator(load_schema()).iter_errors(cfg), key=str)]
    if diags:
        return diags
    kind = cfg["kind"]
    try:
        fam = build_family(cfg["family"])
    except (DomainError, ValueError) as exc:
        return [f"family: {exc}"]
    rates = cfg.get("rates", {})
    try:
        if kind in ("exponent-bound", "simulate-exponent", "second-order", "clarke-barron"):
            pts = _points(cfg, fam)
        elif kind == "compound-design":
            pts = _points(cfg, fam, grid=True)
        else:
            pts = []
    except (DomainError, ValueError, ConfigError) as exc:
        return [f"channel: {exc}"]
    if "P" in cfg:
        P = np.asarray(cfg["P"], float)
        if P.shape != (fam.d,) or np.any(P < 0) or not math.isclose(P.sum(), 1.0, abs_tol=1e-9):
            diags.append(f"P: must be a probability vector over {fam.d} inputs")
    if kind in ("exponent-bound", "simulate-exponent") and "R1" in rates and rates["R1"] <= rates["R"]:
        diags.append("rates: exponent bound precondition violated, need R1 > R")
    if kind == "second-order":
        if ("R2_star" in rates) == ("epsilon" in rates):
            diags.append("rates: give exactly one of R2_star and epsilon")
        if not diags and pts:
            V = dispersion(cfg["P"], pts[0])
            if not V > V_FLOOR:
                diags.append(f"second-order: dispersion V = {V} must be positive")
    if kind == "clarke-barron" and "input" in cfg and cfg["input"] >= fam.d:
        diags.append(f"input: symbol {cfg['input']} outside 0..{fam.d - 1}")
    if kind == "codebook-audit" and cfg.get("verify") and (cfg["n"] > EXHAUSTIVE_MAX_N or fam.d > EXHAUSTIVE_MAX_D):
        diags.append(f"capacity: packing verification is limited to n <= {EXHAUSTIVE_MAX_N}, d <= {EXHAUSTIVE_MAX_D}")
    mode = cfg.get("mode")
    if kind == "simulate-exponent" and mode == "monte-carlo" and "trials" not in cfg:
        diags.append("trials: required for monte-carlo mode")
    if kind in ("simulate-exponent", "second-order") and fam.output.is_finite and not diags:
        K = fam.output.size
        for n in cfg.get("n_list", []):
            if mode == "enumerate" and K ** n > EXACT_OUTPUT_CAP:
                diags.append(f"capacity: exact enumeration of |Y|^n = {K}^{n} exceeds {EXACT_OUTPUT_CAP}")
                continue
            counts = round_to_type(cfg["P"], n).counts
            size = int(np.prod([math.comb(int(c) + K - 1, K - 1) for c in counts]))
            if size > JOINT_TABLE_CAP:
                diags.append(f"capacity: {size} joint types at n={n} exceed {JOINT_TABLE_CAP}")
    if kind in ("simulate-exponent", "second-order") and not fam.output.is_finite:
        diags.append("family: ensemble experiments need a finite output alphabet")
    return diags


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return format(x, ".17g") if math.isfinite(x) else "null"
    return None


def dumps_json(obj, indent=0) -> str:
    """JSON with floats at 17 significant digits and non-finite values as null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    s = _fmt(obj)
    if s is not None:
        return s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(_fmt(v) is not None or v is None for v in obj):
            return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (_fmt(r[c]) if _fmt(r[c]) is not None else str(r[c]))
                    for c in columns])
    return buf.getvalue()


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _exp_exponent_bound(cfg, fam, ctx):
    pts = _points(cfg, fam, grid=True)
    P = cfg["P"]
    rates = cfg["rates"]
    if "R1" in rates:
        rep = exponent_lower_bound(P, pts, RateParameters(R=rates["R"], R1=rates["R1"]))
    else:
        rep = optimal_r1_report(P, pts, rates["R"])
    rows = [{"theta": " ".join(format(v, ".17g") for v in r["theta"]), "s_star": r["s_star"], "bound": r["bound"],
             "I": mutual_information(P, p)} for r, p in zip(rep.table, pts)]
    summary = {"R": rep.R, "R1": rep.R1, "bound": rep.bound, "s_star": rep.s_star,
               "threshold": "given" if "R1" in rates else "optimal"}
    return ["theta", "I", "s_star", "bound"], rows, summary, True


def _exp_compound(cfg, fam, ctx):
    pts = _points(cfg, fam, grid=True)
    res = compound_design(fam, pts, cfg["rates"]["R"], cfg["method"], cfg["candidates"])
    rows = []
    for c in res.candidates:
        row = {"P": " ".join(format(v, ".17g") for v in c["P"])}
        row.update({k: v for k, v in c.items() if k != "P"})
        rows.append(row)
    cols = ["P"] + [k for k in res.candidates[0] if k != "P"]
    summary = {"method": res.method, "P": res.P, "R1": res.R1, "bound": res.bound}
    return cols, rows, summary, True


def _exp_simulate(cfg, fam, ctx):
    pt = _points(cfg, fam)[0]
    rates = cfg["rates"]
    mode = cfg.get("mode", "monte-carlo" if "trials" in cfg else "exact")
    rp = RateParameters(R=rates["R"], R1=rates.get("R1"))
    fit = fit_exponent(fam, pt, cfg["P"], rp, cfg["n_list"], trials=cfg.get("trials") if mode != "exact" else None,
                       seed=ctx["seed"], priors=_priors(cfg), workers=ctx["workers"], mode=mode)
    rows = [dict(r, M_n=math.exp(r["log_M"]) if r["log_M"] < 700 else math.inf, log_M_n=r["log_M"])
            for r in fit.rows]
    summary = {"exponent": fit.exponent, "std_error": fit.std_error, "bound": fit.bound, "R1": fit.R1,
               "passed": fit.passed, "unusable": fit.unusable}
    return ["n", "M_n", "log_M_n", "R1", "error", "ci_low", "ci_high", "bound"], rows, summary, fit.passed


def _exp_second_order(cfg, fam, ctx):
    pts = _points(cfg, fam)
    rates = cfg["rates"]
    exp = run_second_order(fam, pts[0].theta, cfg.get("theta2"), cfg["P"], cfg["n_list"],
                           epsilon=rates.get("epsilon"), R2_star=rates.get("R2_star"), R1_star=rates.get("R1_star"),
                           trials=cfg.get("trials"), seed=ctx["seed"], priors=_priors(cfg), workers=ctx["workers"])
    rows = [dict(r, log_M_n=r["log_M"]) for r in exp.rows]
    summary = {"R1_star": exp.R1_star, "R2_star": exp.R2_star, "V": exp.V, "shift": exp.shift,
               "predicted": exp.predicted, "theta1": exp.theta1, "theta2": exp.theta2}
    return ["n", "log_M_n", "R1", "error", "ci_low", "ci_high", "predicted"], rows, summary, True


def _exp_clarke_barron(cfg, fam, ctx):
    pt = _points(cfg, fam)[0]
    prior = _prior(cfg.get("prior")) or PriorSpec("continuous" if fam.tag == "A" else "grid-E")
    rng = np.random.default_rng(ctx["seed"])
    fit = clarke_barron_slope(fam, pt, prior, cfg["n_list"], cfg["s"], target=cfg.get("input", 0),
                              trials=cfg.get("trials", 10_000), rng=rng)
    rows = [dict(r, predicted_intercept=fit.predicted_intercept) for r in fit.rows]
    ok = True
    if "slope_range" in cfg:
        lo, hi = cfg["slope_range"]
        ok = lo <= fit.slope <= hi
    summary = {"slope": fit.slope, "slope_se": fit.slope_se, "intercept": fit.intercept,
               "predicted_intercept": fit.predicted_intercept, "slope_check": ok if "slope_range" in cfg else None}
    return ["n", "s", "estimate", "ci_low", "ci_high", "predicted_intercept"], rows, summary, ok


def _exp_codebook_audit(cfg, fam, ctx):
    P = round_to_type(cfg["P"], cfg["n"])
    rng = np.random.default_rng(ctx["seed"])
    R = cfg["rates"]["R"]
    cb = build_codebook(P, R, rng, verify=bool(cfg.get("verify", False)))
    bad = set(packing_violations(cb.words, P, R).tolist()) if P.n <= EXHAUSTIVE_MAX_N and P.d <= EXHAUSTIVE_MAX_D \
        else set()
    ratio = None
    if P.n <= EXHAUSTIVE_MAX_N and P.d <= EXHAUSTIVE_MAX_D:
        ref = cb.words[0]
        ratio = max((group_average_bound_check(cb, w, ref) for w in type_class_words(P) if not np.array_equal(w, ref)),
                    default=None)
    rows = [{"index": i, "word": "".join(map(str, w.tolist())), "packing_ok": i not in bad}
            for i, w in enumerate(cb.words)]
    ctx["extra"]["codebook.txt"] = cb.to_text()
    summary = {"n": P.n, "counts": list(P.counts), "R": R, "M": cb.M, "type_class_log_size": type_class_size(P).log_size,
               "packing_verified": cb.packing_verified, "violations": len(bad), "max_group_average_ratio": ratio}
    return ["index", "word", "packing_ok"], rows, summary, True


EXPERIMENTS = {
    "exponent-bound": _exp_exponent_bound,
    "compound-design": _exp_compound,
    "simulate-exponent": _exp_simulate,
    "second-order": _exp_second_order,
    "clarke-barron": _exp_clarke_barron,
    "codebook-audit": _exp_codebook_audit,
}


def run(path, out=None, seed=None, workers=None) -> int:
    """Run one experiment; returns the process exit status."""
    t0 = time.perf_counter()
    try:
        cfg = load_config(path)
        if seed is not None:
            cfg["seed"] = int(seed)
        diags = validate_config(cfg)
        if diags:
            for d in diags:
                log.error("config: %s", d)
            return EXIT_CONFIG
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.get("output") or f"results/{cfg['kind']}")
    ctx = {"seed": cfg["seed"], "workers": workers, "extra": {}}
    timings = {}
    try:
        t = time.perf_counter()
        fam = build_family(cfg["family"])
        timings["family"] = time.perf_counter() - t
        t = time.perf_counter()
        columns, rows, summary, ok = EXPERIMENTS[cfg["kind"]](cfg, fam, ctx)
        timings["experiment"] = time.perf_counter() - t
    except (QuadratureError, DivergenceUndefined, CapacityError, DomainError, DesignError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        log.error("numeric failure in %s: %s: %s", cfg["kind"], type(exc).__name__, exc)
        return EXIT_NUMERIC
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    files = {"results.csv": csv_text(columns, rows), "summary.json": dumps_json({"kind": cfg["kind"], **summary}) + "\n"}
    files.update(ctx["extra"])
    for name, text in files.items():
        atomic_write(out_dir / name, text)
    manifest = {
        "config": cfg,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "wall_clock_seconds": time.perf_counter() - t0,
        "timings": timings,
        "digests": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in files.items()},
    }
    atomic_write(out_dir / "manifest.json", dumps_json(manifest) + "\n")
    log.info("wrote %s", out_dir)
    if not ok:
        log.error("acceptance check failed for %s", cfg["kind"])
        return EXIT_CHECK
    return EXIT_OK


def validate(path) -> list:
    """Diagnostics for a config file; empty when valid."""
    try:
        return validate_config(load_config(path))
    except ConfigError as exc:
        return [str(exc)]


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes (default: CPU count)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config's master seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="univcode", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment", parents=[common])
    p_run.add_argument("path")
    p_val = sub.add_parser("validate", help="check a config without running it", parents=[common])
    p_val.add_argument("path")
    args = parser.parse_args(argv)
    opts = {k: getattr(args, k, None) for k in ("workers", "seed", "out", "verbose")}
    logging.basicConfig(level=logging.INFO if opts["verbose"] else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate":
        diags = validate(args.path)
        for d in diags:
            print(d)
        return EXIT_CONFIG if diags else EXIT_OK
    return run(args.path, out=opts["out"], seed=opts["seed"], workers=opts["workers"])


if __name__ == "__main__":
    sys.exit(main())
