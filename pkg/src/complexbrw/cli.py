"""Command-line interface: ``complexbrw <command> [options]``.

Every option can also be set in a TOML config file, either at top level or
in a table named after the command; command-line flags win over the config
file, which wins over built-in defaults.
"""
import argparse
import json
import math
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import charfun, diagnostics, phase, similarity, simulator, spine, tvfun
from .classifier import Region, classify_many
from .exceptions import BRWError, ConfigError, InvalidModel
from .models import make_model
from ._validation import as_lambda, stream_for

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INDETERMINATE = 3

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "format": None,
    "out": None,
    "strict": False,
    "model": "gaussian-binary",
    "table": None,
    "tol": charfun.DEFAULT_TOL,
    # phase
    "theta": "-1.5,1.5",
    "eta": "-1.5,1.5",
    "res": "201,201",
    # simulate / spine / similarity
    "alpha": None,
    "gens": 18,
    "reps": 200,
    "truncate": None,
    "cap": simulator.DEFAULT_CAP,
    "thinning": False,
    "steps": 100,
    # diagnose
    "traces": None,
    "p": 1.5,
    "k": 1,
    "tail": None,
    # tv
    "delta": 1.5,
    "u0": "auto",
    "check": False,
    # similarity
    "from_complex": False,
    "compare": False,
}

FORMATS = ("csv", "ndjson", "pgm", "svg")


def _global_parent(default):
    # subcommands repeat the global options with suppressed defaults so a
    # value given before the command name is not overwritten
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default, help="master seed (default 0)")
    g.add_argument("--config", default=default, help="TOML config file")
    g.add_argument("--out", default=default, help="output file (default stdout)")
    g.add_argument("--format", choices=FORMATS, default=default)
    g.add_argument("--threads", type=int, default=default)
    g.add_argument("--strict", action="store_true", default=default,
                   help="exit 3 when every verdict is Indeterminate")
    return p


def build_parser():
    parent = _global_parent(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="complexbrw", parents=[_global_parent(None)],
                                     description="Complex branching random walk martingales.")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--model", choices=("gaussian-binary", "lattice", "table"), default=None)
        sp.add_argument("--table", default=None, help='JSON rows, e.g. "[[0.5,[0]],[0.5,[0,0]]]"')

    sp = sub.add_parser("classify", parents=[parent], help="classify parameters lambda")
    model_args(sp)
    sp.add_argument("--lambda", dest="lam", action="append", default=None, help="theta,eta (repeatable)")
    sp.add_argument("--tol", type=float, default=None)

    sp = sub.add_parser("phase", parents=[parent], help="phase-diagram raster")
    model_args(sp)
    sp.add_argument("--theta", default=None, help="lo,hi")
    sp.add_argument("--eta", default=None, help="lo,hi")
    sp.add_argument("--res", default=None, help="n_theta,n_eta")
    sp.add_argument("--tol", type=float, default=None)

    sp = sub.add_parser("simulate", parents=[parent], help="simulate martingale traces (NDJSON)")
    model_args(sp)
    sp.add_argument("--lambda", dest="lam", default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--gens", type=int, default=None)
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--truncate", type=float, default=None)
    sp.add_argument("--cap", type=int, default=None)
    sp.add_argument("--thinning", action="store_true", default=None)

    sp = sub.add_parser("diagnose", parents=[parent], help="convergence verdict from traces")
    sp.add_argument("--traces", default=None, help="NDJSON trace file")
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--tail", default=None, help="comma-separated thresholds for a tail survey")

    sp = sub.add_parser("spine", parents=[parent], help="sample spine paths and ladder epochs")
    model_args(sp)
    sp.add_argument("--lambda", dest="lam", default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--reps", type=int, default=None)

    sp = sub.add_parser("tv", parents=[parent], help="slowly varying function checks")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--u0", default=None, help="'auto' or a positive number")
    sp.add_argument("--check", action="store_true", default=None)

    sp = sub.add_parser("similarity", parents=[parent], help="similarity-matrix engine")
    model_args(sp)
    sp.add_argument("--from-complex", dest="from_complex", action="store_true", default=None)
    sp.add_argument("--lambda", dest="lam", default=None)
    sp.add_argument("--gens", type=int, default=None)
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--compare", action="store_true", default=None)
    return parser


# ---------------------------------------------------------------------------
# configuration


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


class Settings:
    """Resolved options: flag > config[command] > config top level > default."""

    def __init__(self, args, config):
        self.args = args
        self.config = config
        self.section = config.get(args.command, {})
        if not isinstance(self.section, dict):
            raise ConfigError(f"[{args.command}] must be a table")
        known = set(DEFAULTS) | {"lambda", "lam"}
        for key in list(config) + list(self.section):
            if key not in known and key not in _COMMANDS:
                raise ConfigError(f"unknown config key {key!r}")

    def get(self, key):
        attr = "lam" if key == "lambda" else key
        val = getattr(self.args, attr, None)
        if val is not None:
            return val
        for src in (self.section, self.config):
            for k in (key, attr):
                if k in src:
                    return src[k]
        return DEFAULTS.get(key)


def _pair(value, name, cast=float):
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = str(value).split(",")
    if len(parts) != 2:
        raise ConfigError(f"{name} must be two comma-separated values")
    try:
        return tuple(cast(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name}: {value!r}") from exc


def _lambda(value):
    if value is None:
        raise ConfigError("--lambda is required")
    try:
        return as_lambda(tuple(value) if isinstance(value, list) else value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad lambda {value!r}: {exc}") from exc


def _model(s):
    table = s.get("table")
    if isinstance(table, str):
        try:
            table = json.loads(table)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"table is not valid JSON: {exc}") from exc
    try:
        return make_model(s.get("model"), table)
    except InvalidModel as exc:
        raise ConfigError(str(exc)) from exc


def _typed(s, key, cast):
    val = s.get(key)
    if val is None:
        return None
    try:
        return cast(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc


def _emit(s, payload):
    out = s.get("out")
    data = payload if isinstance(payload, bytes) else payload.encode()
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(out, "wb") as fh:
            fh.write(data)


def _ndjson(rows):
    return "".join(json.dumps(r, sort_keys=False) + "\n" for r in rows)


def _num(x):
    return None if x is None or not math.isfinite(x) else float(x)


# ---------------------------------------------------------------------------
# commands


def cmd_classify(s):
    model = _model(s)
    lams = s.get("lambda")
    if lams is None:
        raise ConfigError("classify needs at least one --lambda")
    if isinstance(lams, (str, tuple)) or (isinstance(lams, list) and lams and not isinstance(lams[0], (str, list))):
        lams = [lams]
    arr = np.array([_lambda(v) for v in lams])
    verdicts = classify_many(model, arr, _typed(s, "tol", float))
    fmt = s.get("format") or "ndjson"
    if fmt == "csv":
        lines = ["theta,eta,tag,alpha,derivative,derivative_sign,witness_p"]
        for v in verdicts:
            d = v.to_dict()
            lines.append(",".join("" if x is None else (repr(x) if isinstance(x, float) else str(x)) for x in
                                  (v.lam.real, v.lam.imag, d["tag"], d["alpha"], d["derivative"],
                                   d["derivative_sign"], d["witness_p"])))
        _emit(s, "\n".join(lines) + "\n")
    elif fmt == "ndjson":
        _emit(s, _ndjson(v.to_dict() for v in verdicts))
    else:
        raise ConfigError(f"classify cannot write {fmt}")
    if s.get("strict") and all(v.tag is Region.INDETERMINATE for v in verdicts):
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_phase(s):
    model = _model(s)
    theta = _pair(s.get("theta"), "theta")
    eta = _pair(s.get("eta"), "eta")
    res = _pair(s.get("res"), "res", int)
    try:
        spec = phase.GridSpec(theta, eta, res[0], res[1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grid = phase.phase_raster(model, spec, _typed(s, "tol", float), s.get("seed"), _typed(s, "threads", int))
    fmt = s.get("format") or "csv"
    if fmt == "ndjson":
        raise ConfigError("phase writes csv, pgm or svg")
    _emit(s, phase.render(grid, fmt))
    if s.get("strict") and all(t is Region.INDETERMINATE for t in grid.tags.ravel()):
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_simulate(s):
    model = _model(s)
    lam = _lambda(s.get("lambda"))
    traces = simulator.simulate_ensemble(
        model, lam, _typed(s, "gens", int), _typed(s, "reps", int), seed=_typed(s, "seed", int),
        alpha=_typed(s, "alpha", float), t=_typed(s, "truncate", float), cap=_typed(s, "cap", int),
        thinning=bool(s.get("thinning")), threads=_typed(s, "threads", int))
    fmt = s.get("format") or "ndjson"
    if fmt == "ndjson":
        _emit(s, _ndjson(rec for tr in traces for rec in tr.records()))
    elif fmt == "csv":
        lines = ["rep,n,z_re,z_im,w,zt_re,zt_im,pop"]
        for tr in traces:
            for r in tr.records():
                zt = r["zt"] or ["", ""]
                w = "" if r["w"] is None else repr(r["w"])
                zt = [repr(x) if x != "" else "" for x in zt]
                lines.append(f"{r['rep']},{r['n']},{r['z'][0]!r},{r['z'][1]!r},{w},{zt[0]},{zt[1]},{r['pop']}")
        _emit(s, "\n".join(lines) + "\n")
    else:
        raise ConfigError(f"simulate cannot write {fmt}")
    return EXIT_OK


def cmd_diagnose(s):
    path = s.get("traces")
    if path is None:
        raise ConfigError("diagnose needs --traces")
    try:
        with open(path) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read traces {path}: {exc}") from exc
    report = diagnostics.convergence_verdict(records, _typed(s, "p", float), k=_typed(s, "k", int),
                                             seed=_typed(s, "seed", int))
    out = report.to_dict()
    tail = s.get("tail")
    if tail is not None:
        t_grid = [float(x) for x in (tail if isinstance(tail, list) else str(tail).split(","))]
        ts = diagnostics.tail_survey(records, t_grid)
        out["tail_survey"] = {"t": t_grid, "final_survival": ts.survival[-1].tolist(),
                              "final_slope": ts.final_slope, "heavy": ts.heavy}
    _emit(s, json.dumps(out) + "\n")
    if s.get("strict") and report.verdict == "Indeterminate":
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_spine(s):
    model = _model(s)
    lam = _lambda(s.get("lambda"))
    alpha = _typed(s, "alpha", float)
    if alpha is None:
        root = charfun.alpha_root(model, lam)
        if root is None:
            raise ConfigError("no alpha given and f has no root on [1, 2]")
        alpha = root[0]
    rng = np.random.default_rng(np.random.SeedSequence([_typed(s, "seed", int), 0]))
    pos, weight, kind = spine.sample_paths(model, lam, alpha, _typed(s, "steps", int), _typed(s, "reps", int), rng)
    rows = []
    for k in range(pos.shape[0]):
        desc, asc = spine.ladder_epochs(pos[k])
        rows.append({"rep": k, "kind": kind, "weight": float(weight[k]), "steps": pos[k].tolist(),
                     "descending": desc, "weak_ascending": asc})
    s1 = weight * pos[:, 1] if pos.shape[1] > 1 else np.zeros(1)
    se = float(s1.std(ddof=1) / math.sqrt(s1.size)) if s1.size > 1 else None
    rows.append({"summary": True, "alpha": alpha, "mean_S1": float(s1.mean()), "stderr": se,
                 "expected_S1": -charfun.log_moment_functional(model, lam, alpha)})
    _emit(s, _ndjson(rows))
    return EXIT_OK


def cmd_tv(s):
    alpha = _typed(s, "alpha", float)
    delta = _typed(s, "delta", float)
    if alpha is None:
        raise ConfigError("tv needs --alpha")
    u0 = s.get("u0")
    u0 = tvfun.select_u0(alpha, delta) if u0 in (None, "auto") else _typed(s, "u0", float)
    tv = tvfun.TVFunction(alpha, delta, u0)
    out = {"alpha": alpha, "delta": delta, "u0": u0, "c": tv.c}
    passed = True
    if s.get("check"):
        rep = tvfun.property_report(tv, rng=_typed(s, "seed", int))
        dri = spine.dri_check(tv)
        checks = dict(rep.checks)
        checks["dri_converging"] = dri.converging
        checks["dri_tail_exponent"] = abs(dri.tail_exponent + delta) <= 1e-6
        out["checks"] = checks
        passed = all(checks.values())
        out["passed"] = passed
    if (s.get("format") or "ndjson") == "ndjson":
        _emit(s, json.dumps(out) + "\n")
    else:
        lines = [f"u0 = {u0!r}", f"c = {tv.c!r}"]
        lines += [f"{'PASS' if ok else 'FAIL'} {name}" for name, ok in out.get("checks", {}).items()]
        _emit(s, "\n".join(lines) + "\n")
    return EXIT_OK if passed else EXIT_FAILURE


def cmd_similarity(s):
    if not s.get("from_complex"):
        raise ConfigError("only --from-complex similarity models are available from the command line")
    model = _model(s)
    lam = _lambda(s.get("lambda"))
    gens = _typed(s, "gens", int)
    reps = _typed(s, "reps", int)
    alpha = _typed(s, "alpha", float) or 1.5
    seed = _typed(s, "seed", int)
    if s.get("compare"):
        rep = similarity.compare_with_complex(model, lam, gens, reps, seed, alpha)
        out = {"lambda": [lam.real, lam.imag], "gens": gens, "reps": reps, "eigvec": rep.eigvec,
               "residual": rep.residual, "max_z_discrepancy": rep.max_z_discrepancy,
               "max_w_discrepancy": rep.max_w_discrepancy, "max_discrepancy": rep.max_discrepancy}
        _emit(s, json.dumps(out) + "\n")
        return EXIT_OK
    sm = similarity.complex_to_similarity(model, lam)
    ev = similarity.mean_matrix_eigvec(sm)
    rows = []
    for k in range(reps):
        tr = similarity.run(sm, gens, ev.w, stream_for(seed, k), alpha=alpha)
        for n in range(gens + 1):
            rows.append({"rep": k, "n": n, "zw": tr.zw[n].tolist(), "w": float(tr.w_mart[n]), "pop": int(tr.pop[n])})
    _emit(s, _ndjson(rows))
    return EXIT_OK


_COMMANDS = {
    "classify": cmd_classify,
    "phase": cmd_phase,
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "spine": cmd_spine,
    "tv": cmd_tv,
    "similarity": cmd_similarity,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        settings = Settings(args, config)
        return _COMMANDS[args.command](settings)
    except ConfigError as exc:
        print(f"complexbrw: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BRWError as exc:
        print(f"complexbrw: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
