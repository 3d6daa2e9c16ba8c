"""Command-line entry point: ``pwmd run|verify|bound|oracle|wasserstein``.

Exit codes: 0 success, 1 failed checks, 2 invalid input or configuration,
3 a valid request the library cannot serve (capability, sizing, missing
dependency or range errors).
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import pydantic
import scipy

from . import __version__
from . import bounds as B
from . import models as M
from . import montecarlo as MC
from . import oracles as O
from . import verify as V
from . import wasserstein as WS
from .config import ExperimentConfig, config_echo, load_config, tomllib
from .errors import CapabilityError, DependencyError, ModelError, RangeError, SizingError

OUT_ENV = "PWMD_OUT"
DEFAULT_OUT = "pwmd_out"

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_CAPABILITY = 0, 1, 2, 3
RUNTIME_ERRORS = (CapabilityError, SizingError, DependencyError, RangeError)
INVALID_ERRORS = (
    pydantic.ValidationError, ModelError, ValueError, FileNotFoundError,
    tomllib.TOMLDecodeError, json.JSONDecodeError,
)


def _err(msg: str) -> None:
    print(f"pwmd: {msg}", file=sys.stderr)


def _describe_validation(exc: pydantic.ValidationError) -> str:
    parts = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "invalid configuration: " + "; ".join(parts)


# experiment kinds ------------------------------------------------------------


def _tail_ratio(cfg: ExperimentConfig):
    est = cfg.estimation
    model = cfg.model.build()
    bound = B.app_delta(cfg.bound.application, **cfg.bound.params) if cfg.bound else None
    rep = MC.ratio_curve(model, cfg.grid.x, est.reps, est.seed, est.method, bound, est.threads)
    lines = [f"x={r.x:g} p_hat={r.p_hat:.6g} ratio={r.ratio:.6g} [{r.ratio_ci_lo:.4g}, {r.ratio_ci_hi:.4g}]"
             for r in rep.rows]
    return rep.to_records(), lines, {}


def _wasserstein_scaling(cfg: ExperimentConfig):
    est = cfg.estimation
    if cfg.grid.n is not None:
        rep = MC.wp_scaling(lambda n: cfg.model.build(n), cfg.grid.n, est.p, est.reps, est.seed, est.threads)
    else:
        rep = MC.wp_scaling_in_p(cfg.model.build(), cfg.grid.p, est.reps, est.seed, est.threads)
    lines = [
        f"fitted exponent {rep.fitted_exponent:.4f} (r^2 {rep.r_squared:.4f}) against log {rep.abscissa}",
    ]
    if rep.abscissa == "n":
        lines.append(f"gaussian noise floor {rep.noise_floor:.4g}; near floor: {rep.floor_flag}")
    return rep.to_records(), lines, {}


def _bound_records(app: B.AppDelta, xs):
    records = []
    for x in xs:
        r = app.md_shape(x)
        records.append({
            "x": float(x), "delta": app.delta, "alpha": app.alpha,
            "p0": app.p0 if app.p0 is not None else float("nan"),
            "range_max_x": app.range_max_x, "shape": r.shape, "feasible": r.feasible,
            "violated": "; ".join(r.violated_conditions),
        })
    return records


def _bound_eval(cfg: ExperimentConfig):
    app = B.app_delta(cfg.bound.application, **cfg.bound.params)
    records = _bound_records(app, cfg.grid.x or [0.0])
    lines = [f"{app.application}: Delta = {app.delta:.10g}, alpha = {app.alpha:g}, x-range <= {app.range_max_x:.6g}"]
    return records, lines, {}


def exact_pmf(model) -> O.ExactPmf:
    if isinstance(model, M.IidSum):
        return O.convolve_iid_pmf(model.dist, model.n)
    if isinstance(model, M.CombClt):
        return O.enumerate_comb(model)
    if isinstance(model, M.HomSum):
        return O.enumerate_homsum(model)
    raise CapabilityError(f"no exact oracle for {type(model).__name__}")


def _oracle_records(pmf: O.ExactPmf, xs):
    out = []
    for x in xs:
        r = O.exact_tail_ratio(pmf, x)
        out.append({"x": float(x), "p_w": r.p_w, "p_ref": r.p_ref, "ratio": r.ratio, "log_ratio": r.log_ratio})
    return out


def _oracle_check(cfg: ExperimentConfig):
    pmf = exact_pmf(cfg.model.build())
    records = _oracle_records(pmf, cfg.grid.x)
    lines = [f"x={r['x']:g} P(W>x)={r['p_w']:.10g} ratio={r['ratio']:.10g}" for r in records]
    return records, lines, {"pmf.csv": pmf.to_csv}


def _verify_suite(cfg: ExperimentConfig):
    rows = V.run_checks(cfg.verify.filter if cfg.verify else None)
    ok = bool(rows) and all(r[2] for r in rows)
    records = [{"module": t, "check": n, "passed": p, "detail": d} for t, n, p, d, _ in rows]
    lines = [f"{'PASS' if p else 'FAIL'}  {t:<12} {n:<32} {d}" for t, n, p, d, _ in rows]
    return records, lines + [f"all passed: {ok}"], {"_ok": ok}


KINDS = {
    "tail_ratio": _tail_ratio,
    "wasserstein_scaling": _wasserstein_scaling,
    "bound_eval": _bound_eval,
    "oracle_check": _oracle_check,
    "verify_suite": _verify_suite,
}


def resolve_out(cli_out, cfg_out) -> Path:
    return Path(cli_out or os.environ.get(OUT_ENV) or cfg_out or DEFAULT_OUT)


def versions() -> dict:
    return {"pwmd": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pydantic": pydantic.__version__, "python": platform.python_version()}


def run_config(path, out_dir=None, seed=None, reps=None, threads=None, quiet=False) -> int:
    """Validate a config, run it, and write results.csv, manifest.json and summary.txt."""
    try:
        cfg = load_config(path)
        est = cfg.estimation.model_copy(update={
            k: v for k, v in {"seed": seed, "reps": reps, "threads": threads}.items() if v is not None
        })
        cfg = ExperimentConfig.model_validate({**config_echo(cfg), "estimation": est.model_dump(exclude_none=True)})
    except pydantic.ValidationError as exc:
        _err(_describe_validation(exc))
        return EXIT_INVALID
    except INVALID_ERRORS as exc:
        _err(f"invalid configuration: {exc}")
        return EXIT_INVALID
    t0 = time.perf_counter()
    try:
        records, lines, extras = KINDS[cfg.kind](cfg)
    except RUNTIME_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CAPABILITY
    except (ModelError, ValueError) as exc:
        _err(f"invalid model or parameters: {exc}")
        return EXIT_INVALID
    wall = time.perf_counter() - t0
    out = resolve_out(out_dir, cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    if "csv" in cfg.output.formats:
        MC.write_csv(out / "results.csv", records)
        artifacts.append("results.csv")
    if "json" in cfg.output.formats:
        (out / "results.json").write_text(json.dumps(records, indent=1, default=float))
        artifacts.append("results.json")
    for name, writer in extras.items():
        if not name.startswith("_"):
            writer(out / name)
            artifacts.append(name)
    manifest = {
        "config": config_echo(cfg), "kind": cfg.kind, "seed": cfg.estimation.seed,
        "reps": cfg.estimation.reps, "method": cfg.estimation.method,
        "threads": cfg.estimation.threads, "versions": versions(),
        "wall_time_s": wall, "artifacts": artifacts + ["summary.txt"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (out / "summary.txt").write_text("\n".join([f"kind: {cfg.kind}", *lines, f"wall time: {wall:.2f}s"]) + "\n")
    if not quiet:
        print("\n".join(lines))
        print(f"artifacts written to {out}")
    if extras.get("_ok") is False:
        return EXIT_FAIL
    return EXIT_OK


# ad hoc subcommands ----------------------------------------------------------


def parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float, json.loads):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_pairs(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = parse_value(val.strip())
    return out


DIST_KEYS = ("family", "rate", "half_width", "values", "probs", "center")


def _model_from_pairs(kind: str, pairs: dict):
    from pydantic import TypeAdapter

    from .config import ModelConfig

    dist = {k: pairs.pop(k) for k in DIST_KEYS if k in pairs}
    block = {"type": kind, **pairs}
    if dist:
        block["noise" if kind == "comb_clt" else "dist"] = dist
    return TypeAdapter(ModelConfig).validate_python(block).build()


def _cmd_bound(args) -> int:
    try:
        app = B.app_delta(args.application, **parse_pairs(args.params))
        records = _bound_records(app, args.x)
    except RUNTIME_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CAPABILITY
    except (ValueError, TypeError, ModelError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    print(json.dumps({"application": app.to_dict(), "rows": records}, indent=2, default=float))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    try:
        model = _model_from_pairs(args.model, parse_pairs(args.params))
        pmf = exact_pmf(model)
    except pydantic.ValidationError as exc:
        _err(_describe_validation(exc))
        return EXIT_INVALID
    except RUNTIME_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CAPABILITY
    except (ValueError, ModelError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    records = _oracle_records(pmf, args.x)
    out = getattr(args, "out", None) or os.environ.get(OUT_ENV)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        pmf.to_csv(Path(out) / "pmf.csv")
        MC.write_csv(Path(out) / "results.csv", records)
    print(f"{pmf.size} atoms, mean {pmf.mean:.3g}, variance {pmf.variance:.15g}")
    for r in records:
        print(f"x={MC.fmt(r['x'])} p_w={MC.fmt(r['p_w'])} p_ref={MC.fmt(r['p_ref'])} ratio={MC.fmt(r['ratio'])}")
    return EXIT_OK


def _cmd_wasserstein(args) -> int:
    try:
        clouds = [np.loadtxt(f, delimiter=args.delimiter, ndmin=2) for f in args.files]
        if len(clouds) == 1:
            if clouds[0].shape[1] != 1:
                raise ValueError("comparison with N(0, 1) needs a single column")
            res = WS.wp_sample_vs_normal(clouds[0][:, 0], args.p)
        elif len(clouds) == 2:
            X, Y = clouds
            method = args.method
            if method == "auto":
                method = "sorted" if X.shape[1] == 1 else "assignment"
            if method == "sorted":
                res = WS.wp_empirical_1d(X, Y, args.p)
            elif method == "assignment":
                res = WS.wp_assignment(X, Y, args.p)
            else:
                res = WS.wp_sinkhorn(X, Y, args.p)
        else:
            raise ValueError("give one or two sample files")
    except RUNTIME_ERRORS as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CAPABILITY
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    print(json.dumps({"distance": res.distance, "p": res.p, "method": res.method,
                      "iterations": res.iterations, "converged": res.converged,
                      **{k: float(v) for k, v in res.diagnostics.items()}}, indent=2))
    return EXIT_OK


def _cmd_verify(args) -> int:
    return EXIT_OK if V.run(args.filter) else EXIT_FAIL


def _cmd_run(args) -> int:
    return run_config(args.config, getattr(args, "out", None), getattr(args, "seed", None),
                      getattr(args, "reps", None), getattr(args, "threads", None))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the configured seed")
    common.add_argument("--reps", type=int, default=argparse.SUPPRESS, help="override the replication count")
    common.add_argument("--out", default=argparse.SUPPRESS, help=f"output directory (else ${OUT_ENV})")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")

    parser = argparse.ArgumentParser(prog="pwmd", parents=[common], description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a TOML/JSON experiment config")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", parents=[common], help="run the invariant checks")
    p.add_argument("--filter", default=None, help="only checks with this module tag")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bound", parents=[common], help="evaluate an application's bound shape")
    p.add_argument("application", choices=sorted(B.APPLICATIONS))
    p.add_argument("params", nargs="*", help="key=value inputs, e.g. d=16 b=1 n=1e4")
    p.add_argument("--x", type=float, nargs="+", default=[0.0])
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("oracle", parents=[common], help="exact law and tail ratios of a small model")
    p.add_argument("model", choices=["iid_sum", "comb_clt", "hom_sum"])
    p.add_argument("params", nargs="*", help="key=value model fields, e.g. n=4 family=rademacher")
    p.add_argument("--x", type=float, nargs="+", default=[0.0])
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("wasserstein", parents=[common], help="W_p between sample files (or one file and N(0,1))")
    p.add_argument("files", nargs="+")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--method", choices=["auto", "sorted", "assignment", "sinkhorn"], default="auto")
    p.add_argument("--delimiter", default=None)
    p.set_defaults(func=_cmd_wasserstein)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
