"""Command-line front end.

Subcommands: model-check, simulate, verify-m2f, moments, convergence,
survival, cpp.  Every command reads a JSON config (--config), validated
against a fixed key set with unknown keys rejected, and writes to stdout
or --out.  Outputs start with comment headers recording the seed, the git
state and the config hash; the same (config, seed) pair always produces
byte-identical output, except for the runtime_ms field of moment records.

Exit codes: 0 success, 1 runtime or usage errors, 2 model-property
failures (e.g. a non-critical model in model-check), 3 verification
failures (an identity or statistical check did not hold).
"""

import argparse
import concurrent.futures
import hashlib
import json
import os
import subprocess
import sys
import time
import warnings

import numpy as np

from . import limits, moments, process, spine, trees

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MODEL = 2
EXIT_VERIFY = 3

_MC_BLOCKS = 16


class ConfigError(ValueError):
    pass


def _load_config(path, required, optional=()):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    allowed = set(required) | set(optional)
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = set(required) - set(cfg)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    sha = hashlib.sha256(raw).hexdigest()
    return cfg, sha


def _load_model(cfg, config_path, exact=False):
    model_path = cfg["model"]
    if not os.path.isabs(model_path):
        model_path = os.path.join(os.path.dirname(os.path.abspath(config_path)), model_path)
    return process.Model.from_file(model_path, exact=exact)


def _git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _meta(seed, sha):
    return {"seed": seed, "git": _git_describe(), "config_sha256": sha}


def _header_lines(meta):
    return [f"# {k}={meta[k]}" for k in ("seed", "git", "config_sha256")]


def _write_out(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _csv_text(meta, header, rows):
    lines = _header_lines(meta)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in header))
    return "\n".join(lines) + "\n"


def _json_text(meta, payload):
    return json.dumps({"meta": meta, **payload}, indent=2, sort_keys=True) + "\n"


def read_csv_rows(path_or_fh):
    """Read back a CSV written by this tool: (meta, list of row dicts).

    Numeric-looking cells are converted to int or float; empty cells to
    None.
    """
    fh = open(path_or_fh) if isinstance(path_or_fh, (str, os.PathLike)) else path_or_fh
    try:
        meta = {}
        header = None
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("# "):
                key, _, val = line[2:].partition("=")
                meta[key] = val
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            row = {}
            for name, cell in zip(header, cells):
                if cell == "":
                    row[name] = None
                else:
                    try:
                        row[name] = int(cell)
                    except ValueError:
                        try:
                            row[name] = float(cell)
                        except ValueError:
                            row[name] = cell
            rows.append(row)
        if header is None:
            raise ValueError("no CSV header found")
        return meta, rows
    finally:
        if isinstance(path_or_fh, (str, os.PathLike)):
            fh.close()


def _leaf_weights(spec, model):
    weights = spec.get("weights")
    if weights is None:
        return None
    unknown = set(weights) - set(model.types)
    if unknown:
        raise ConfigError(f"functional weights for unknown types: {sorted(unknown)}")
    return {x: float(weights.get(x, 1.0)) for x in model.types}


def build_functional(spec, model):
    """Shape functional from a config dict: {"name": ..., parameters}.

    Names: "count" (constant one), "height_indicator" with "r" (one when
    every leaf height is at most r), "pair_indicator" with "r" (one when
    the first two leaves sit within distance r; needs k >= 2).  All accept
    "weights", a per-leaf-type factor.
    """
    allowed = {"name", "r", "weights"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown functional keys: {sorted(unknown)}")
    name = spec.get("name", "count")
    weights = _leaf_weights(spec, model)

    def wprod(lt):
        if weights is None:
            return 1.0
        w = 1.0
        for x in lt:
            w *= weights[x]
        return w

    if name == "count":
        return lambda shape, lt, bt: wprod(lt)
    if name == "height_indicator":
        r = float(spec["r"])
        return lambda shape, lt, bt: wprod(lt) if shape.height <= r else 0.0
    if name == "pair_indicator":
        r = float(spec["r"])

        def F(shape, lt, bt):
            if shape.k < 2:
                raise ConfigError("pair_indicator needs k >= 2")
            d = (
                shape.leaf_heights[0]
                + shape.leaf_heights[1]
                - 2 * shape.branch_heights[0]
            )
            return wprod(lt) if d <= r else 0.0

        return F
    raise ConfigError(f"unknown functional {name!r}")


def build_phi(spec):
    """Distance-matrix test function for the continuum commands.

    Names: "ones", "pair_indicator" with "r" (one when the first two
    sampled points sit within distance r).
    """
    allowed = {"name", "r"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown phi keys: {sorted(unknown)}")
    name = spec.get("name", "ones")
    if name == "ones":
        return lambda D, marks: 1.0
    if name == "pair_indicator":
        r = float(spec["r"])
        return lambda D, marks: 1.0 if D[1, 2] <= r else 0.0
    raise ConfigError(f"unknown phi {name!r}")


def cmd_model_check(args):
    cfg, sha = _load_config(args.config, required=("model",), optional=("tol",))
    model = _load_model(cfg, args.config)
    meta = _meta(args.seed, sha)
    tol = float(cfg.get("tol", 1e-9))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            eig = process.eigenpair(model)
    except ValueError as e:
        _write_out(args, _json_text(meta, {"error": str(e), "critical": False}))
        return EXIT_MODEL
    sig2 = process.sigma_squared(model, eig)
    critical = abs(eig.perron - 1.0) <= tol
    payload = {
        "types": list(model.types),
        "perron": eig.perron,
        "critical": critical,
        "h": [float(v) for v in eig.h],
        "pi": [float(v) for v in eig.pi],
        "sigma_sq": sig2,
    }
    if args.format == "csv":
        rows = [{"key": k, "value": _fmt(payload[k]) if not isinstance(payload[k], list) else json.dumps(payload[k])} for k in sorted(payload)]
        _write_out(args, _csv_text(meta, ["key", "value"], rows))
    else:
        _write_out(args, _json_text(meta, payload))
    return EXIT_OK if critical else EXIT_MODEL


def cmd_simulate(args):
    cfg, sha = _load_config(
        args.config, required=("model", "x0", "n_gen"), optional=()
    )
    model = _load_model(cfg, args.config)
    mt = process.simulate(model, cfg["x0"], int(cfg["n_gen"]), rng=args.seed)
    meta = _meta(args.seed, sha)
    lines = _header_lines(meta)
    lines.append(f"# tree={trees.tree_to_string(mt.tree)}")
    lines.append("vertex,type")
    for v in mt.tree.vertices:
        lines.append(f"{'.'.join(map(str, v))},{mt.marks[v]}")
    _write_out(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify_m2f(args):
    cfg, sha = _load_config(
        args.config,
        required=("model",),
        optional=("x0", "ks", "Rs", "psis", "functional", "cap", "tol"),
    )
    model = _load_model(cfg, args.config)
    x0 = cfg.get("x0", model.types[0])
    ks = [int(k) for k in cfg.get("ks", [1, 2, 3])]
    Rs = [int(R) for R in cfg.get("Rs", [1, 2, 3])]
    psis = cfg.get("psis", ["unit", "harmonic"])
    tol = float(cfg.get("tol", 1e-9))
    cap = int(cfg.get("cap", 200_000))
    F = build_functional(cfg.get("functional", {"name": "count"}), model)
    meta = _meta(args.seed, sha)
    rows = []
    failed = False
    try:
        bf = moments.BruteForceMoments(model, x0, max(Rs), cap=cap)
    except ValueError as e:
        _write_out(args, _json_text(meta, {"error": str(e)}))
        return EXIT_RUNTIME
    kernels = {psi: spine.build_kernel(model, psi) for psi in psis}
    for k in ks:
        for R in Rs:
            reference = bf.moment(k, F, R)
            for psi in psis:
                q = moments.MomentQuery(k=k, x0=x0, F=F, R=R, psi=psi)
                val = moments.moment_m2f(model, q, kernel=kernels[psi])
                diff = abs(val - reference)
                ok = diff <= tol
                failed = failed or not ok
                rows.append(
                    {
                        "k": k,
                        "R": R,
                        "psi": psi,
                        "bruteforce": reference,
                        "shape_sum": val,
                        "abs_diff": diff,
                        "status": "ok" if ok else "FAIL",
                    }
                )
    header = ["k", "R", "psi", "bruteforce", "shape_sum", "abs_diff", "status"]
    if args.format == "json":
        _write_out(args, _json_text(meta, {"rows": rows, "tol": tol}))
    else:
        _write_out(args, _csv_text(meta, header, rows))
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_moments(args):
    cfg, sha = _load_config(
        args.config,
        required=("model", "x0", "k", "R"),
        optional=("psi", "functional", "route", "cap"),
    )
    model = _load_model(cfg, args.config)
    x0 = cfg["x0"]
    k = int(cfg["k"])
    R = int(cfg["R"])
    psi = cfg.get("psi", "unit")
    routes = cfg.get("route", "both")
    if routes == "both":
        routes = ["m2f", "bruteforce"]
    elif isinstance(routes, str):
        routes = [routes]
    F = build_functional(cfg.get("functional", {"name": "count"}), model)
    q = moments.MomentQuery(k=k, x0=x0, F=F, R=R, psi=psi)
    records = []
    for route in routes:
        t0 = time.perf_counter()
        if route == "m2f":
            value = moments.moment_m2f(model, q)
        elif route == "bruteforce":
            value = moments.moment_bruteforce(
                model, q, cap=int(cfg.get("cap", 200_000))
            )
        else:
            raise ConfigError(f"unknown route {route!r}")
        ms = int(round(1000 * (time.perf_counter() - t0)))
        records.append(
            {
                "k": k,
                "n": None,
                "psi": psi if isinstance(psi, str) else "custom",
                "value": value,
                "path": route,
                "runtime_ms": ms,
            }
        )
    meta = _meta(args.seed, sha)
    if args.format == "csv":
        header = ["k", "n", "psi", "value", "path", "runtime_ms"]
        _write_out(args, _csv_text(meta, header, records))
    else:
        _write_out(args, _json_text(meta, {"records": records}))
    return EXIT_OK


def cmd_convergence(args):
    cfg, sha = _load_config(
        args.config,
        required=("model", "x0", "k", "n_values"),
        optional=("mode", "R", "functional", "kolmogorov_ns", "grid_step"),
    )
    model = _load_model(cfg, args.config)
    F = build_functional(cfg.get("functional", {"name": "height_indicator", "r": 1.0}), model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = limits.convergence_report(
            model,
            int(cfg["k"]),
            F,
            [int(n) for n in cfg["n_values"]],
            cfg["x0"],
            R=float(cfg.get("R", 1.0)),
            mode=cfg.get("mode", "rescaled"),
            grid_step=cfg.get("grid_step"),
            kolmogorov_ns=tuple(int(n) for n in cfg.get("kolmogorov_ns", ())),
        )
    meta = _meta(args.seed, sha)
    meta_extra = dict(meta)
    meta_extra["critical"] = str(report.critical).lower()
    meta_extra["perron"] = _fmt(report.perron)
    meta_extra["sigma_sq"] = _fmt(report.sigma_sq)
    if args.format == "json":
        _write_out(
            args,
            _json_text(
                meta,
                {
                    "critical": report.critical,
                    "perron": report.perron,
                    "sigma_sq": report.sigma_sq,
                    "rows": report.rows,
                },
            ),
        )
    else:
        lines = [f"# {k}={meta_extra[k]}" for k in ("seed", "git", "config_sha256", "critical", "perron", "sigma_sq")]
        header = ["n", "observed", "limit", "rel_error", "path"]
        lines.append(",".join(header))
        for row in report.rows:
            lines.append(",".join(_fmt(row[c]) for c in header))
        _write_out(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_survival(args):
    cfg, sha = _load_config(
        args.config, required=("model", "n_values"), optional=("x0",)
    )
    model = _load_model(cfg, args.config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eig = process.eigenpair(model)
        prof = process.kolmogorov_profile(
            model, [int(n) for n in cfg["n_values"]], x0=cfg.get("x0")
        )
    critical = abs(eig.perron - 1.0) <= 1e-6
    rows = []
    for r in prof:
        limit = r["limit"] if critical else None
        rows.append(
            {
                "n": r["n"],
                "observed": r["observed"],
                "limit": limit,
                "rel_error": abs(r["observed"] - limit) / limit if limit else None,
                "path": f"kolmogorov:{r['type']}",
            }
        )
    meta = _meta(args.seed, sha)
    header = ["n", "observed", "limit", "rel_error", "path"]
    if args.format == "json":
        _write_out(args, _json_text(meta, {"critical": critical, "rows": rows}))
    else:
        _write_out(args, _csv_text(meta, header, rows))
    return EXIT_OK


def _cpp_block(query, count, eps, n_inner, seed):
    rng = np.random.default_rng(seed)
    return limits.cpp_monomial_samples(
        query, n_samples=count, eps=eps, n_inner=n_inner, rng=rng
    )


def cmd_cpp(args):
    cfg, sha = _load_config(
        args.config,
        required=("k",),
        optional=("sigma_sq", "phi", "n_samples", "eps", "n_inner", "marks", "grid_step", "z_max"),
    )
    k = int(cfg["k"])
    sigma_sq = float(cfg.get("sigma_sq", 1.0))
    phi = build_phi(cfg.get("phi", {"name": "ones"}))
    mark_probs = cfg.get("marks")
    query = limits.LimitQuery(
        k=k, phi=phi, sigma_sq=sigma_sq, mark_probs=mark_probs
    )
    n_samples = int(cfg.get("n_samples", 100_000))
    eps = float(cfg.get("eps", 1e-3))
    n_inner = int(cfg.get("n_inner", 8))
    z_max = float(cfg.get("z_max", 3.0))
    formula = limits.cpp_moment(query, grid_step=float(cfg.get("grid_step", 1e-3)))
    # fixed block layout, so results do not depend on the thread count
    seeds = np.random.SeedSequence(args.seed).spawn(_MC_BLOCKS)
    counts = [n_samples // _MC_BLOCKS] * _MC_BLOCKS
    counts[-1] += n_samples - sum(counts)
    jobs = [(query, c, eps, n_inner, s) for c, s in zip(counts, seeds)]
    if args.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.threads) as ex:
            chunks = list(ex.map(lambda j: _cpp_block(*j), jobs))
    else:
        chunks = [_cpp_block(*j) for j in jobs]
    ests = np.concatenate(chunks)
    estimate = float(ests.mean())
    stderr = float(ests.std(ddof=1)) / np.sqrt(len(ests))
    z = (estimate - formula) / stderr if stderr > 0 else float("inf")
    payload = {
        "k": k,
        "sigma_sq": sigma_sq,
        "n_samples": n_samples,
        "eps": eps,
        "estimate": estimate,
        "stderr": stderr,
        "formula": formula,
        "z": z,
    }
    meta = _meta(args.seed, sha)
    if args.format == "csv":
        keys = sorted(payload)
        rows = [{"key": key, "value": _fmt(payload[key])} for key in keys]
        _write_out(args, _csv_text(meta, ["key", "value"], rows))
    else:
        _write_out(args, _json_text(meta, payload))
    return EXIT_OK if abs(z) <= z_max else EXIT_VERIFY


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="branchlab",
        description="moment identities and scaling limits of finite-type "
        "critical branching processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "model-check": (cmd_model_check, "criticality and eigenpair diagnostics"),
        "simulate": (cmd_simulate, "sample one population tree"),
        "verify-m2f": (cmd_verify_m2f, "brute force against the shape-sum identity"),
        "moments": (cmd_moments, "k-point moment records"),
        "convergence": (cmd_convergence, "rescaled moments against their limits"),
        "survival": (cmd_survival, "scaled survival against the Kolmogorov limit"),
        "cpp": (cmd_cpp, "comb sampler against the closed-form moment"),
    }
    for name, (fn, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = {
            "model-check": "json",
            "moments": "json",
            "cpp": "json",
        }.get(args.command, "csv")
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
