"""Command-line front end: ``skoro <subcommand> [options]``.

Every option can also come from a JSON config (``--config run.json``) whose
keys are the option names with dashes or underscores; flags given on the
command line win.  CSV goes to ``--out`` (default stdout) and the JSON
summary to ``--summary`` (default stderr).

Exit codes: 0 ok, 2 configuration error, 3 infeasible target, 4 property
violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .barrier import COLUMNS, BarrierSet, IdentityViolation, verify_barrier_identities
from .diffusion import (
    MeanUndefined,
    NotEmbeddable,
    ScaleBoundaryHit,
    SupportOutsideInterval,
    DiffusionTarget,
    rho_zeta_nu,
    scale_from_dict,
    simulate_diffusion_embedding,
)
from .fixtures import run_verify_suite
from .hp import BoundsUnverified, WrongCase, hp_check, nu_bounds, sum_bounds
from .measure import MeasureError, TargetMeasure, TruncationInfeasible, measure_from_dict
from .simulate import (
    STATUS_NAMES,
    LatticeMismatch,
    MaxStepsExceeded,
    StateSpaceTooLarge,
    WalkConfig,
    dkw_epsilon,
    empirical_tails,
    exact_lattice_law,
    simulate_embedding,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_VIOLATION = 0, 2, 3, 4
SUBCOMMANDS = ("barrier", "embed", "diffusion-embed", "hp-check", "oracle", "verify")
DEFAULT_GRID = "0.25,0.5,0.75,1,1.5,2,3"


class ConfigError(ValueError):
    pass


class Violation(RuntimeError):
    pass


# -- formatting --


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        v = float(v)
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return obj


class Output:
    def __init__(self, out: str | None, summary: str | None):
        self._out_path, self._summary_path = out, summary

    def csv(self, header, rows):
        fh = open(self._out_path, "w", newline="") if self._out_path else sys.stdout
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])
        finally:
            if fh is not sys.stdout:
                fh.close()
            else:
                fh.flush()

    def summary(self, doc: dict):
        text = json.dumps(_json_safe(doc), indent=2, sort_keys=False)
        if self._summary_path:
            Path(self._summary_path).write_text(text + "\n")
        else:
            print(text, file=sys.stderr)


# -- inputs --


def parse_grid(spec) -> list[float]:
    """``"a:b:n"`` (n evenly spaced points) or a comma list; strictly increasing and positive."""
    if isinstance(spec, (list, tuple)):
        vals = [float(v) for v in spec]
    else:
        spec = str(spec).strip()
        try:
            if ":" in spec:
                a, b, n = spec.split(":")
                vals = np.linspace(float(a), float(b), int(n)).tolist()
            else:
                vals = [float(v) for v in spec.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad grid {spec!r}: {exc}") from None
    if not vals:
        raise ConfigError("empty grid")
    if any(not (v > 0 and math.isfinite(v)) for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"grid must be strictly increasing and positive: {vals}")
    return vals


def _load_json(path, base: Path | None) -> dict:
    p = Path(path)
    if not p.is_absolute() and not p.exists() and base is not None and (base / p).exists():
        p = base / p
    if not p.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None


def load_measure(args) -> TargetMeasure:
    if not args.measure:
        raise ConfigError("--measure is required")
    return measure_from_dict(_load_json(args.measure, args._base))


def load_scale(args):
    if not args.scale:
        raise ConfigError("--scale is required")
    try:
        return scale_from_dict(_load_json(args.scale, args._base))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, MeasureError):
            raise
        raise ConfigError(f"bad scale: {exc}") from None


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _walk_config(args) -> WalkConfig:
    _need(args, "eps", "paths")
    if args.paths <= 0:
        raise ConfigError("--paths must be positive")
    try:
        return WalkConfig(args.eps, seed=args.seed, max_steps=args.max_steps, mode=args.mode, kernel=args.kernel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- subcommands --


def cmd_barrier(args, out: Output) -> int:
    mu = load_measure(args)
    lams = parse_grid(args.lambda_grid)
    bs = BarrierSet(mu)
    out.csv(COLUMNS, (bs.row(l) for l in lams))
    doc = {"subcommand": "barrier", "n_lambda": len(lams)}
    if args.check:
        rep = verify_barrier_identities(mu, lams, tol=args.tol, raise_on_fail=False)
        doc.update(identities_ok=rep.ok, max_residual=rep.max_residual, worst=rep.worst)
        out.summary(doc)
        return EXIT_OK if rep.ok else EXIT_VIOLATION
    out.summary(doc)
    return EXIT_OK


def _tail_summary(bs: BarrierSet, tails, lams, n):
    band = dkw_epsilon(n) if n else math.nan
    rows = []
    for l in lams:
        rows.append(
            {
                "lambda": l,
                "max_tail": tails.max_tail(l) if n else math.nan,
                "mu_plus": bs.mu_plus(l),
                "min_tail": tails.min_tail(l) if n else math.nan,
                "mu_minus": bs.mu_minus(l),
            }
        )
    return {"dkw_99": band, "tails": rows}


def cmd_embed(args, out: Output) -> int:
    if args.scale:
        return cmd_diffusion_embed(args, out)
    mu = load_measure(args)
    cfg = _walk_config(args)
    lams = parse_grid(args.lambda_grid)
    res = simulate_embedding(mu, cfg, args.paths)
    raw = res.raw
    eps = res.eps
    out.csv(
        ("path", "terminal", "run_max", "run_min", "steps", "status"),
        (
            (i, r[0] * eps, r[1] * eps, -r[2] * eps, r[3], STATUS_NAMES[int(r[4])])
            for i, r in enumerate(raw)
        ),
    )
    n = res.n_kept
    tails = empirical_tails(res) if n else None
    bs = BarrierSet(mu)
    doc = {
        "subcommand": "embed",
        "eps": eps,
        "paths": args.paths,
        "seed": args.seed,
        "mode": args.mode,
        "kernel": args.kernel,
        "snap_distance": res.snap_distance,
        "kept": n,
        "discarded": res.discarded,
        "status_counts": res.counts(),
        "ks_terminal": tails.ks_distance(res.measure if args.mode == "snap" else mu) if n else None,
    }
    doc.update(_tail_summary(bs, tails, lams, n))
    if args.oracle:
        law = exact_lattice_law(mu, eps, snap=args.mode == "snap", max_blocks=args.max_blocks)
        term = law.terminal()
        emp = {}
        if n:
            idx, cnt = np.unique(res.terminal_index, return_counts=True)
            emp = dict(zip(idx.tolist(), (cnt / n).tolist()))
        doc["oracle"] = {
            "deficit": float(law.deficit),
            "terminal": [
                {"x": i * eps, "exact": float(p), "empirical": emp.get(i, 0.0)} for i, p in term.items()
            ],
            "max_tail": [{"lambda": l, "exact": law.max_tail(l)} for l in lams],
            "min_tail": [{"lambda": l, "exact": law.min_tail(l)} for l in lams],
        }
    out.summary(doc)
    return EXIT_OK


def cmd_diffusion_embed(args, out: Output) -> int:
    nu = load_measure(args)
    s = load_scale(args)
    cfg = _walk_config(args)
    zs = parse_grid(args.z_grid)
    tgt = DiffusionTarget(nu, s)
    cls = tgt.classification
    if not cls.embeddable:
        raise NotEmbeddable(cls.message)
    samples = simulate_diffusion_embedding(nu, s, cfg, args.paths, allow_boundary=args.allow_boundary)
    out.csv(
        ("path", "terminal", "sup", "inf"),
        ((i, a, b, c) for i, (a, b, c) in enumerate(zip(samples.terminal, samples.sup, samples.inf))),
    )
    n = len(samples.terminal)
    rows = []
    line = s.image == (-math.inf, math.inf)
    for z in zs:
        r = rho_zeta_nu(nu, s, z, tgt)
        row = {
            "z": z,
            "sup_tail": float(np.mean(samples.sup >= z)) if n else math.nan,
            "nu_plus": r.nu_plus,
            "inf_tail": float(np.mean(samples.inf <= -z)) if n else math.nan,
            "nu_minus": r.nu_minus,
            "rho_plus": r.rho_plus,
            "rho_minus": r.rho_minus,
        }
        if line:
            up_p, up_m, lo_p, lo_m = nu_bounds(tgt, z)
            hi, lo = sum_bounds(tgt, z)
            row.update(bounds_plus=[lo_p, up_p], bounds_minus=[lo_m, up_m], bounds_sum=[lo, hi])
        rows.append(row)
    out.summary(
        {
            "subcommand": "diffusion-embed",
            "scale": s.describe(),
            "classification": {"case": cls.case, "kind": cls.kind, "m": cls.m, "boundary": cls.boundary},
            "eps": cfg.epsilon,
            "paths": args.paths,
            "seed": args.seed,
            "kept": n,
            "status_counts": samples.scale_run.counts(),
            "dkw_99": dkw_epsilon(n) if n else None,
            "z": rows,
        }
    )
    return EXIT_OK


def cmd_hp_check(args, out: Output) -> int:
    _need(args, "p")
    nu = load_measure(args)
    s = load_scale(args)
    bounds = None
    if args.bounds is not None:
        try:
            bounds = [float(v) for v in (args.bounds.split(",") if isinstance(args.bounds, str) else args.bounds)]
        except ValueError:
            raise ConfigError(f"bad --bounds {args.bounds!r}") from None
        if len(bounds) != 4:
            raise ConfigError("--bounds needs four values k,K,r,q")
    tgt = DiffusionTarget(nu, s)
    rep = hp_check(tgt, args.p, bounds)
    rows = [r for ti in rep.integrals.values() for r in ti.rows()]
    out.csv(("integral", "cutoff", "partial"), rows)
    doc = {"subcommand": "hp-check", "scale": s.describe(), "report": rep.as_dict()}
    out.summary(doc)
    return EXIT_OK


def cmd_oracle(args, out: Output) -> int:
    _need(args, "eps")
    mu = load_measure(args)
    lams = parse_grid(args.lambda_grid)
    law = exact_lattice_law(mu, args.eps, snap=args.mode == "snap", max_blocks=args.max_blocks)
    bs = BarrierSet(mu)
    out.csv(("x", "probability", "exact"), ((i * law.eps, p, str(p)) for i, p in law.terminal().items()))
    out.summary(
        {
            "subcommand": "oracle",
            "eps": law.eps,
            "deficit": float(law.deficit),
            "deficit_exact": str(law.deficit),
            "tails": [
                {
                    "lambda": l,
                    "max_tail": law.max_tail(l),
                    "mu_plus": bs.mu_plus(l),
                    "min_tail": law.min_tail(l),
                    "mu_minus": bs.mu_minus(l),
                }
                for l in lams
            ],
        }
    )
    return EXIT_OK


def cmd_verify(args, out: Output) -> int:
    results = run_verify_suite(quick=args.quick, seed=args.seed)
    out.csv(("check", "ok", "detail"), ((r.name, r.ok, r.detail) for r in results))
    ok = all(r.ok for r in results)
    out.summary({"subcommand": "verify", "ok": ok, "failed": [r.name for r in results if not r.ok]})
    return EXIT_OK if ok else EXIT_VIOLATION


HANDLERS = {
    "barrier": cmd_barrier,
    "embed": cmd_embed,
    "diffusion-embed": cmd_diffusion_embed,
    "hp-check": cmd_hp_check,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


# -- parser --


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of option values (flags override)")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--summary", help="JSON summary path (default stderr)")


def _walk_opts(p: argparse.ArgumentParser):
    p.add_argument("--eps", type=float, help="lattice spacing")
    p.add_argument("--paths", type=int, help="number of paths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("exact", "snap", "direct"), default="exact")
    p.add_argument("--max-steps", type=int, default=None, help="per-path cap on steps (or ladder events)")
    p.add_argument("--kernel", choices=("ladder", "step"), default="ladder", help="walk one ladder event or one step at a time")
    p.add_argument("--lambda-grid", default=DEFAULT_GRID, help="'a:b:n' or comma list")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skoro", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    p = sub.add_parser("barrier", help="barrier functions on a lambda grid")
    _common(p)
    p.add_argument("--measure")
    p.add_argument("--lambda-grid", default=DEFAULT_GRID)
    p.add_argument("--check", action="store_true", help="also verify the barrier identities")
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("embed", help="simulate the embedding for Brownian motion")
    _common(p)
    p.add_argument("--measure")
    p.add_argument("--scale", help="optional scale file; delegates to diffusion-embed")
    _walk_opts(p)
    p.add_argument("--z-grid", default=DEFAULT_GRID)
    p.add_argument("--allow-boundary", action="store_true")
    p.add_argument("--oracle", action="store_true", help="compare with the exact lattice law")
    p.add_argument("--max-blocks", type=int, default=2_000_000)

    p = sub.add_parser("diffusion-embed", help="simulate the embedding for a regular diffusion")
    _common(p)
    p.add_argument("--measure")
    p.add_argument("--scale")
    _walk_opts(p)
    p.add_argument("--z-grid", default=DEFAULT_GRID)
    p.add_argument("--allow-boundary", action="store_true")
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--max-blocks", type=int, default=2_000_000)

    p = sub.add_parser("hp-check", help="H^p embeddability criteria")
    _common(p)
    p.add_argument("--measure")
    p.add_argument("--scale")
    p.add_argument("--p", type=float)
    p.add_argument("--bounds", help="k,K,r,q for k|y|^r <= |s(y)| <= K|y|^q")

    p = sub.add_parser("oracle", help="exact law of the lattice walk")
    _common(p)
    p.add_argument("--measure")
    p.add_argument("--eps", type=float)
    p.add_argument("--mode", choices=("exact", "snap"), default="exact")
    p.add_argument("--lambda-grid", default=DEFAULT_GRID)
    p.add_argument("--max-blocks", type=int, default=2_000_000)

    p = sub.add_parser("verify", help="run the identity and oracle self-checks")
    _common(p)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--seed", type=int, default=20240611)
    return ap


def _config_argv(argv: list[str]) -> tuple[dict, Path | None]:
    """Pull ``--config`` out of ``argv`` without a full parse."""
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return {}, None
    doc = _load_json(path, None)
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc, Path(path).resolve().parent


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> tuple[argparse.Namespace, Path | None]:
    conf, base = _config_argv(argv)
    conf = {k.replace("-", "_"): v for k, v in conf.items()}
    sub = conf.pop("subcommand", None)
    if sub is not None and not any(a in SUBCOMMANDS for a in argv):
        argv = [sub] + argv
    probe = parser.parse_args(argv)
    if probe.subcommand is None:
        parser.print_help(sys.stderr)
        raise ConfigError("no subcommand given")
    subparser = parser._subparsers._group_actions[0].choices[probe.subcommand]
    known = {a.dest for a in subparser._actions}
    unknown = set(conf) - known
    if unknown:
        raise ConfigError(f"unknown config keys for {probe.subcommand}: {sorted(unknown)}")
    subparser.set_defaults(**conf)
    return parser.parse_args(argv), base


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, base = _apply_config(parser, argv)
        args._base = base
        out = Output(args.out, args.summary)
        return HANDLERS[args.subcommand](args, out)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    except LatticeMismatch as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (NotEmbeddable, MeanUndefined, TruncationInfeasible, SupportOutsideInterval) as exc:
        _err(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (IdentityViolation, BoundsUnverified, ScaleBoundaryHit, MaxStepsExceeded, Violation) as exc:
        _err(f"violation: {exc}")
        return EXIT_VIOLATION
    except StateSpaceTooLarge as exc:
        _err(f"{exc} (hint: coarser --eps or larger --max-blocks)")
        return EXIT_CONFIG
    except (ConfigError, MeasureError, WrongCase, ValueError) as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG


def _err(msg: str):
    print(f"skoro: {msg}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
