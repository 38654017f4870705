"""Command-line entry point ``propriety-kit``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction

import numpy as np

from . import engine, jeffreys, oracle
from .errors import OutOfScope, ParseError, ProprietyError, ScaleLimit, WrongFamily, WrongLink
from .glm import fit_model_glm
from .model import GlmmModel, PriorBlock, load_model_json, validate

EXIT_CODES = {engine.Outcome.PROPER: 0, engine.Outcome.IMPROPER: 1, engine.Outcome.INDETERMINATE: 2}
EXIT_INPUT_ERROR = 3
EXIT_SCOPE_ERROR = 4


def _read_csv_matrix(path: str, name: str) -> list[list[str]]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
                continue
            for c in cells:
                try:
                    Fraction(c)
                except (ValueError, ZeroDivisionError):
                    raise ParseError(f"not a number: {c!r}", field=name, line=lineno) from None
            rows.append(cells)
    return rows


def _read_csv_vector(path: str, name: str) -> list[str]:
    rows = _read_csv_matrix(path, name)
    if all(len(r) == 1 for r in rows):
        return [r[0] for r in rows]
    if len(rows) == 1:
        return rows[0]
    raise ParseError("expected a single row or a single column", field=name)


def _parse_blocks(text: str) -> list[PriorBlock]:
    blocks = []
    for j, part in enumerate(text.split(",")):
        bits = part.strip().split(":")
        if len(bits) not in (2, 3):
            raise ParseError(f"block spec {part!r} must be q:a or q:a:b", field=f"blocks[{j}]")
        try:
            q = int(bits[0])
            a = Fraction(bits[1])
            b = Fraction(bits[2]) if len(bits) == 3 else Fraction(0)
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"bad block spec {part!r}", field=f"blocks[{j}]") from None
        blocks.append(PriorBlock(q, a, b))
    return blocks


def load_model(args):
    """Model from ``--model`` JSON or from the CSV flag set."""
    if args.model:
        return load_model_json(args.model)
    if not (args.x and args.z and args.y and args.blocks):
        raise ParseError("give --model, or all of --x --z --y --blocks", field="model")
    m = _read_csv_vector(args.m, "m") if args.m else None
    return validate(
        GlmmModel(
            y=_read_csv_vector(args.y, "y"),
            X=_read_csv_matrix(args.x, "X"),
            Z=_read_csv_matrix(args.z, "Z"),
            blocks=_parse_blocks(args.blocks),
            family=args.family,
            link=args.link,
            m=m,
        )
    )


def _float_list(text: str, field: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"expected comma-separated numbers, got {text!r}", field=field) from None


def _tau_grid(text: str) -> np.ndarray:
    """``lo:hi:count`` for a log-spaced grid, or an explicit comma list."""
    if ":" in text:
        bits = text.split(":")
        if len(bits) != 3:
            raise ParseError("tau grid must be lo:hi:count", field="tau-grid")
        try:
            lo, hi, cnt = float(bits[0]), float(bits[1]), int(bits[2])
        except ValueError:
            raise ParseError(f"bad tau grid {text!r}", field="tau-grid") from None
        return np.geomspace(lo, hi, cnt)
    return np.array(_float_list(text, "tau-grid"))


def _emit(out, rows, header, fmt):
    if fmt == "json":
        out.write(json.dumps([dict(zip(header, r)) for r in rows], indent=2, sort_keys=True) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def cmd_check(args, out) -> int:
    model = load_model(args)
    if args.jeffreys:
        result = engine.jeffreys_verdict(model)
    else:
        result = engine.verdict(model, assert_proper_psi=args.assert_proper_psi)
    if args.format == "json":
        out.write(result.to_json() + "\n")
    else:
        out.write(result.render_text() + "\n")
    return EXIT_CODES[result.outcome]


def cmd_jeffreys(args, out) -> int:
    model = load_model(args)
    jp = jeffreys.build_jeffreys(model)
    grid = _tau_grid(args.tau_grid)
    rows = []
    for i in range(jp.r):
        dens = jeffreys.jeffreys_density(jp, i, grid)
        env = jeffreys.jeffreys_envelope(jp, i, grid)
        rows.extend([i, float(t), float(d), float(e)] for t, d, e in zip(grid, dens, env))
    if args.format == "json":
        doc = {
            "beta_hat": jp.beta_hat.tolist(),
            "c_constants": [c.tolist() for c in jp.c_constants],
            "envelope_scale": jp.envelope_scale.tolist(),
            "table": [dict(zip(("block", "tau", "pi_j", "envelope"), r)) for r in rows],
        }
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return 0
    for i, c in enumerate(jp.c_constants):
        out.write(f"# block {i} c = {' '.join(repr(float(v)) for v in c)}\n")
    _emit(out, rows, ["block", "tau", "pi_j", "envelope"], "csv")
    return 0


def cmd_crossover(args, out) -> int:
    tau0 = jeffreys.crossover_tau0(args.family_name, args.n, args.beta_hat, rel_tol=args.tol_root)
    if args.format == "json":
        doc = {"beta_hat": args.beta_hat, "family": args.family_name, "n": args.n, "tau0": tau0}
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        out.write(f"{tau0!r}\n")
    return 0


def cmd_oracle(args, out) -> int:
    model = load_model(args)
    boxes = _float_list(args.boxes, "boxes")
    window = tuple(_float_list(args.tau_window, "tau-window"))
    if len(window) != 2:
        raise ParseError("tau window must be lo,hi", field="tau-window")
    prior = jeffreys.build_jeffreys(model) if args.jeffreys else None
    est = oracle.truncated_cy(model, prior, boxes, tau_window=window)
    rows = [[b, v, "" if r is None else r] for b, v, r in oracle.ratio_diagnostics(est)]
    _emit(out, rows, ["B", "value", "ratio"], args.format)
    return 0


def cmd_fit_glm(args, out) -> int:
    model = load_model(args)
    fit = fit_model_glm(model)
    doc = {
        "beta_hat": fit.beta_hat.tolist(),
        "converged": fit.converged,
        "iterations": fit.iterations,
        "loglik": fit.loglik,
        "separation_flag": fit.separation_flag,
    }
    if args.format == "json":
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        for k in sorted(doc):
            out.write(f"{k}: {doc[k]}\n")
    return 0


def _add_model_flags(p):
    g = p.add_argument_group("model input")
    g.add_argument("--model", help="JSON model document")
    g.add_argument("--x", help="CSV design matrix X")
    g.add_argument("--z", help="CSV random-effect matrix Z")
    g.add_argument("--y", help="CSV responses")
    g.add_argument("--m", help="CSV binomial trial counts")
    g.add_argument("--family", default="binomial", choices=["binomial", "bernoulli", "poisson"])
    g.add_argument("--link", default=None, choices=["logit", "probit", "log"])
    g.add_argument("--blocks", help="prior blocks as q:a[:b] separated by commas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="propriety-kit", description="Posterior propriety checks for binomial and Poisson GLMMs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="decide propriety from the sufficient and necessary conditions")
    _add_model_flags(p)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--assert-proper-psi", action="store_true", help="assume a proper prior on the covariance")
    p.add_argument("--jeffreys", action="store_true", help="check under the approximate Jeffreys prior")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("jeffreys", help="c constants and a density table of the approximate Jeffreys prior")
    _add_model_flags(p)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--tau-grid", default="1e-3:1e3:13")
    p.set_defaults(func=cmd_jeffreys)

    p = sub.add_parser("crossover", help="crossover point of the Jeffreys and comparison priors")
    p.add_argument("--family", dest="family_name", required=True, choices=["bernoulli", "binary", "poisson"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta-hat", type=float, required=True)
    p.add_argument("--tol-root", type=float, default=1e-10)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_crossover)

    p = sub.add_parser("oracle", help="truncated normalizing constants over growing boxes")
    _add_model_flags(p)
    p.add_argument("--boxes", default=",".join(str(b) for b in oracle.DEFAULT_BOXES))
    p.add_argument("--tau-window", default="1e-6,1e4")
    p.add_argument("--jeffreys", action="store_true", help="use the approximate Jeffreys prior")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("fit-glm", help="fixed-effects GLM fit")
    _add_model_flags(p)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_fit_glm)
    return parser


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except FileNotFoundError as exc:
        err.write(f"error: file not found: {exc.filename}\n")
        return EXIT_INPUT_ERROR
    except (ScaleLimit, OutOfScope, WrongFamily, WrongLink) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_SCOPE_ERROR
    except (ParseError, ProprietyError, ValueError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INPUT_ERROR


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
