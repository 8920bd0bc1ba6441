"""Command-line front end.

Subcommands: ``counts`` (variable/equation profiles), ``build`` (dump a
system as text), ``search`` (damped Newton search), ``prove``
(branch-and-bound infeasibility proof / feasible-point search), and
``verify`` (residuals of an explicit assignment).  Every run can emit a
JSON manifest that is sufficient to reproduce it.

Exit codes: 0 for a completed verdict, 2 for an inconclusive outcome
(iteration limit or region budget), 1 for usage or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import io
import json
import os
import sys

import numpy as np

from . import __version__, bnb, model, search

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2

_SEARCH_COLUMNS = ["status", "vars", "eqns", "iterations", "residual",
                   "pruned_fraction", "eta_seconds", "seed"]
_PROVE_COLUMNS = ["status", "vars", "eqns", "regions", "lambda",
                  "pruned_fraction", "eta_seconds", "seed"]
_COUNTS_COLUMNS = ["dim", "sizes", "vars", "eqns", "ineqs"]
_VERIFY_COLUMNS = ["status", "vars", "eqns", "residual", "combined"]


def _parse_sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}")
    if not sizes:
        raise argparse.ArgumentTypeError("empty size list")
    return sizes


def _spec_from_args(args):
    sizes = list(args.sizes)
    ordered = sorted(sizes, reverse=True)
    if sizes != ordered:
        print(f"warning: sizes {sizes} reordered to {ordered}",
              file=sys.stderr)
    return model.ProblemSpec(
        d=args.dim,
        sizes=tuple(ordered),
        vector_swap=not getattr(args, "no_vector_swap", False),
        set_swap=not getattr(args, "no_set_swap", False),
        conjugation=not getattr(args, "no_conjugation", False),
    )


def _sizes_str(spec):
    return ",".join(str(s) for s in spec.sizes)


def _manifest(args, spec, seeds, started, outcome_fields):
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k not in ("func",) and v is not None}
    man = {
        "tool": "mubopt",
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "seeds": seeds,
        "started": started,
        "finished": _now(),
        "outcome": outcome_fields,
    }
    if spec is not None:
        man["problem"] = {
            "dim": spec.d,
            "sizes": list(spec.sizes),
            "vector_swap": spec.vector_swap,
            "set_swap": spec.set_swap,
            "conjugation": spec.conjugation,
        }
    return man


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_report(fields, columns, fmt, out=None, manifest=None):
    """Render a report with stable field names to stdout or a file."""
    if fmt == "json":
        payload = dict(fields)
        if manifest is not None:
            payload["manifest"] = manifest
        text = json.dumps(payload, indent=2, sort_keys=False) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(columns)
        writer.writerow(["" if fields.get(c) is None else fields.get(c)
                         for c in columns])
        text = buf.getvalue()
    elif fmt == "table":
        widths = [max(len(c), len(_cell(fields.get(c)))) for c in columns]
        header = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
        row = "  ".join(_cell(fields.get(c)).ljust(w)
                        for c, w in zip(columns, widths))
        text = header.rstrip() + "\n" + row.rstrip() + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cell(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _write_manifest(args, manifest):
    path = getattr(args, "manifest", None)
    if path:
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_counts(args):
    if args.unreduced:
        if args.bases is None:
            print("error: --unreduced needs --bases", file=sys.stderr)
            return EXIT_ERROR
        value = model.unreduced_count(args.dim, args.bases)
        if args.format == "json":
            write_report({"vars": value, "dim": args.dim, "bases": args.bases},
                         ["vars", "dim", "bases"], "json", args.out)
        elif args.format == "csv":
            write_report({"dim": args.dim, "bases": args.bases, "vars": value},
                         ["dim", "bases", "vars"], "csv", args.out)
        else:
            text = f"{value}\n"
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
        return EXIT_OK
    if args.sizes is None:
        print("error: counts needs --sizes (or --unreduced --bases)",
              file=sys.stderr)
        return EXIT_ERROR
    spec = _spec_from_args(args)
    nvars, eqns, ineqs = model.count_profile(spec)
    fields = {"dim": spec.d, "sizes": _sizes_str(spec),
              "vars": nvars, "eqns": eqns, "ineqs": ineqs}
    if args.format == "json":
        fields = {"vars": nvars, "eqns": eqns, "ineqs": ineqs,
                  "dim": spec.d, "sizes": _sizes_str(spec)}
    write_report(fields, _COUNTS_COLUMNS, args.format, args.out)
    return EXIT_OK


def cmd_build(args):
    spec = _spec_from_args(args)
    system = model.build_problem(spec)
    text = system.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_search(args):
    started = _now()
    spec = _spec_from_args(args)
    system = model.build_problem(spec)
    integrate_var = args.integrate_var
    if integrate_var != "aux":
        integrate_var = int(integrate_var)
    cfg = search.SearchConfig(
        alpha=args.alpha,
        max_iters=args.max_iters,
        tol=args.tol,
        damping=args.damping,
        seed=args.seed,
        starts=args.starts,
        integration_variable=integrate_var,
        record_trace=args.trace is not None,
    )
    outcome = search.run(system, cfg)
    if args.trace and outcome.trace is not None:
        with open(args.trace, "w") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "combined"])
            for k, v in enumerate(outcome.trace):
                writer.writerow([k, repr(v)])
    fields = {
        "status": outcome.status,
        "vars": system.nvars,
        "eqns": system.reported_equalities,
        "iterations": outcome.iterations,
        "residual": outcome.combined_value,
        "pruned_fraction": None,
        "eta_seconds": None,
        "seed": args.seed,
        "max_equation_residual": outcome.max_equation_residual,
    }
    manifest = _manifest(args, spec, [args.seed], started,
                         {k: v for k, v in fields.items() if v is not None})
    _write_manifest(args, manifest)
    write_report(fields, _SEARCH_COLUMNS, args.format, args.out,
                 manifest=manifest if args.format == "json" else None)
    if outcome.status == search.CONVERGED:
        return EXIT_OK
    if outcome.status == search.ITERATION_LIMIT:
        return EXIT_INCONCLUSIVE
    return EXIT_ERROR


def cmd_prove(args):
    started = _now()
    spec = _spec_from_args(args)
    system = model.build_problem(spec)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("MUB_THREADS", "1"))
    cfg = bnb.BnbConfig(
        level=args.level,
        eps_err=args.eps_err,
        eps_infeas=args.eps_infeas,
        queue=args.queue,
        workers=workers,
        max_regions=args.max_regions,
        progress_interval=args.progress_interval,
        export_sdpa_dir=args.export_sdpa,
        export_every=args.export_every,
        products=not args.no_products,
    )
    callback = None
    if args.progress_interval is not None:
        callback = lambda est: print(bnb.format_progress(est), file=sys.stderr)
    outcome = bnb.run(system, cfg, progress_callback=callback)
    est = outcome.estimate
    fields = {
        "status": outcome.status,
        "vars": system.nvars,
        "eqns": system.reported_equalities,
        "regions": outcome.regions_processed,
        "lambda": outcome.lambda_star,
        "pruned_fraction": outcome.pruned_fraction,
        "eta_seconds": est.eta_seconds,
        "seed": None,
        "residual": outcome.residual,
    }
    manifest = _manifest(args, spec, [], started,
                         {k: v for k, v in fields.items() if v is not None})
    _write_manifest(args, manifest)
    write_report(fields, _PROVE_COLUMNS, args.format, args.out,
                 manifest=manifest if args.format == "json" else None)
    if outcome.status == bnb.BUDGET:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _read_point(path):
    with open(path) as fh:
        text = fh.read()
    text = text.strip()
    if text.startswith("["):
        return np.asarray(json.loads(text), dtype=float)
    return np.asarray(
        [float(tok) for tok in text.replace(",", " ").split()], dtype=float)


def cmd_verify(args):
    spec = _spec_from_args(args)
    system = model.build_problem(spec)
    point = _read_point(args.point)
    cand = model.verify_candidate(system, point)
    fields = {
        "status": "verified" if cand.max_residual <= args.tol else "rejected",
        "vars": system.nvars,
        "eqns": system.reported_equalities,
        "residual": cand.max_residual,
        "combined": cand.combined_value,
    }
    write_report(fields, _VERIFY_COLUMNS, args.format, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mubopt",
        description="Feasibility prover for mutually unbiased (sub-)bases.")
    parser.add_argument("--version", action="version",
                        version=f"mubopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spec_args(p, sizes_required=True):
        p.add_argument("--dim", "-d", type=int, required=True,
                       help="Hilbert-space dimension d")
        p.add_argument("--sizes", type=_parse_sizes,
                       required=sizes_required,
                       help="comma list of per-set vector counts, e.g. 3,3,3,3")
        p.add_argument("--no-vector-swap", action="store_true",
                       help="drop the vector-swap symmetry inequalities")
        p.add_argument("--no-set-swap", action="store_true",
                       help="drop the set-swap symmetry inequalities")
        p.add_argument("--no-conjugation", action="store_true",
                       help="drop the conjugation symmetry inequality")

    def add_report_args(p):
        p.add_argument("--format", choices=("json", "csv", "table"),
                       default="json")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--manifest", help="write the run manifest to this path")

    p = sub.add_parser("counts", help="variable and equation count profile")
    add_spec_args(p, sizes_required=False)
    p.add_argument("--unreduced", action="store_true",
                   help="report the unreduced variable count instead")
    p.add_argument("--bases", type=int,
                   help="number of bases n for --unreduced")
    p.add_argument("--format", choices=("json", "csv", "table"),
                   default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("build", help="write the reduced system as text")
    add_spec_args(p)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="damped Newton stationary-point search")
    add_spec_args(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=100000)
    p.add_argument("--tol", type=float, default=1e-13)
    p.add_argument("--damping", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=1)
    p.add_argument("--integrate-var", default="aux",
                   help="'aux' or an existing variable index")
    p.add_argument("--trace", help="write per-iteration combined values (csv)")
    add_report_args(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("prove", help="branch-and-bound over moment relaxations")
    add_spec_args(p)
    p.add_argument("--level", type=int, choices=(1, 2), default=1)
    p.add_argument("--eps-err", type=float, default=1e-8)
    p.add_argument("--eps-infeas", type=float, default=1e-7)
    p.add_argument("--queue", choices=("lifo", "best_first"), default="lifo")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default MUB_THREADS or 1)")
    p.add_argument("--max-regions", type=int, default=None)
    p.add_argument("--progress-interval", type=float, default=None,
                   metavar="SECONDS")
    p.add_argument("--export-sdpa", metavar="DIR",
                   help="dump region programs in sparse SDPA format")
    p.add_argument("--export-every", type=int, default=100)
    p.add_argument("--no-products", action="store_true",
                   help="skip equality-times-monomial rows at level 2")
    add_report_args(p)
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("verify", help="residuals of an explicit assignment")
    add_spec_args(p)
    p.add_argument("--point", required=True,
                   help="file of whitespace/comma-separated values or JSON array")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--format", choices=("json", "csv", "table"),
                   default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the spec reserves 2 for
        # inconclusive outcomes, so remap
        if exc.code not in (0, None):
            return EXIT_ERROR
        return EXIT_OK
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
