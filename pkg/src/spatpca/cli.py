"""Command line interface: fit, eval, scree, simulate, cv.

Data files are headerless CSVs with observations in rows and sites in
columns; the companion locations file lists one coordinate row per site.
Cells that are empty or read NA/NaN are treated as missing, and any site
column containing a missing value is dropped (and reported) before fitting.
Fitted models are stored as schema-versioned JSON that round-trips exactly.

Exit codes: 0 success, 1 usage or parse errors, 2 numerical warnings (the
solver hit its iteration cap; outputs are still written), 3 internal errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import traceback
from dataclasses import dataclass

import numpy as np

from ._files import atomic_write_text
from .covariance import CovarianceModel, SampleCovariance, estimate_parameters
from .simulate import (
    records_csv_text,
    run_experiment,
    spec_from_dict,
    summary_json_text,
)
from .solver import EigenBasis, RhoTooSmallError, SolverConfig, fit
from .tps import SpatialDomain, SplineCoefficients, build_penalty, evaluate
from .tuning import TuningGrid, cv_gamma, cv_tau, partition_folds, restrict_grid

__all__ = ["IngestReport", "ingest", "save_model", "load_model", "main"]

SCHEMA_VERSION = 1
_NA_TOKENS = {"", "na", "nan"}


# ---------------------------------------------------------------- ingestion


@dataclass(frozen=True)
class IngestReport:
    """What was read and what was dropped before fitting."""

    n_rows: int
    total_sites: int
    kept_sites: tuple[int, ...]
    dropped_sites: tuple[int, ...]
    centered: bool
    deseasonalize: int | None


def _read_matrix(path, what: str, allow_missing: bool) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(
                    f"{what}: row {r} has {len(row)} fields, expected {width}"
                )
            parsed = []
            for c, cell in enumerate(row, start=1):
                text = cell.strip()
                if text.lower() in _NA_TOKENS:
                    if allow_missing:
                        parsed.append(np.nan)
                        continue
                    raise ValueError(f"{what}: missing value at row {r}, column {c}")
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise ValueError(
                        f"{what}: unparseable cell at row {r}, column {c}: {text!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{what}: file {path} is empty")
    return np.asarray(rows, dtype=float)


def ingest(data_path, locations_path, center: bool = False, deseasonalize: int | None = None):
    """Read the data and locations CSVs; drop incomplete sites; apply transforms.

    Returns (y, domain, report).  Deseasonalization subtracts per-column
    per-phase means with phase = row index mod period, then centering
    subtracts the remaining column means.
    """
    data = _read_matrix(data_path, "data", allow_missing=True)
    loc = _read_matrix(locations_path, "locations", allow_missing=False)
    if data.shape[1] != loc.shape[0]:
        raise ValueError(
            f"data has {data.shape[1]} site columns but locations lists "
            f"{loc.shape[0]} sites"
        )
    missing = np.isnan(data).any(axis=0)
    kept = tuple(int(i) for i in np.flatnonzero(~missing))
    dropped = tuple(int(i) for i in np.flatnonzero(missing))
    if not kept:
        raise ValueError("every site column contains missing values")
    y = data[:, ~missing].copy()
    domain = SpatialDomain(loc[~missing, :])

    if deseasonalize is not None:
        if deseasonalize < 1:
            raise ValueError("deseasonalize period must be a positive integer")
        phases = np.arange(y.shape[0]) % deseasonalize
        for phase in range(deseasonalize):
            idx = phases == phase
            if np.any(idx):
                y[idx] -= y[idx].mean(axis=0)
    if center:
        y -= y.mean(axis=0)

    report = IngestReport(
        n_rows=y.shape[0],
        total_sites=data.shape[1],
        kept_sites=kept,
        dropped_sites=dropped,
        centered=center,
        deseasonalize=deseasonalize,
    )
    return y, domain, report


# ------------------------------------------------------------- model file


@dataclass(frozen=True)
class ModelBundle:
    domain: SpatialDomain
    basis: EigenBasis
    covariance: CovarianceModel | None
    provenance: dict


def _config_dict(config: SolverConfig) -> dict:
    return {
        "tau1": config.tau1,
        "tau2": config.tau2,
        "k": config.k,
        "variant": config.variant,
        "rho0": config.rho0,
        "rho_growth": config.rho_growth,
        "tolerance": config.tolerance,
        "max_iterations": config.max_iterations,
    }


def model_to_dict(domain, basis, covariance=None, provenance=None, command="fit") -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "domain": {"d": domain.d, "locations": domain.locations.tolist()},
        "basis": {
            **_config_dict(basis.config),
            "phi": basis.phi.tolist(),
            "sample_variances": basis.sample_variances.tolist(),
            "splines": [{"a": c.a.tolist(), "b": c.b.tolist()} for c in basis.splines],
            "converged": basis.converged,
            "iterations": basis.iterations,
        },
        "covariance": None,
        "provenance": provenance or {},
    }
    if covariance is not None:
        out["covariance"] = {
            "gamma": covariance.gamma,
            "sigma2": covariance.sigma2,
            "l_hat": covariance.l_hat,
            "lambda_star": covariance.lambda_star.tolist(),
            "vhat": covariance.vhat.tolist(),
            "lambda": covariance.lam.tolist(),
        }
    return out


def save_model(path, domain, basis, covariance=None, provenance=None, command="fit"):
    doc = model_to_dict(domain, basis, covariance, provenance, command)
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_model(path) -> ModelBundle:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version: {version!r}")
    domain = SpatialDomain(np.asarray(doc["domain"]["locations"], dtype=float))
    b = doc["basis"]
    config = SolverConfig(
        tau1=b["tau1"],
        tau2=b["tau2"],
        k=b["k"],
        rho0=b["rho0"],
        rho_growth=b["rho_growth"],
        tolerance=b["tolerance"],
        max_iterations=b["max_iterations"],
        variant=b["variant"],
    )
    splines = tuple(
        SplineCoefficients(
            a=np.asarray(c["a"], dtype=float), b=np.asarray(c["b"], dtype=float)
        )
        for c in b["splines"]
    )
    basis = EigenBasis(
        phi=np.asarray(b["phi"], dtype=float),
        splines=splines,
        sample_variances=np.asarray(b["sample_variances"], dtype=float),
        config=config,
        converged=b["converged"],
        iterations=b["iterations"],
    )
    covariance = None
    if doc.get("covariance") is not None:
        c = doc["covariance"]
        covariance = CovarianceModel(
            sigma2=c["sigma2"],
            lam=np.asarray(c["lambda"], dtype=float),
            vhat=np.asarray(c["vhat"], dtype=float),
            lambda_star=np.asarray(c["lambda_star"], dtype=float),
            l_hat=c["l_hat"],
            gamma=c["gamma"],
            basis=basis,
        )
    return ModelBundle(
        domain=domain, basis=basis, covariance=covariance, provenance=doc.get("provenance", {})
    )


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ----------------------------------------------------------------- commands


def _tuning_for(args, n: int, penalty, y):
    """Resolve (tau1, tau2), running cross-validation for any unpinned axis."""
    folds = partition_folds(n, args.folds, args.seed)
    report = None
    if args.tau1 is not None and args.tau2 is not None:
        t1, t2 = args.tau1, args.tau2
    else:
        grid = restrict_grid(TuningGrid(m=args.folds), tau1=args.tau1, tau2=args.tau2)
        report = cv_tau(y, penalty, args.k, grid, folds)
        t1, t2 = report.selected
    return t1, t2, folds, report


def cmd_fit(args) -> int:
    y, domain, report = ingest(args.data, args.locations, args.center, args.deseasonalize)
    n = y.shape[0]
    penalty = build_penalty(domain)
    t1, t2, folds, tau_report = _tuning_for(args, n, penalty, y)
    config = SolverConfig(
        tau1=t1, tau2=t2, k=args.k, variant=args.variant, max_iterations=args.max_iterations
    )
    basis = fit(y, penalty, config)
    if args.gamma is not None:
        gamma = args.gamma
        gamma_report = None
    else:
        gamma_report = cv_gamma(y, basis, TuningGrid(m=args.folds), folds)
        gamma = gamma_report.selected
    model = estimate_parameters(SampleCovariance.from_data(y), basis, gamma)

    provenance = {
        "data": os.fspath(args.data),
        "data_sha256": _sha256(args.data),
        "locations": os.fspath(args.locations),
        "locations_sha256": _sha256(args.locations),
        "seed": args.seed,
        "folds": args.folds,
        "center": args.center,
        "deseasonalize": args.deseasonalize,
        "dropped_sites": list(report.dropped_sites),
        "tau_grid": None
        if tau_report is None
        else {
            "tau1_values": tau_report.tau1_values.tolist(),
            "tau2_values": tau_report.tau2_values.tolist(),
        },
        "gamma_grid": None
        if gamma_report is None
        else gamma_report.gamma_values.tolist(),
    }
    save_model(args.out, domain, basis, model, provenance)

    print(f"sites: {len(report.kept_sites)} kept, {len(report.dropped_sites)} dropped")
    how_tau = "fixed" if tau_report is None else f"{args.folds}-fold CV"
    how_gamma = "fixed" if gamma_report is None else f"{args.folds}-fold CV"
    print(f"tau1={t1!r} tau2={t2!r} ({how_tau})")
    print(f"gamma={gamma!r} ({how_gamma})")
    print(
        "component variances: "
        + ", ".join(repr(float(v)) for v in basis.sample_variances)
    )
    print(f"noise variance: {model.sigma2!r}")
    print(f"retained components: {model.l_hat}")
    state = "converged" if basis.converged else "NOT converged"
    print(f"iterations: {basis.iterations} ({state})")
    print(f"model written to {args.out}")
    if not basis.converged:
        print("warning: solver hit its iteration cap", file=sys.stderr)
        return 2
    return 0


def _parse_grid_spec(text: str, d: int) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != d:
        raise ValueError(f"--grid needs {d} axis specs (lo:hi:count), got {len(parts)}")
    axes = []
    for part in parts:
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ValueError(f"bad grid axis {part!r}, expected lo:hi:count")
        lo, hi, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        if count < 2 or not lo < hi:
            raise ValueError(f"bad grid axis {part!r}: need lo < hi and count >= 2")
        axes.append(np.linspace(lo, hi, count))
    if d == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def cmd_eval(args) -> int:
    bundle = load_model(args.model)
    d = bundle.domain.d
    if args.query is not None:
        pts = _read_matrix(args.query, "query", allow_missing=False)
        if pts.shape[1] != d:
            raise ValueError(f"query points have {pts.shape[1]} coordinates, model has d={d}")
    elif args.grid is not None:
        pts = _parse_grid_spec(args.grid, d)
    else:
        raise ValueError("eval needs either --query or --grid")

    k = bundle.basis.phi.shape[1]
    psi = np.column_stack(
        [evaluate(c, bundle.domain, pts) for c in bundle.basis.splines]
    )
    header = [f"x{j + 1}" for j in range(d)] + [f"phi_{j + 1}" for j in range(k)]
    columns = [pts[:, j] for j in range(d)] + [psi[:, j] for j in range(k)]
    if bundle.covariance is not None:
        rotated = psi @ bundle.covariance.vhat
        header += [f"phi_rot_{j + 1}" for j in range(k)]
        columns += [rotated[:, j] for j in range(k)]
    if args.ref is not None:
        if bundle.covariance is None:
            raise ValueError("--ref needs a model file with a covariance estimate")
        ref = np.array([float(v) for v in args.ref.split(",")])
        if ref.shape != (d,):
            raise ValueError(f"--ref needs {d} comma-separated coordinates")
        psi_ref = np.array(
            [evaluate(c, bundle.domain, ref[None, :])[0] for c in bundle.basis.splines]
        )
        lam = bundle.covariance.lam
        cov = 0.5 * (psi @ (lam @ psi_ref) + (psi @ lam.T) @ psi_ref)
        header.append("cov_ref")
        columns.append(cov)

    buf = [",".join(header)]
    for i in range(pts.shape[0]):
        buf.append(",".join(repr(float(col[i])) for col in columns))
    atomic_write_text(args.out, "\n".join(buf) + "\n")
    print(f"wrote {pts.shape[0]} rows to {args.out}")
    return 0


def cmd_scree(args) -> int:
    y, _, report = ingest(args.data, args.locations, args.center, args.deseasonalize)
    s = SampleCovariance.from_data(y)
    values = np.linalg.eigvalsh(s.s)[::-1]
    total = float(values.sum())
    cumulative = np.cumsum(values) / total if total > 0 else np.zeros_like(values)
    lines = ["component,eigenvalue,cumulative_fraction"]
    for i, (v, c) in enumerate(zip(values, cumulative), start=1):
        lines.append(f"{i},{float(v)!r},{float(c)!r}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"sites: {len(report.kept_sites)} kept, {len(report.dropped_sites)} dropped")
    print(f"wrote {values.size} eigenvalues to {args.out}")
    return 0


def cmd_cv(args) -> int:
    y, domain, _ = ingest(args.data, args.locations, args.center, args.deseasonalize)
    penalty = build_penalty(domain)
    folds = partition_folds(y.shape[0], args.folds, args.seed)
    grid = restrict_grid(TuningGrid(m=args.folds), tau1=args.tau1, tau2=args.tau2)
    tau_report = cv_tau(y, penalty, args.k, grid, folds)
    t1, t2 = tau_report.selected
    config = SolverConfig(
        tau1=t1, tau2=t2, k=args.k, variant=args.variant, max_iterations=args.max_iterations
    )
    basis = fit(y, penalty, config)
    gamma_report = cv_gamma(y, basis, grid, folds)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "cv",
        "tau": tau_report.to_dict(),
        "gamma": gamma_report.to_dict(),
    }
    atomic_write_text(args.out, json.dumps(doc, indent=2) + "\n")
    print(f"selected tau1={t1!r} tau2={t2!r} gamma={gamma_report.selected!r}")
    print(f"report written to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    with open(args.spec) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"experiment spec is not valid JSON: {exc}") from exc
    raw_list = raw if isinstance(raw, list) else [raw]
    specs = [spec_from_dict(item, default_label=f"exp{i}") for i, item in enumerate(raw_list)]
    os.makedirs(args.out, exist_ok=True)
    records = []
    for spec in specs:
        records.extend(run_experiment(spec))
    records_path = os.path.join(args.out, "records.csv")
    summary_path = os.path.join(args.out, "summary.json")
    atomic_write_text(records_path, records_csv_text(records))
    atomic_write_text(summary_path, summary_json_text(records))
    failures = sum(1 for r in records if r.error)
    print(f"{len(records)} records ({failures} failed cells)")
    print(f"wrote {records_path} and {summary_path}")
    return 0


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_io_flags(sub):
    sub.add_argument("--data", required=True, help="CSV, observations x sites, no header")
    sub.add_argument(
        "--locations", required=True, help="CSV, one coordinate row per site column"
    )
    sub.add_argument("--center", action="store_true", help="subtract column means")
    sub.add_argument(
        "--deseasonalize",
        type=int,
        default=None,
        metavar="PERIOD",
        help="subtract per-column means of each row-index phase (e.g. 12 for monthly data)",
    )


def _add_fit_flags(sub):
    sub.add_argument("--k", type=int, required=True, help="number of components")
    sub.add_argument("--tau1", type=float, default=None, help="smoothness weight (else CV)")
    sub.add_argument("--tau2", type=float, default=None, help="sparseness weight (else CV)")
    sub.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    sub.add_argument("--seed", type=int, default=0, help="fold-assignment seed")
    sub.add_argument(
        "--variant",
        choices=["closed-form", "lasso-inner"],
        default="closed-form",
        help="update scheme for the basis solver",
    )
    sub.add_argument(
        "--max-iterations", type=int, default=1000, help="solver iteration cap"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatpca", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_fit = commands.add_parser("fit", help="fit a model and write it as JSON")
    _add_io_flags(p_fit)
    _add_fit_flags(p_fit)
    p_fit.add_argument("--gamma", type=float, default=None, help="shrinkage level (else CV)")
    p_fit.add_argument("--out", required=True, help="model JSON path")
    p_fit.set_defaults(handler=cmd_fit)

    p_eval = commands.add_parser("eval", help="evaluate a fitted model at new locations")
    p_eval.add_argument("--model", required=True, help="model JSON from fit")
    p_eval.add_argument("--query", default=None, help="CSV of query points, one per row")
    p_eval.add_argument(
        "--grid", default=None, help="lo:hi:count per axis, comma-separated across axes"
    )
    p_eval.add_argument(
        "--ref", default=None, help="reference point for a covariance column (comma-separated)"
    )
    p_eval.add_argument("--out", required=True, help="output CSV path")
    p_eval.set_defaults(handler=cmd_eval)

    p_scree = commands.add_parser("scree", help="sample-covariance spectrum as CSV")
    _add_io_flags(p_scree)
    p_scree.add_argument("--out", required=True, help="output CSV path")
    p_scree.set_defaults(handler=cmd_scree)

    p_cv = commands.add_parser("cv", help="tuning surfaces only, written as JSON")
    _add_io_flags(p_cv)
    _add_fit_flags(p_cv)
    p_cv.add_argument("--out", required=True, help="report JSON path")
    p_cv.set_defaults(handler=cmd_cv)

    p_sim = commands.add_parser("simulate", help="run a simulation experiment spec")
    p_sim.add_argument("--spec", required=True, help="experiment spec JSON (object or list)")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(handler=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.handler(args)
    except RhoTooSmallError as exc:
        print(f"spatpca: numerical error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"spatpca: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 3
    except Exception:  # noqa: BLE001, anything else is an internal error
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
