"""Command-line experiment runner.

Every subcommand reads an optional JSON config, lets ``--seed`` and
``--samples`` override it, and writes ``<kind>.csv``, ``<kind>.json`` and a
figure ``<kind>.png`` into ``--out-dir``.  Exit status: 0 on success, 2 when
the config fails validation, 3 when a computation rejects its input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import convex, cr, floating, holo
from .numerics import Rejected, lattice_directions
from .report import STUDY_COLUMNS, plot_convergence, plot_series, write_csv, write_json

KINDS = ("constants", "ma-density", "feff-total", "transform-check", "tube-check",
         "float-convex", "float-holo")

DEFAULTS = {
    "constants": {"n_max": 4},
    "ma-density": {"domain": {"kind": "perturbed-ball", "n": 2, "eps": 0.05},
                   "points": 100, "samples": 1000},
    "feff-total": {"domain": {"kind": "ball", "n": 2}, "samples": 1_000_000},
    "transform-check": {"domain": {"kind": "ball", "n": 2}, "G": [[2, 0], [0, 1]],
                        "samples": 1_000_000},
    "tube-check": {"domain": {"kind": "tube", "profile": {"kind": "ellipse", "axes": [2, 1]}},
                   "points": 50, "imag": [[0.0, 0.0], [1.5, -2.0]], "samples": 1000},
    "float-convex": {"body": {"kind": "ball", "n": 3},
                     "delta_grid": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
                     "samples": 100_000, "convention": "oracle", "method": "auto"},
    "float-holo": {"domain": {"kind": "disk"},
                   "delta_grid": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5],
                   "samples": 1_000_000, "quantile_samples": 8192},
}

DENSITY_KINDS = ("ma-density", "feff-total", "transform-check", "tube-check")


class ConfigError(Exception):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = violations


def resolve_config(kind: str, config: dict | None = None, seed=None, samples=None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS.get(kind, {})))
    cfg.update(config or {})
    cfg.setdefault("kind", kind)
    if seed is not None:
        cfg["seed"] = int(seed)
    if samples is not None:
        cfg["samples"] = int(samples)
    return cfg


def _domain_desc(cfg):
    return cfg.get("domain") or {}


def validate(cfg: dict) -> list:
    """Precondition violations of a resolved config (empty when runnable)."""
    out = []
    kind = cfg.get("kind")
    if kind not in KINDS:
        return [f"unknown experiment kind {kind!r}"]
    if "seed" not in cfg:
        out.append("seed missing (no implicit entropy)")
    elif not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        out.append("seed must be a 64-bit non-negative integer")
    if kind != "constants":
        s = cfg.get("samples")
        if not isinstance(s, int) or s < 1000:
            out.append("samples must be an integer >= 1000")
    grid = cfg.get("delta_grid")
    if kind in ("float-convex", "float-holo"):
        if not grid:
            out.append("delta_grid missing")
        else:
            g = [float(d) for d in grid]
            if any(not d > 0 for d in g):
                out.append("delta_grid entries must be positive")
            if any(b >= a for a, b in zip(g, g[1:])):
                out.append("delta_grid not decreasing")
    if kind in DENSITY_KINDS or kind == "float-holo":
        desc = _domain_desc(cfg)
        if desc.get("kind") == "polydisk" and kind in DENSITY_KINDS:
            out.append("density undefined for polydisk")
        else:
            try:
                dom = cr.domain_from_descriptor(desc)
            except (Rejected, KeyError, TypeError, ValueError) as exc:
                out.append(f"invalid domain descriptor: {exc}")
                dom = None
            if dom is not None:
                if kind == "tube-check" and not isinstance(dom, cr.Tube):
                    out.append("tube-check needs a tube domain")
                if kind in ("feff-total", "transform-check", "float-holo") and not dom.bounded:
                    out.append("domain must be bounded")
                if kind == "float-holo" and grid and dom.volume is not None \
                        and float(grid[0]) >= dom.volume / 2:
                    out.append("delta_grid exceeds vol/2")
    if kind == "transform-check":
        try:
            G = cr._parse_complex_matrix(cfg.get("G", []))
            n = cr.domain_from_descriptor(_domain_desc(cfg)).n
            if G.shape != (n, n) or abs(np.linalg.det(G)) < 1e-14:
                out.append("G must be an invertible n x n matrix")
        except (Rejected, KeyError, TypeError, ValueError):
            out.append("G must be an invertible n x n matrix")
    if kind == "float-convex":
        try:
            body = convex.body_from_descriptor(cfg.get("body") or {})
            if grid and body.volume is not None and float(grid[0]) >= body.volume / 2:
                out.append("delta_grid exceeds vol/2")
            if grid and min(float(d) for d in grid) < 1e-8:
                out.append("smallest delta must be at least 1e-8")
            if body.n < 2:
                out.append("body dimension must be at least 2")
        except (Rejected, KeyError, TypeError, ValueError) as exc:
            out.append(f"invalid body descriptor: {exc}")
        if cfg.get("convention", "oracle") not in ("oracle", "printed", "both"):
            out.append("convention must be oracle, printed or both")
    if kind == "float-holo":
        K = cfg.get("K")
        if K is not None and (not isinstance(K, int) or K < 1):
            out.append("K must be a positive integer")
    return out


# ----------------------------------------------------------------------------
# experiments; each returns (csv columns, rows, summary, figure callback)

def _constants(cfg):
    rows = []
    for n in range(1, int(cfg.get("n_max", 4)) + 1):
        row = {"n": n, "C_n": holo.C_n_constant(n)}
        if n >= 2:
            row["c_n_printed"] = floating.c_n_constant(n, "printed")
            row["c_n_oracle"] = floating.c_n_constant(n, "oracle")
            row["printed_over_oracle"] = row["c_n_printed"] / row["c_n_oracle"]
        rows.append(row)
    summary = {"C_1": holo.C_n_constant(1), "sqrt_pi_over_2": math.sqrt(math.pi / 2)}

    def fig(path):
        ns = [r["n"] for r in rows]
        return plot_series(ns, {"C_n": [r["C_n"] for r in rows]}, path, "constants", "n", "value")

    return ("n", "c_n_printed", "c_n_oracle", "printed_over_oracle", "C_n"), rows, summary, fig


def _ma_density(cfg):
    dom = cr.domain_from_descriptor(_domain_desc(cfg))
    if isinstance(dom, cr.Tube):
        raise Rejected("use tube-check for tube domains")
    P = cr.boundary_points(dom, int(cfg.get("points", 100)), cfg["seed"])
    M = cr.monge_ampere(dom.jet(P))
    d1 = cr.fefferman_densities(dom, P)
    d2 = np.array([cr.fefferman_density_leviframe(dom, p) for p in P])
    rel = np.abs(d1 - d2) / np.abs(d1)
    rows = [{"index": i, "monge_ampere": M[i], "density": d1[i], "density_leviframe": d2[i],
             "relative_difference": rel[i]} for i in range(len(P))]
    summary = {"max_relative_difference": float(rel.max()), "mean_density": float(d1.mean())}

    def fig(path):
        return plot_series(np.arange(len(P)), {"monge-ampere path": d1, "levi-frame path": d2},
                           path, "invariant density at boundary samples", "sample", "density")

    cols = ("index", "monge_ampere", "density", "density_leviframe", "relative_difference")
    return cols, rows, summary, fig


def _feff_total(cfg):
    dom = cr.domain_from_descriptor(_domain_desc(cfg))
    est = cr.fefferman_total(dom, cfg["samples"], cfg["seed"], cfg.get("workers"))
    row = {"value": est.value, "std_error": est.std_error, "samples": est.samples,
           "seed": est.seed}
    summary = dict(row)
    if isinstance(dom, cr.ComplexBall) and dom.R == 1.0:
        n = dom.n
        ref = 2.0 ** ((n - 1) / (n + 1)) * 2 * math.pi ** n / math.gamma(n)
        summary["reference"] = ref
        summary["relative_gap"] = (est.value - ref) / ref
    return ("value", "std_error", "samples", "seed"), [row], summary, None


def _transform_check(cfg):
    dom = cr.domain_from_descriptor(_domain_desc(cfg))
    G = cr._parse_complex_matrix(cfg["G"])
    res = cr.transformation_check(dom, G, cfg["samples"], cfg["seed"], cfg.get("workers"))
    row = {"ratio": res.ratio, "expected": res.expected, "std_error": res.std_error,
           "relative_gap": (res.ratio - res.expected) / res.expected}
    return ("ratio", "expected", "std_error", "relative_gap"), [row], dict(row), None


def _tube_check(cfg):
    tube = cr.domain_from_descriptor(_domain_desc(cfg))
    prof = tube.profile
    npts = int(cfg.get("points", 50))
    q = lattice_directions(prof.n, npts) if prof.n > 1 else np.ones((1, 1))
    X = prof.boundary_point(q)
    rows = []
    for y in cfg.get("imag", [[0.0] * prof.n]):
        y = np.asarray(y, dtype=float)
        for i, x in enumerate(X):
            res = cr.tube_density_check(prof, x, y)
            rows.append({"index": i, "imag": json.dumps(y.tolist()), "density": res.density,
                         "reference": res.reference, "ratio": res.density / res.reference})
    ratios = np.array([r["ratio"] for r in rows])
    summary = {"mean_ratio": float(ratios.mean()),
               "max_relative_spread": float(np.ptp(ratios) / ratios.mean()),
               "expected_ratio": 1.0}

    def fig(path):
        return plot_series(np.arange(len(rows)), {"density / kappa^(1/(n+1))": ratios}, path,
                           "tube density ratio", "evaluation", "ratio")

    return ("index", "imag", "density", "reference", "ratio"), rows, summary, fig


def _float_convex(cfg):
    body = convex.body_from_descriptor(cfg["body"])
    conv = cfg.get("convention", "oracle")
    main = "oracle" if conv == "both" else conv
    kw = dict(samples=cfg["samples"], seed=cfg["seed"], method=cfg.get("method", "auto"),
              fit_exponent=cfg.get("fit_exponent"), workers=cfg.get("workers"))
    rep = floating.asa_limit_study(body, cfg["delta_grid"], convention=main, **kw)
    rows = rep.rows()
    summary = {"fitted_limit": rep.fitted_limit, "fit_exponent": rep.fit_exponent,
               "fit_residual": rep.fit_residual, "convention": main, "c_n": rep.constant}
    if body.smooth:
        ref = convex.affine_surface_area(body, 1 << 16, cfg["seed"],
                                         method="lattice" if body.n == 2 else "mc").value
    else:
        ref = 0.0
    summary["reference_asa"] = ref
    summary["relative_gap"] = (rep.fitted_limit - ref) / ref if ref else None
    if conv == "both":
        ratio = floating.convention_ratio(body.n)
        summary["printed_fitted_limit"] = rep.fitted_limit * ratio
        summary["printed_over_oracle"] = ratio
    rep.reference = ref or None

    def fig(path):
        return plot_convergence(rep, path, f"floating body, {body.tag}", rep.reference)

    return STUDY_COLUMNS, rows, summary, fig


def _float_holo(cfg):
    dom = cr.domain_from_descriptor(_domain_desc(cfg))
    rep = holo.holo_limit_study(dom, cfg["delta_grid"], K=cfg.get("K"), samples=cfg["samples"],
                              seed=cfg["seed"], quantile_samples=cfg.get("quantile_samples", 8192),
                              fit_exponent=cfg.get("fit_exponent"),
                              refine=cfg.get("refine", True), workers=cfg.get("workers"))
    K = rep.extra["K"]
    summary = {"fitted_limit": rep.fitted_limit, "fit_exponent": rep.fit_exponent,
               "fit_residual": rep.fit_residual, "reference_total": rep.reference,
               "relative_gap": rep.relative_gap, "K": K,
               "ratio_last_first": rep.extra["ratio_last_first"],
               "shell_width": rep.extra["shell_width"]}

    def fig(path):
        return plot_convergence(rep, path, f"holomorphic floating body, {dom.tag}", rep.reference)

    return STUDY_COLUMNS, rep.rows(K), summary, fig


RUNNERS = {"constants": _constants, "ma-density": _ma_density, "feff-total": _feff_total,
           "transform-check": _transform_check, "tube-check": _tube_check,
           "float-convex": _float_convex, "float-holo": _float_holo}


def run(cfg: dict, out_dir: Path, figures: bool = True) -> dict:
    """Run a resolved config; raises ConfigError or Rejected."""
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    kind = cfg["kind"]
    cols, rows, summary, fig = RUNNERS[kind](cfg)
    out_dir = Path(out_dir)
    paths = {"csv": str(write_csv(out_dir / f"{kind}.csv", cols, rows))}
    if figures and fig is not None:
        paths["figure"] = str(fig(out_dir / f"{kind}.png"))
    summary = {"kind": kind, "config": cfg, "result": summary, "outputs": paths}
    paths["json"] = str(out_dir / f"{kind}.json")
    write_json(paths["json"], summary)
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holofloat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS + ("validate",):
        sp = sub.add_parser(kind)
        if kind == "validate":
            sp.add_argument("experiment", choices=KINDS)
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--out-dir", type=Path, default=Path("out"))
        sp.add_argument("--no-figures", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = args.experiment if args.command == "validate" else args.command
    config = {}
    if args.config is not None:
        try:
            config = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
        if config.get("kind", kind) != kind:
            print(f"error: config kind {config.get('kind')!r} does not match {kind!r}",
                  file=sys.stderr)
            return 2
    cfg = resolve_config(kind, config, args.seed, args.samples)
    if args.command == "validate":
        problems = validate(cfg)
        for p in problems:
            print(p)
        return 2 if problems else 0
    try:
        summary = run(cfg, args.out_dir, figures=not args.no_figures)
    except ConfigError as exc:
        for p in exc.violations:
            print(f"validation failed: {p}", file=sys.stderr)
        return 2
    except Rejected as exc:
        print(f"numerical rejection: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"kind": kind, "result": summary["result"],
                      "outputs": summary["outputs"]}, indent=2, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
