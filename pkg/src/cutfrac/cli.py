"""Command line drivers: single solves, convergence studies and diagnostics."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import presets
from .domain import Analytic, FracturedDomain, coercivity_indicator, verify_partial_integration
from .errors import CutFracError, ParameterError
from .fem import SolutionField, assemble, discretize, solve
from .post import (
    coercivity_terms,
    convergence_rates,
    energy_error,
    exact_solution,
    export_csv,
    export_vtk,
    point_balance,
)

DEFAULT_TAU1 = 1e-2
DEFAULT_TAU2 = 1e-3


@dataclass
class RunConfig:
    source: str = "example1"
    variant: str | None = None
    nx: list = field(default_factory=lambda: [10])
    tau1: float = DEFAULT_TAU1
    tau2: float = DEFAULT_TAU2
    out: str | None = None
    vtk: bool = False
    csv: bool = False
    check: bool = False
    deterministic: bool = False
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.nx, (int, np.integer)):
            self.nx = [int(self.nx)]
        self.validate()

    def validate(self) -> None:
        if not (isinstance(self.tau1, (int, float)) and self.tau1 > 0):
            raise ParameterError(f"tau1 must be positive, got {self.tau1}")
        if not (isinstance(self.tau2, (int, float)) and self.tau2 >= 0):
            raise ParameterError(f"tau2 must be nonnegative, got {self.tau2}")
        if not self.nx or any(int(n) != n or n < 2 for n in self.nx):
            raise ParameterError(f"nx must be integers >= 2, got {self.nx}")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")

    @property
    def output_dir(self) -> Path:
        return Path(self.out or os.environ.get("CUTFRAC_OUT") or "out")

    @property
    def threads(self) -> int:
        return 1 if self.deterministic else self.workers

    def load_domain(self) -> FracturedDomain:
        path = Path(self.source)
        if self.source.endswith(".json") and path.is_file():
            data = json.loads(path.read_text())
            variants = data.pop("variants", {})
            if self.variant is not None:
                data = presets.apply_overrides(data, variants[self.variant])
            return FracturedDomain.from_json(data)
        return presets.load_preset(self.source, self.variant)


def parse_config(path=None, **overrides) -> RunConfig:
    """Build a RunConfig from an optional JSON file; keyword overrides win.

    Unknown keys in the file are rejected.  ``None`` overrides are ignored so
    that unset command line flags fall back to the file or the defaults.
    """
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text() or "{}")
        except json.JSONDecodeError as err:
            raise ParameterError(f"malformed config {path}: {err}") from None
        if not isinstance(data, dict):
            raise ParameterError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


# ---------------------------------------------------------------------------
# drivers


def _solve(domain, nx, cfg: RunConfig) -> SolutionField:
    disc = discretize(domain, nx, workers=cfg.threads)
    return solve(assemble(disc.dofmap, cfg.tau1, cfg.tau2, cfg.threads))


def _slug(domain) -> str:
    return (domain.name or "domain").replace("/", "_")


def run_solve(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    domain = cfg.load_domain()
    nx = cfg.nx[0]
    t0 = time.perf_counter()
    u = _solve(domain, nx, cfg)
    A, b = u.system.A, u.system.b
    res = float(np.abs(A @ u.coefficients - b)[np.setdiff1d(np.arange(u.dofmap.n), u.pinned)].max())
    print(f"domain {domain.name}  nx={nx}  h={u.cut.h:.6g}  dofs={u.dofmap.n}  pinned={len(u.pinned)}", file=stream)
    print(f"solve residual {res:.3e}  time {time.perf_counter() - t0:.3f}s", file=stream)
    print(f"coercivity indicator min(2 alpha + Div beta) = {coercivity_indicator(domain):.6g}", file=stream)
    for p in domain.points:
        print(f"point {p.cid}: u0={u.eval_fe(p.cid, p.x):.10g}  balance upwind={point_balance(u, p.cid):.3e}"
              f"  raw={point_balance(u, p.cid, 'raw'):.3e}", file=stream)
    exact = exact_solution(domain)
    rows = []
    if len(exact) == len(list(domain.components())):
        rep = energy_error(u, exact, cfg.tau1, cfg.tau2)
        for cid, c in rep.components.items():
            print(f"component {cid}: L2 error {c.l2:.6e}", file=stream)
        print(f"total: L2 {rep.l2:.6e}  energy {rep.energy:.6e}", file=stream)
        rows = list(rep.rows())
    if cfg.vtk or cfg.csv:
        outdir = cfg.output_dir
        outdir.mkdir(parents=True, exist_ok=True)
        stem = f"{_slug(domain)}_nx{nx}"
        if cfg.vtk:
            export_vtk(u, domain, outdir / f"{stem}.vtk")
            print(f"wrote {outdir / (stem + '.vtk')}", file=stream)
        if cfg.csv:
            if not rows:
                rows = [{"d": cid.d, "i": cid.i, "dof": k, "u": float(v)}
                        for cid in u.dofmap.offsets
                        for k, v in zip(range(u.dofmap.component_slice(cid).start,
                                              u.dofmap.component_slice(cid).stop), u.component(cid))]
            export_csv(rows, outdir / f"{stem}.csv")
            print(f"wrote {outdir / (stem + '.csv')}", file=stream)
    return 0


def convergence_table(domain, cfg: RunConfig):
    exact = exact_solution(domain)
    levels = sorted(set(cfg.nx))
    if len(levels) < 3:
        raise ParameterError("a convergence study needs at least 3 mesh levels")
    rows = []
    for nx in levels:
        u = _solve(domain, nx, cfg)
        rep = energy_error(u, exact, cfg.tau1, cfg.tau2)
        rows.append({"nx": nx, "h": rep.h, "dofs": rep.ndofs, "l2": rep.l2, "energy": rep.energy})
    l2 = convergence_rates([(r["h"], r["l2"]) for r in rows])
    en = convergence_rates([(r["h"], r["energy"]) for r in rows])
    for k, r in enumerate(rows):
        r["rate_l2"] = l2.pairwise[k - 1] if k else float("nan")
        r["rate_energy"] = en.pairwise[k - 1] if k else float("nan")
    return rows, l2, en


def run_convergence(cfg: RunConfig, enforce: bool = False, stream=None) -> int:
    stream = stream or sys.stdout
    domain = cfg.load_domain()
    rows, l2, en = convergence_table(domain, cfg)
    print(f"{'nx':>4} {'h':>10} {'dofs':>6} {'L2':>12} {'energy':>12} {'rate L2':>8} {'rate E':>8}", file=stream)
    for r in rows:
        print(f"{r['nx']:>4} {r['h']:>10.4g} {r['dofs']:>6} {r['l2']:>12.4e} {r['energy']:>12.4e}"
              f" {r['rate_l2']:>8.3f} {r['rate_energy']:>8.3f}", file=stream)
    print(f"least-squares slope: L2 {l2.slope:.3f}  energy {en.slope:.3f}", file=stream)
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"converge_{_slug(domain)}.csv"
    export_csv(rows, path, ["nx", "h", "dofs", "l2", "energy", "rate_l2", "rate_energy"])
    print(f"wrote {path}", file=stream)
    if enforce and not en.slope >= 1.4:
        print(f"energy slope {en.slope:.3f} below 1.4", file=stream)
        return 1
    return 0


def run_check(cfg: RunConfig, stream=None, samples: int = 10) -> int:
    stream = stream or sys.stdout
    domain = cfg.load_domain()
    ok = True

    def report(name, value, tol):
        nonlocal ok
        good = bool(value <= tol)
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} {name}: {value:.3e} (tol {tol:.0e})", file=stream)

    v = Analytic(lambda x: x[:, 0] + x[:, 1], lambda x: np.tile([1.0, 1.0], (len(x), 1)))
    w = Analytic(lambda x: x[:, 0] * x[:, 1], lambda x: x[:, ::-1].copy())
    report("partial integration residual", verify_partial_integration(domain, v, w), 1e-10)
    disc = discretize(domain, cfg.nx[0], workers=cfg.threads)
    system = assemble(disc.dofmap, cfg.tau1, cfg.tau2, cfg.threads)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(samples):
        c = rng.standard_normal(disc.dofmap.n)
        lhs = float(c @ (system.A @ c))
        rhs = coercivity_terms(SolutionField(c, disc.dofmap), cfg.tau1, cfg.tau2)["total"]
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    report("discrete coercivity identity (relative)", worst, 1e-8)
    u = solve(system)
    scale = max(u.max_abs(), 1e-300)
    for p in domain.points:
        report(f"point balance at {p.cid} (relative)", point_balance(u, p.cid) / scale, 1e-6)
    print(f"coercivity indicator min(2 alpha + Div beta) = {coercivity_indicator(domain):.6g}", file=stream)
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def _nx_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutfrac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("source", help="preset name or path to a domain JSON file")
        p.add_argument("--variant", default=None, help="preset variant")
        p.add_argument("--config", default=None, help="JSON file with run settings")
        p.add_argument("--tau1", type=float, default=None)
        p.add_argument("--tau2", type=float, default=None)
        p.add_argument("--out", default=None, help="output directory (default $CUTFRAC_OUT or ./out)")
        p.add_argument("--deterministic", action="store_true", default=None,
                       help="single-threaded assembly")
        p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("run", help="solve one problem")
    common(p)
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--vtk", action="store_true", default=None)
    p.add_argument("--csv", action="store_true", default=None)
    p.add_argument("--check", action="store_true", default=None, help="also run the identity diagnostics")

    p = sub.add_parser("converge", help="convergence study against the exact solution")
    common(p)
    p.add_argument("--nx", type=_nx_list, default=None, help="comma separated levels, e.g. 5,10,20,40")
    p.add_argument("--enforce", action="store_true", help="exit 1 if the energy slope is below 1.4")

    p = sub.add_parser("check", help="identity and balance diagnostics")
    common(p)
    p.add_argument("--nx", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    src = args.source
    if not (src.endswith(".json") and Path(src).is_file()) and src not in presets.available():
        parser.error(f"unknown preset or file {src!r}; presets: {', '.join(presets.available())}")
    nx = args.nx
    if args.command == "converge" and nx is None:
        nx = [5, 10, 20, 40]
    try:
        cfg = parse_config(
            args.config, source=src, variant=args.variant, nx=nx, tau1=args.tau1, tau2=args.tau2,
            out=args.out, deterministic=args.deterministic, workers=args.workers,
            vtk=getattr(args, "vtk", None), csv=getattr(args, "csv", None), check=getattr(args, "check", None),
        )
        if args.command == "run":
            status = run_solve(cfg)
            return run_check(cfg) if cfg.check else status
        if args.command == "converge":
            return run_convergence(cfg, args.enforce)
        return run_check(cfg)
    except CutFracError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2 if isinstance(err, ParameterError) else 1


if __name__ == "__main__":
    sys.exit(main())

