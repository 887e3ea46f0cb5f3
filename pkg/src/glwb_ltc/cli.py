"""Command-line front end: ``glwb-ltc <command> [options]``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from typing import List, Optional, Sequence

from . import config as cfgmod
from . import montecarlo, pricer, rates
from .grid import AccountGrid
from .params import ConfigError

log = logging.getLogger("glwb_ltc")

EXIT_CONFIG = 2


def _ints(s: str) -> List[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _floats(s: str) -> List[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (defaults: standard parameters)")
    common.add_argument("--engine", choices=("tree", "mc", "mc-cv"), default="tree")
    common.add_argument("--strategy", choices=pricer.KINDS)
    common.add_argument("--N", type=int, help="tree steps per year")
    common.add_argument("--fA", type=float, dest="f_A", help="account grid range factor")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--out", dest="output_dir", help="output directory for CSV files")
    common.add_argument("--no-timings", action="store_true",
                        help="write 0 in timing columns so reruns give identical files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="glwb-ltc", description="Price GLWB contracts with an LTC rider.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("price", parents=[common], help="contract value at inception")
    sub.add_parser("fair-fee", parents=[common], help="fee rate that makes the contract fair")
    sw = sub.add_parser("sweep", parents=[common], help="fair fee or price along one parameter")
    sw.add_argument("--axis", required=True, choices=pricer.SWEEP_AXES)
    sw.add_argument("--values", type=_floats, default=[], help="comma-separated axis values")
    sw.add_argument("--quantity", choices=("fair_alpha_bps", "price"), default="fair_alpha_bps")
    am = sub.add_parser("action-map", parents=[common], help="optimal withdrawal choice per node")
    am.add_argument("--n", type=_ints, default=[1, 8, 20], dest="anniversaries")
    am.add_argument("--h", type=_ints, default=[1, 4], dest="healths")
    sub.add_parser("validate-mc", parents=[common], help="compare tree and Monte Carlo fair fees")
    sub.add_parser("dump-lattice", parents=[common], help="write the rate lattice and account grid")
    return p


class Runner:
    def __init__(self, args: argparse.Namespace, cfg: cfgmod.RunConfig):
        self.args = args
        self.cfg = cfg
        self.timings = not args.no_timings

    def secs(self, s: float) -> float:
        return round(s, 3) if self.timings else 0.0

    def header(self) -> str:
        return "".join(f"# {ln}\n" for ln in self.cfg.to_ini().splitlines())

    def path(self, stem: str, extra: str = "") -> str:
        tag = hashlib.sha256((self.cfg.digest() + extra).encode()).hexdigest()[:12]
        os.makedirs(self.cfg.output_dir, exist_ok=True)
        return os.path.join(self.cfg.output_dir, f"{stem}-{tag}.csv")

    def write(self, path: str, body: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.header())
            fh.write(body)
        print(f"wrote {path}")

    # --- commands -----------------------------------------------------------
    def price(self) -> int:
        c, m, n = self.cfg.contract, self.cfg.market, self.cfg.numeric
        if self.args.engine != "tree":
            est = (montecarlo.simulate_price_static_cv(c, m, self.cfg.mc.paths, self.cfg.mc.seed)
                   if self.args.engine == "mc-cv" else
                   montecarlo.simulate_price_static(c, m, self.cfg.mc.paths, self._mc_steps(), self.cfg.mc.seed))
            print(f"price {est.mean:.6f} +/- {est.half_width:.6f} ({est.n_paths} paths)")
            est.wall_seconds = self.secs(est.wall_seconds)
            self.write(self.path("price-" + self.args.engine),
                       montecarlo.McEstimate.CSV_HEADER + "\n" + est.csv_row(self.cfg.digest()) + "\n")
            return 0
        res = pricer.TreePricer(c, m, n.N, n.f_A).price(self.cfg.strategy)
        print(f"price {res.price_at_inception:.6f} (alpha {c.alpha * 1e4:.4f} bps, {res.strategy}, "
              f"N={n.N}, f_A={n.f_A:g}, {res.diagnostics['seconds']:.2f}s)")
        body = ("x0,strategy,alpha_bps,price,N,f_A,seconds\n"
                f"{c.x0},{res.strategy},{c.alpha * 1e4:.6f},{res.price_at_inception:.10f},{n.N},{n.f_A:g},"
                f"{self.secs(res.diagnostics['seconds'])}\n")
        self.write(self.path("price"), body)
        return 0

    def _mc_steps(self) -> int:
        return self.cfg.mc.steps_per_year if self.cfg.market.is_cir else 1

    def _require_static(self):
        if self.cfg.numeric.strategy != pricer.STATIC:
            raise ConfigError("numeric.strategy", "Monte Carlo supports the static strategy only")

    def _check_engine(self):
        if self.args.engine == "mc-cv" and self.cfg.market.is_cir:
            raise ConfigError("engine", "mc-cv needs closed-form control means, "
                                        "which exist only in bs-constant-rate mode")
        if self.args.engine != "tree":
            self._require_static()

    def fair_fee(self) -> int:
        c, m, n, mc = self.cfg.contract, self.cfg.market, self.cfg.numeric, self.cfg.mc
        if self.args.engine == "tree":
            ff = pricer.fair_fee(c, m, self.cfg.strategy, n.N, n.f_A, tol_bps=n.tol_bps,
                                 max_iter=n.max_iter, two_stage=n.two_stage)
            print(f"fair alpha {ff.bps:.4f} bps ({ff.iterations} iterations, {ff.seconds:.2f}s)")
            body = ("x0,strategy,engine,fair_alpha_bps,half_width_bps,iterations,seconds\n"
                    f"{c.x0},{self.cfg.numeric.strategy},tree,{ff.bps:.6f},,{ff.iterations},{self.secs(ff.seconds)}\n")
        else:
            ff = montecarlo.fair_fee_mc(c, m, mc.paths, self._mc_steps(), mc.seed,
                                        cv=self.args.engine == "mc-cv", tol_bps=n.tol_bps)
            print(f"fair alpha {ff.bps:.4f} +/- {ff.half_width_bps:.4f} bps ({ff.n_paths} paths)")
            body = ("x0,strategy,engine,fair_alpha_bps,half_width_bps,iterations,seconds\n"
                    f"{c.x0},static,{self.args.engine},{ff.bps:.6f},{ff.half_width_bps:.6f},"
                    f"{ff.iterations},{self.secs(ff.seconds)}\n")
        self.write(self.path("fair-fee-" + self.args.engine), body)
        return 0

    def sweep(self) -> int:
        a = self.args
        if not a.values:
            print("no sweep values given; nothing to do")
            return 0
        n = self.cfg.numeric
        rows = pricer.sweep(a.axis, a.values, self.cfg.contract, self.cfg.market, self.cfg.strategy,
                            n.N, n.f_A, quantity=a.quantity, tol_bps=n.tol_bps, max_iter=n.max_iter,
                            two_stage=n.two_stage)
        lines = [f"{a.axis},{a.quantity},seconds,error"]
        for r in rows:
            lines.append(f"{r[a.axis]:g},{r[a.quantity]:.6f},{self.secs(r['seconds'])},{r['error']}")
            print(f"{a.axis}={r[a.axis]:g}  {a.quantity}={r[a.quantity]:.4f}  {r['error']}")
        extra = f"{a.axis}|{a.values}|{a.quantity}"
        self.write(self.path(f"sweep-{a.axis}", extra), "\n".join(lines) + "\n")
        return 0

    def action_map(self) -> int:
        a, n = self.args, self.cfg.numeric
        strategy = self.cfg.strategy
        if strategy.kind not in (pricer.DYNAMIC, pricer.FULL_DYNAMIC):
            strategy = pricer.Strategy(pricer.DYNAMIC, n.gamma_mesh)
        maps = pricer.optimal_action_map(self.cfg.contract, self.cfg.market, a.anniversaries,
                                         a.healths, strategy, n.N, n.f_A)
        extra = f"{a.anniversaries}|{a.healths}|{strategy.kind}"
        self.write(self.path("action-map", extra), pricer.action_maps_csv(maps))
        return 0

    def validate_mc(self) -> int:
        self._require_static()
        c, m, n, mc = self.cfg.contract, self.cfg.market, self.cfg.numeric, self.cfg.mc
        tree = pricer.fair_fee(c, m, pricer.Strategy(), n.N, n.f_A, tol_bps=n.tol_bps,
                               two_stage=n.two_stage)
        print(f"tree fair alpha {tree.bps:.4f} bps")
        engines = ["mc"] if m.is_cir else ["mc", "mc-cv"]
        lines = [montecarlo.McEstimate.CSV_HEADER]
        ok = True
        for eng in engines:
            ff = montecarlo.fair_fee_mc(c, m, mc.paths, self._mc_steps(), mc.seed, cv=eng == "mc-cv",
                                        tol_bps=n.tol_bps)
            inside = ff.contains(tree.alpha)
            ok &= inside
            print(f"{eng} fair alpha {ff.bps:.4f} +/- {ff.half_width_bps:.4f} bps; "
                  f"tree value {'inside' if inside else 'OUTSIDE'} the interval")
            est = montecarlo.McEstimate(ff.bps, ff.half_width_bps, ff.n_paths, ff.steps_per_year,
                                        ff.seed, self.secs(ff.seconds))
            lines.append(est.csv_row(f"{self.cfg.digest()}-{eng}"))
        lines.append(f"{self.cfg.digest()}-tree,{tree.bps:.10g},0,0,{n.N},0,{self.secs(tree.seconds)}")
        self.write(self.path("validate-mc"), "\n".join(lines) + "\n")
        return 0 if ok else 1

    def dump_lattice(self) -> int:
        c, m, n = self.cfg.contract, self.cfg.market, self.cfg.numeric
        if m.is_cir:
            lat = rates.build(m, c.horizon, n.N)
        else:
            lat = rates.RateLattice.constant(m.r0, c.horizon, n.N)
        self.write(self.path("rate-lattice"), lat.to_csv())
        grid = AccountGrid.build(c.P, m.sigma_F, 1.0 / n.N, n.f_A)
        body = "j,A\n" + "".join(f"{j},{a:.12g}\n" for j, a in enumerate(grid.values))
        self.write(self.path("account-grid"), body)
        return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        cfg = cfgmod.with_overrides(cfg, N=args.N, f_A=args.f_A, strategy=args.strategy,
                                    paths=args.paths, seed=args.seed, output_dir=args.output_dir)
        runner = Runner(args, cfg)
        if args.command in ("fair-fee", "price"):
            runner._check_engine()
        return getattr(runner, args.command.replace("-", "_"))()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pricer.InfeasibleFeeError, pricer.NumericalFailure, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
