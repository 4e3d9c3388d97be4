# trilayer_magic/cli.py
"""
Command line surface. Every subcommand resolves a RunConfig, runs one
experiment, writes CSV/JSON under <out.dir>/<command>/ together with
config.json (resolved config plus provenance) and returns an exit code:
0 on success, 2 for invalid configuration, 3 for a numerical contract
violation.
"""
import argparse
import logging
import os
import sys
import time
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .config import LOG_LEVEL, RunConfig, load_run_config, parse_complex, parse_fraction
from .errors import ConfigError, TrilayerError
from .core_engine import asymptotics, bands, birman_schwinger, chern, theta, traces
from .core_engine.fourier_ops import HEX, Truncation, as_alpha_pair
from .core_engine.lattice import TwistConfig, derive_config, stacking_point
from .core_engine.potential import resolve_potential
from .core_engine.utils import OMEGA, halton_points, write_csv, write_json

logger = logging.getLogger(__name__)

# CLI flag -> dotted config key
FLAG_KEYS = {
    "zeta1": "twist.zeta1",
    "zeta": "twist.ratio",
    "hop_ratio": "hop.ratio",
    "potential_u": "potential.u",
    "potential_v": "potential.v",
    "n": "trunc.n",
    "tol": "tol.magic",
    "grid": "grid.n",
    "out": "out.dir",
    "workers": "workers",
}


# --- Helper functions ---
def parse_alpha(text: Optional[str], cfg: RunConfig, twist: TwistConfig):
    """'a' means alpha12 = a with alpha23 from the hop ratio; 'a,b' gives both. Returns operator orientation."""
    if text is None:
        raise ConfigError("--alpha is required for this command")
    parts = [p for p in str(text).split(",") if p.strip()]
    if len(parts) == 1:
        return birman_schwinger.effective_alpha(twist, parse_complex(parts[0]), cfg.hop_ratio)
    if len(parts) == 2:
        a12, a23 = parse_complex(parts[0]), parse_complex(parts[1])
        return (a23, a12) if twist.flipped else (a12, a23)
    raise ConfigError(f"cannot read a hopping pair from {text!r}")


def parse_pair(text: Optional[str], default=(0.0, 0.0)):
    if text is None:
        return as_alpha_pair(default)
    parts = [p for p in str(text).split(",") if p.strip()]
    if len(parts) == 1:
        value = parse_complex(parts[0])
        return value, value
    if len(parts) == 2:
        return parse_complex(parts[0]), parse_complex(parts[1])
    raise ConfigError(f"cannot read a pair from {text!r}")


class Run:
    """Resolved inputs and the output directory of one subcommand."""

    def __init__(self, command: str, cfg: RunConfig, args: argparse.Namespace):
        self.command = command
        self.cfg = cfg
        self.args = args
        self.started = time.time()
        self.out_dir = os.path.join(cfg.out_dir, command)
        self.outputs: List[str] = []
        self._twist = None

    @property
    def twist(self) -> TwistConfig:
        if self._twist is None:
            self._twist = derive_config(self.cfg.zeta1, self.cfg.ratio)
        return self._twist

    @property
    def truncation(self) -> Truncation:
        return Truncation(self.cfg.n)

    def pot_u(self):
        return resolve_potential(self.cfg.potential_u)

    def pot_v(self):
        return resolve_potential(self.cfg.potential_v)

    def csv(self, name: str, header, rows) -> str:
        path = write_csv(os.path.join(self.out_dir, name), header, rows)
        self.outputs.append(path)
        return path

    def json(self, name: str, payload: dict) -> str:
        path = write_json(os.path.join(self.out_dir, name), payload)
        self.outputs.append(path)
        return path

    def provenance(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.cfg.config_hash(),
            "version": __version__,
            "wall_time_s": round(time.time() - self.started, 3),
            "outputs": [os.path.basename(p) for p in self.outputs],
        }

    def finish(self) -> None:
        write_json(os.path.join(self.out_dir, "config.json"),
                   {"config": self.cfg.to_dict(), "provenance": self.provenance()})


# --- Subcommands ---
def cmd_magic(run: Run) -> dict:
    twist, pot = run.twist, run.pot_u()
    found = birman_schwinger.discover(twist, pot, run.cfg.hop_ratio, run.truncation, run.args.count)
    rows = []
    for magic in found:
        if run.args.verify and birman_schwinger.is_canonical(magic.alpha12):
            pair = birman_schwinger.effective_alpha(twist, magic.alpha12, run.cfg.hop_ratio)
            magic.verified, magic.residual = birman_schwinger.verify_magic(
                pair, twist, pot, run.truncation, tol=run.cfg.tol, workers=run.cfg.workers)
        rows.append([magic.alpha12.real, magic.alpha12.imag, magic.multiplicity,
                     int(magic.verified), "" if magic.residual is None else magic.residual])
    run.csv("magic.csv", ["alpha_re", "alpha_im", "multiplicity", "verified", "residual"], rows)
    return {"twist": twist.to_dict(), "count": len(found),
            "closure": birman_schwinger.symmetry_closure(found)}


def cmd_bands(run: Run) -> dict:
    twist = run.twist
    alpha = parse_alpha(run.args.alpha, run.cfg, twist)
    alpha_tilde = parse_pair(run.args.alpha_tilde)
    grid = bands.band_structure(alpha, alpha_tilde, twist, run.pot_u(), run.pot_v(),
                                bands.default_k_grid(run.cfg.grid_n, twist), run.args.j_max,
                                run.truncation, workers=run.cfg.workers, progress=not run.args.quiet)
    run.csv("bands.csv", grid.header(), grid.csv_rows())
    run.json("bands.json", grid.metadata)
    return {"points": len(grid.ks), "bands": grid.j_max}


def cmd_wronskian_scan(run: Run) -> dict:
    ts = np.linspace(run.args.alpha_min, run.args.alpha_max, run.args.steps)
    rows = bands.wronskian_scan(ts, run.cfg.hop_ratio, run.twist, run.pot_u(), run.truncation,
                                run.cfg.tol, run.cfg.workers, progress=not run.args.quiet)
    run.csv("wronskian.csv", ["alpha", "abs_W"], rows)
    return {"samples": len(rows), "min_abs_W": min(w for _, w in rows) if rows else None}


def cmd_trace(run: Run) -> dict:
    compare = run.args.compare
    N = run.cfg.n if compare in ("numeric", "all") else None
    report = traces.trace_report(run.args.ell, run.cfg.ratio, run.cfg.hop_ratio,
                                 N=N, pot=run.pot_u())
    if compare == "numeric":
        report["combinatorial"] = None
    run.json("trace.json", report)
    return report


def cmd_theta_check(run: Run) -> dict:
    n = run.args.points
    pts = halton_points(2 * n, (-2.0, -2.0), (2.0, 2.0))
    zs = pts[:n, 0] + 1j * pts[:n, 1]
    ks = (pts[n:, 0] + 1j * pts[n:, 1]) / 2
    a1 = theta.GAMMA3_SCALE
    a2 = theta.GAMMA3_SCALE * OMEGA
    zeta = zs / theta.GAMMA3_SCALE
    th = theta.theta1(zeta)
    residuals = {
        "theta_shift_1": float(np.max(np.abs(theta.theta1(zeta + 1) + th))),
        "theta_shift_omega": float(np.max(np.abs(
            theta.theta1(zeta + OMEGA) + np.exp(-np.pi * 1j * OMEGA - 2j * np.pi * zeta) * th))),
        "F_periodic": 0.0,
        "G_quasi_periodic": 0.0,
    }
    for z, k in zip(zs, ks):
        f0 = theta.F_k(z, k)
        for a in (a1, a2):
            residuals["F_periodic"] = max(residuals["F_periodic"], abs(theta.F_k(z + a, k) - f0) / max(1.0, abs(f0)))
            g0 = theta.G_k(z, k)
            phase = np.exp(1j * np.real(a * np.conj(k)))
            residuals["G_quasi_periodic"] = max(residuals["G_quasi_periodic"],
                                                abs(theta.G_k(z + a, k) - phase * g0) / max(1.0, abs(g0)))
    report = {"points": run.args.points, "residuals": residuals}
    if run.args.alpha is not None:
        twist, pot = run.twist, run.pot_u()
        alpha = parse_alpha(run.args.alpha, run.cfg, twist)
        hexagon = Truncation(run.cfg.n, HEX)
        kernel = bands.kernel_function(alpha, twist, pot, hexagon)
        zeros = bands.zero_locator(kernel.vector, kernel.basis)
        z_star = next((z.z for z in zeros if z.label in ("+z_S", "-z_S")), stacking_point())
        result = theta.bloch_from_kernel(kernel.vector, kernel.basis, z_star, birman_schwinger.DISCOVERY_K,
                                         (0.0, 0.0), alpha, twist, pot, hexagon)
        report["bloch"] = {"z_star": z_star, "residual": result.residual,
                           "zeros": [(z.z, z.order, z.label) for z in zeros]}
    run.json("theta_check.json", report)
    return report


def cmd_chern(run: Run) -> dict:
    twist, pot = run.twist, run.pot_u()
    alpha = parse_alpha(run.args.alpha, run.cfg, twist)
    m = run.args.multiplicity or birman_schwinger.multiplicity(alpha, twist, pot, run.truncation, run.cfg.tol,
                                                               workers=run.cfg.workers)
    results = {}
    if run.args.method in ("kernel", "both"):
        results["kernel"] = chern.chern_number(alpha, m, twist, pot, run.truncation, run.cfg.grid_n,
                                               workers=run.cfg.workers).to_dict()
    if run.args.method in ("theta", "both"):
        if m != 1:
            raise ConfigError("theta frames need a simple flat band")
        results["theta"] = chern.theta_frame_chern(alpha, twist, pot, run.truncation, run.cfg.grid_n).to_dict()
    run.json("chern.json", results)
    return results


def cmd_touch(run: Run) -> dict:
    twist = run.twist
    alpha = parse_alpha(run.args.alpha, run.cfg, twist)
    report = bands.band_touch_locator(alpha, twist, run.pot_u(), run.truncation, run.cfg.tol)
    run.json("touch.json", report)
    return report


def cmd_squeeze(run: Run) -> dict:
    twist = run.twist
    beta = parse_pair(run.args.beta, (1.0, 1.0))
    pot = run.pot_u()
    value, ok = asymptotics.nondegeneracy_check(pot)
    if not ok:
        logger.warning("Re dU/dz(0) = %.3e: potential fails the non-degeneracy condition", value)
    ts = np.linspace(run.args.t_min, run.args.t_max, run.args.steps)
    report = asymptotics.squeeze_experiment(beta, twist, pot, ts, j_max=run.args.j_max,
                                            truncation=run.truncation, workers=run.cfg.workers,
                                            progress=not run.args.quiet)
    run.csv("squeeze.csv", report.header(), report.csv_rows())
    summary = report.to_dict()
    summary.pop("energies")
    summary["nondegeneracy"] = {"value": value, "passed": ok}
    run.json("squeeze.json", summary)
    return summary


def cmd_bracket(run: Run) -> dict:
    twist = run.twist
    beta = parse_pair(run.args.beta, (1.0, 1.0))
    rows = asymptotics.bracket_grid(beta, twist.p, twist.ratio, run.pot_u(), run.cfg.grid_n)
    run.csv("bracket.csv", ["x", "y", "value"], rows)
    spec = {"grid": run.cfg.grid_n, "beta": beta, "p": twist.p, "r": str(twist.ratio)}
    run.json("bracket.json", spec)
    return spec


def cmd_antichiral(run: Run) -> dict:
    alpha_tilde = parse_pair(run.args.alpha_tilde, (1.0, 1.0))
    report = bands.antichiral_gap_scan(alpha_tilde, run.twist, run.pot_v(), truncation=run.truncation,
                                       workers=run.cfg.workers)
    run.json("antichiral.json", {"alpha_tilde": alpha_tilde, "min": report["min"], "argmin": report["argmin"]})
    return {"min": report["min"], "argmin": report["argmin"]}


def cmd_sweep(run: Run) -> dict:
    ratios = [parse_fraction(r) for r in run.args.ratios.split(",")]
    hops = [parse_complex(h) for h in run.args.hop_ratios.split(",")]
    items = [(r, h) for r in ratios for h in hops]
    rows = birman_schwinger.sweep(items, run.pot_u(), run.truncation, run.args.count, run.cfg.zeta1,
                                  run.args.verify, run.cfg.tol, run.cfg.workers, progress=not run.args.quiet)
    run.csv("sweep.csv", birman_schwinger.SWEEP_HEADER, birman_schwinger.sweep_csv_rows(rows, run.cfg.n))
    return {"rows": len(rows), "errors": sum(1 for r in rows if r["error"])}


def cmd_discontinuity(run: Run) -> dict:
    zeta2 = run.args.zeta2 if run.args.zeta2 is not None else run.cfg.zeta1 * float(run.cfg.ratio_fraction)
    rows = traces.discontinuity_sequence(run.cfg.zeta1, zeta2, run.args.n_max, run.cfg.hop_ratio)
    run.csv("discontinuity.csv", ["n", "zeta2", "p", "S4", "S4_over_p2"],
            [[r["n"], r["zeta2"], r["p"], r["S4"], r["S4_over_p2"]] for r in rows])
    limit = traces.discontinuity_limit(run.cfg.zeta1, zeta2 / run.cfg.zeta1, run.cfg.hop_ratio)
    return {"rows": len(rows), "limit": limit}


COMMANDS: Dict[str, Callable[[Run], dict]] = {
    "magic": cmd_magic,
    "bands": cmd_bands,
    "wronskian-scan": cmd_wronskian_scan,
    "trace": cmd_trace,
    "theta-check": cmd_theta_check,
    "chern": cmd_chern,
    "touch": cmd_touch,
    "squeeze": cmd_squeeze,
    "bracket": cmd_bracket,
    "antichiral": cmd_antichiral,
    "sweep": cmd_sweep,
    "discontinuity": cmd_discontinuity,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value run config")
    common.add_argument("--zeta1", type=float)
    common.add_argument("--zeta", "--zeta-ratio", dest="zeta", help="twist ratio zeta2/zeta1, e.g. 7/4")
    common.add_argument("--hop-ratio", dest="hop_ratio")
    common.add_argument("--potential-u", dest="potential_u")
    common.add_argument("--potential-v", dest="potential_v")
    common.add_argument("--n", type=int, help="truncation radius")
    common.add_argument("--tol", type=float)
    common.add_argument("--grid", type=int)
    common.add_argument("--out")
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true", help="no progress bars")

    parser = argparse.ArgumentParser(prog="trilayer-magic", description="Chiral twisted trilayer graphene experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("magic", parents=[common], help="discover and verify magic parameters")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--no-verify", dest="verify", action="store_false")

    p = sub.add_parser("bands", parents=[common], help="band structure on a k-grid")
    p.add_argument("--alpha", default="0")
    p.add_argument("--alpha-tilde", dest="alpha_tilde")
    p.add_argument("--j-max", dest="j_max", type=int, default=6)

    p = sub.add_parser("wronskian-scan", parents=[common], help="|W| along real alpha")
    p.add_argument("--alpha-min", dest="alpha_min", type=float, default=0.1)
    p.add_argument("--alpha-max", dest="alpha_max", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=60)

    p = sub.add_parser("trace", parents=[common], help="tr B_k^l three ways")
    p.add_argument("--ell", type=int, default=2)
    p.add_argument("--compare", choices=["numeric", "combinatorial", "all"], default="all")

    p = sub.add_parser("theta-check", parents=[common], help="theta, F_k, G_k identities and the theta construction")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--alpha")

    p = sub.add_parser("chern", parents=[common], help="Chern number of the flat band")
    p.add_argument("--alpha")
    p.add_argument("--multiplicity", type=int)
    p.add_argument("--method", choices=["kernel", "theta", "both"], default="kernel")

    p = sub.add_parser("touch", parents=[common], help="band touching point at a simple magic alpha")
    p.add_argument("--alpha")

    p = sub.add_parser("squeeze", parents=[common], help="exponential squeezing along alpha = t beta")
    p.add_argument("--beta")
    p.add_argument("--t-min", dest="t_min", type=float, default=0.0)
    p.add_argument("--t-max", dest="t_max", type=float, default=8.0)
    p.add_argument("--steps", type=int, default=33)
    p.add_argument("--j-max", dest="j_max", type=int, default=6)

    p = sub.add_parser("bracket", parents=[common], help="bracket field heatmap")
    p.add_argument("--beta")

    p = sub.add_parser("antichiral", parents=[common], help="anti-chiral spectral gap")
    p.add_argument("--alpha-tilde", dest="alpha_tilde")

    p = sub.add_parser("sweep", parents=[common], help="magic parameters over ratio and hop grids")
    p.add_argument("--ratios", default="1")
    p.add_argument("--hop-ratios", dest="hop_ratios", default="1")
    p.add_argument("--count", type=int, default=6)
    p.add_argument("--verify", action="store_true")

    p = sub.add_parser("discontinuity", parents=[common], help="S4 along zeta2^(n)")
    p.add_argument("--zeta2", type=float)
    p.add_argument("--n-max", dest="n_max", type=int, default=4)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {key: getattr(args, flag) for flag, key in FLAG_KEYS.items() if getattr(args, flag, None) is not None}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, _overrides(args))
        run = Run(args.command, cfg, args)
        logger.info("running %s with config %s", args.command, cfg.config_hash()[:12])
        summary = COMMANDS[args.command](run)
        run.finish()
    except TrilayerError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    logger.info("%s finished: %s", args.command, summary)
    print(f"{args.command}: outputs in {run.out_dir}")
    return 0


__all__ = ["COMMANDS", "build_parser", "main", "parse_alpha", "parse_pair"]
