"""Command-line runner: ``grad-reduce <subcommand> --config path.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import ScalingReport, aim_scaling_experiment
from .errors import CheckFailed, ConfigInvalid, GradReduceError, SlopeAssertionFailed
from .io import RunManifest, write_csv
from .ldp import (ActionSettings, FourierTestFunction, mane_estimate, mane_upper_bound,
                  polish_critical_point, quasi_potential_infty, relax)
from .reduction import find_equilibria, unique_equilibria
from .stochastic import (DensityGrid, SdeConfig, equilibrium_free_energy, fokker_planck_evolve,
                         fp_max_dt, free_energy, l1_distance, relative_entropy, simulate_sde,
                         stationary_density)

log = logging.getLogger("gradreduce")

COMMANDS = ("reduce", "aim-scaling", "sde", "fokker-planck", "quasipotential", "mane")


def _mu_cols(m):
    return [f"mu_{j}" for j in range(1, m + 1)]


def default_seeds(m: int, amplitudes=(0.5, 1.0, 1.5)) -> np.ndarray:
    seeds = [np.zeros(m)]
    for j in range(m):
        for a in amplitudes:
            for s in (1, -1):
                e = np.zeros(m)
                e[j] = s * a
                seeds.append(e)
    return np.array(seeds)


# -- subcommands ------------------------------------------------------------------


def cmd_reduce(cfg: ExperimentConfig, out: Path, man: RunManifest, check: bool):
    rp = cfg.reduced_potential()
    b, m = rp.basis, rp.m
    margin = out / "margin.csv"
    write_csv(margin, ["m", "lambda_m", "lambda_m_plus_1", "C", "q", "C_over_lambda_m"],
              [(m, b.eigenvalues[m - 1], b.eigenvalues[m], rp.potential.lipschitz_bound,
                rp.q, rp.head_margin)])
    seeds = cfg["reduction"].get("seeds")
    seeds = np.array(seeds, dtype=float) if seeds else default_seeds(m)
    if seeds.shape[1] != m:
        raise ConfigInvalid(f"reduction/seeds must have {m} entries each")
    eqs = unique_equilibria(find_equilibria(rp, seeds))
    eq_path = out / "equilibria.csv"
    write_csv(eq_path, ["index", "kind", "morse_index", "energy", "residual_norm",
                        "gradient_norm"] + _mu_cols(m),
              [(i, e.kind, e.morse_index, e.energy, e.residual_norm, e.gradient_norm, *e.mu)
               for i, e in enumerate(eqs)])
    sc = cfg["reduction"]["scan"]
    s = np.linspace(sc["lower"], sc["upper"], sc["n"])
    mus = np.zeros((s.size, m))
    mus[:, 0] = s
    W = rp.energy(mus)
    scan = out / "w_scan.csv"
    write_csv(scan, _mu_cols(m) + ["W"], [(*mu, w) for mu, w in zip(mus, W)])
    for p in (margin, eq_path, scan):
        man.add_output(p)
    man.summary.update(q=rp.q, head_margin=rp.head_margin, n_equilibria=len(eqs),
                       max_residual=max((e.residual_norm for e in eqs), default=0.0),
                       kinds=[e.kind for e in eqs])
    if check and any(e.residual_norm > 1e-8 for e in eqs):
        raise CheckFailed("an equilibrium lifts with full residual above 1e-8")


def cmd_aim_scaling(cfg: ExperimentConfig, out: Path, man: RunManifest, check: bool):
    d = cfg["dynamics"]
    b, pot = cfg.basis(), cfg.potential()
    u0 = np.zeros(b.n_modes)
    u0[: len(d["u0"])] = d["u0"]
    rep = aim_scaling_experiment(b, pot, u0, d["cutoffs"], d["T"], d["dt"],
                                 save_every=d["save_every"],
                                 burn_in_threshold=d["burn_in_threshold"],
                                 tol=cfg["reduction"]["tol"])
    rows = out / "scaling.csv"
    write_csv(rows, list(ScalingReport.COLUMNS), rep.rows)
    win = d["slope_windows"]
    slope_rows, bad = [], []
    for name, slope in rep.slopes.items():
        lo, hi = win[name]
        ok = bool(lo <= slope <= hi)
        slope_rows.append((name, slope, rep.kappa[name], lo, hi, ok))
        if not ok:
            bad.append(f"{name}={slope:.3f} not in [{lo}, {hi}]")
    slopes = out / "slopes.csv"
    write_csv(slopes, ["quantity", "slope", "kappa", "lower", "upper", "within"], slope_rows)
    man.add_output(rows)
    man.add_output(slopes)
    man.summary.update(t_star=rep.t_star, slopes=rep.slopes, kappa=rep.kappa)
    if check and bad:
        raise SlopeAssertionFailed("; ".join(bad))


def cmd_sde(cfg: ExperimentConfig, out: Path, man: RunManifest, check: bool):
    s = cfg["sde"]
    land = cfg.landscape()
    mu0 = np.asarray(s.get("mu0", np.zeros(cfg.dim)), dtype=float)
    sc = SdeConfig(s["nu"], s["dt"], s["n_paths"], s["seed"])
    ens = simulate_sde(mu0, land, sc, s["T"])
    path = out / "ensemble.csv"
    write_csv(path, ["path_id"] + _mu_cols(cfg.dim),
              [(i, *x) for i, x in enumerate(ens.endpoints)])
    man.add_output(path)
    man.summary.update(n_paths=int(ens.endpoints.shape[0]), n_blown=ens.n_blown,
                       lipschitz_estimate=ens.lipschitz_estimate,
                       mean=ens.endpoints.mean(axis=0).tolist() if len(ens.endpoints) else [])
    if check and ens.n_blown:
        raise CheckFailed(f"{ens.n_blown} paths blew up")


def _fp_grid(cfg: ExperimentConfig) -> DensityGrid:
    f = cfg["fp"]
    if cfg.dim > 2:
        raise ConfigInvalid(f"fokker-planck supports m <= 2, configured m = {cfg.dim}")
    for k in ("lower", "upper", "n_cells"):
        if k not in f:
            raise ConfigInvalid(f"fp/{k} is required for fokker-planck")
    return DensityGrid.empty(f["lower"], f["upper"], f["n_cells"])


def _density_rows(p: DensityGrid):
    pts = p.points().reshape(-1, p.dim)
    return [(i, *x, v) for i, (x, v) in enumerate(zip(pts, p.values.ravel()))]


def cmd_fokker_planck(cfg: ExperimentConfig, out: Path, man: RunManifest, check: bool):
    f = cfg["fp"]
    land = cfg.landscape()
    grid = _fp_grid(cfg)
    nu = f["nu"]
    peq = stationary_density(land, nu, grid)
    p0 = peq if f["init"] == "gibbs" else grid.point_mass(f["x0"])
    dt = f["dt"]
    if dt is None:
        n = int(np.ceil(f["T"] / (0.9 * fp_max_dt(grid, land, nu))))
        dt = f["T"] / n
    tr = fokker_planck_evolve(p0, land, nu, f["T"], dt, save_every=f["save_every"])
    cols = ["cell_index"] + _mu_cols(grid.dim) + ["p"]
    stat = write_csv(out / "stationary.csv", cols, _density_rows(peq))
    fin = write_csv(out / "density.csv", cols, _density_rows(tr.final))
    psi_eq = equilibrium_free_energy(land, nu, grid)
    diag = [(t, p.mass(), relative_entropy(p, peq), free_energy(p, land, nu))
            for t, p in zip(tr.times, tr.densities)]
    dpath = write_csv(out / "fp_diagnostics.csv", ["t", "mass", "relative_entropy", "free_energy"],
                      diag)
    for p in (stat, fin, dpath):
        man.add_output(p)
    H = np.array([r[2] for r in diag])
    mass_err = max(abs(r[1] - 1.0) for r in diag)
    man.summary.update(dt=dt, equilibrium_free_energy=psi_eq, mass_error=mass_err,
                       final_relative_entropy=float(H[-1]),
                       final_l1_to_equilibrium=l1_distance(tr.final, peq),
                       max_entropy_increase=float(np.max(np.diff(H), initial=0.0)))
    if check and (mass_err > 1e-10 or np.any(np.diff(H) > 1e-10)):
        raise CheckFailed("mass or relative-entropy monotonicity check failed")


def _settings(cfg):
    l = cfg["ldp"]
    return ActionSettings(alpha=l["alpha"], optimizer=l["optimizer"], tol=l["tol"],
                          max_iter=l["max_iter"])


def _well(cfg, land):
    """x_hat from the config, else the lowest minimum reachable from the default seeds."""
    x_hat = cfg["ldp"].get("x_hat")
    if x_hat is not None:
        return polish_critical_point(land, x_hat)
    cands = relax(land, default_seeds(cfg.dim), T=30.0, dt=2e-2)
    W = np.asarray(land.energy(cands))
    return polish_critical_point(land, cands[int(np.argmin(W))])


def _box(cfg, sec, x_hat, n_default):
    s = cfg["ldp"].get(sec, {})
    lo = np.asarray(s.get("lower", x_hat - 1.0), dtype=float)
    hi = np.asarray(s.get("upper", x_hat + 1.0), dtype=float)
    n = s.get("n", [n_default] * cfg.dim)
    axes = [np.linspace(a, b, k) for a, b, k in zip(lo, hi, n)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cfg.dim)


def cmd_quasipotential(cfg: ExperimentConfig, out: Path, man: RunManifest, check: bool):
    l = cfg["ldp"]
    land = cfg.landscape()
    st = _settings(cfg)
    x_hat = _well(cfg, land)
    pts = _box(cfg, "scan", x_hat, 5)
    w_hat = float(land.energy(x_hat))
    ends = relax(land, pts)
    rows, bad = [], []
    factor = 4 * st.alpha
    for x, e in zip(pts, ends):
        r = quasi_potential_infty(x, x_hat, land, st, T0=l["T0"], K0=l["K"], rel_tol=l["rel_tol"])
        dW = float(land.energy(x)) - w_hat
        in_basin = bool(np.linalg.norm(e - x_hat) < 1e-3)
        rows.append((x, r.value, dW, in_basin, r.converged))
        if in_basin and abs(r.value - factor * dW) > 0.01 * abs(factor * dW) + 1e-6:
            bad.append(f"x={x.tolist()}: V={r.value:.6g}, {factor:g}(W-W_hat)={factor * dW:.6g}")
    path = write_csv(out / "quasipotential.csv", _mu_cols(cfg.dim) + ["V"],
                     [(*x, v) for x, v, *_ in rows])
    chk = write_csv(out / "quasipotential_check.csv",
                    _mu_cols(cfg.dim) + ["V", "W_minus_W_hat", "in_basin", "converged"],
                    [(*x, v, dW, b, c) for x, v, dW, b, c in rows])
    man.add_output(path)
    man.add_output(chk)
    man.summary.update(x_hat=x_hat.tolist(), alpha=st.alpha, n_points=len(rows),
                       n_in_basin=sum(r[3] for r in rows), failures=bad)
    if check and bad:
        raise CheckFailed("; ".join(bad))


def cmd_mane(cfg: ExperimentConfig, out: Path, man: RunManifest, check: bool):
    mc = cfg["ldp"]["mane"]
    land = cfg.landscape()
    st = _settings(cfg)
    x_hat = _well(cfg, land)
    pts = _box(cfg, "mane", x_hat, 21 if cfg.dim == 1 else (11 if cfg.dim == 2 else 7))
    crit = x_hat[None]
    rng = np.random.default_rng(mc["seed"])
    zero = mane_upper_bound(lambda x: np.zeros_like(np.asarray(x, dtype=float)), land, pts, st, crit)
    tests = [FourierTestFunction.random(rng, cfg.dim) for _ in range(mc["n_test_functions"])]
    vals = [mane_upper_bound(t.gradient, land, pts, st, crit) for t in tests]
    fam = tests[0] if tests else FourierTestFunction.random(rng, cfg.dim)
    thetas = np.linspace(-1.0, 1.0, 21)
    c_est, theta, fvals = mane_estimate(lambda t: fam.scaled(t).gradient, thetas, land, pts, st,
                                        crit)
    rows = [(0, "zero", 0.0, zero)]
    rows += [(i + 1, "random_fourier", 1.0, v) for i, v in enumerate(vals)]
    rows += [(len(rows) + i, "family", t, v) for i, (t, v) in enumerate(zip(thetas, fvals))]
    path = write_csv(out / "mane.csv", ["test_id", "kind", "theta", "bound"], rows)
    man.add_output(path)
    man.summary.update(c_estimate=c_est, theta_best=float(theta), zero_bound=zero,
                       min_random_bound=float(min(vals)) if vals else None,
                       x_hat=x_hat.tolist())
    if check and (abs(c_est) > 1e-8 or (vals and min(vals) < -1e-8)):
        raise CheckFailed(f"c estimate {c_est:.3g} not 0 within 1e-8")


HANDLERS = {
    "reduce": cmd_reduce,
    "aim-scaling": cmd_aim_scaling,
    "sde": cmd_sde,
    "fokker-planck": cmd_fokker_planck,
    "quasipotential": cmd_quasipotential,
    "mane": cmd_mane,
}


def run(command: str, cfg: ExperimentConfig, out: Path | None = None, check: bool = False
        ) -> RunManifest:
    """Run one subcommand, writing CSVs and ``manifest.json`` into ``out``."""
    out = Path(out if out is not None else cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["sde"]["seed"] if command == "sde" else (
        cfg["ldp"]["mane"]["seed"] if command == "mane" else None)
    man = RunManifest(command, cfg.sha256(), seed, __version__, cfg.data)
    HANDLERS[command](cfg, out, man, check)
    man.write(out)
    return man


def verify_manifest(path, workers: int | None = None) -> bool:
    """Re-run the command recorded in a manifest and compare output checksums."""
    import os

    old = RunManifest.load(path)
    cfg = ExperimentConfig.from_dict(old.config)
    env = os.environ.get("GRAD_REDUCE_THREADS")
    try:
        if workers is not None:
            os.environ["GRAD_REDUCE_THREADS"] = str(workers)
        with tempfile.TemporaryDirectory() as tmp:
            new = run(old.command, cfg, Path(tmp))
    finally:
        if env is None:
            os.environ.pop("GRAD_REDUCE_THREADS", None)
        else:
            os.environ["GRAD_REDUCE_THREADS"] = env
    return new.checksums() == old.checksums()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grad-reduce", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--assert", dest="check", action="store_true",
                       help="exit non-zero if the command's acceptance check fails")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("verify", help="re-run a manifest and compare checksums")
    p.add_argument("--manifest", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            ok = verify_manifest(args.manifest, args.workers)
            print("checksums match" if ok else "checksums differ")
            return 0 if ok else 3
        cfg = ExperimentConfig.load(args.config)
        man = run(args.command, cfg, args.out, args.check)
    except GradReduceError as exc:
        print(f"grad-reduce {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(man.summary, indent=2, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
