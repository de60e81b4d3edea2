"""Config-driven experiment runner with reproducible CSV/JSON artifacts.

Usage:
    lab run <config.json> [--out DIR] [--seed N]
    lab list [--json]

A config is a JSON object {"experiment": <tag>, "seed": <int>, "params":
{...}}; command-line flags override the top-level scalars.  Every run writes
its artifacts plus a manifest into <out>/<tag>/<timestamp>/ and exits 0 when
all asserted checks pass, 2 on a check failure, 1 on configuration or I/O
errors.  Numeric CSV content is deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Experiments


def _run_sphere_exact(params: dict, rng, outdir: Path):
    from . import modes1d

    ks = params.get("ks", [5, 10, 20, 40])
    radii = params.get("radii", [0.3, 0.6, 1.2])
    rows, ok = [], True
    for k in ks:
        for r in radii:
            exact = modes1d.sphere_exact_norm(int(k), float(r))
            quadr = modes1d.sphere_quadrature_norm(int(k), float(r))
            passed = abs(quadr - exact.value) <= exact.value * exact.remainder_bound
            ok &= passed
            rows.append([k, r, quadr, exact.value, exact.remainder_bound, str(passed)])
    _write_csv(outdir / "sphere_exact.csv",
               ["k", "r", "quadrature", "exact", "remainder_bound", "pass"], rows)
    return ok, {"cases": len(rows)}


def _run_revolve_decay(params: dict, rng, outdir: Path):
    from . import geometry, modes1d

    profile = geometry.make_profile(params.get("profile", "sphere"),
                                    params.get("profile_params", {}))
    k_max = int(params.get("k_max", 40))
    grid = int(params.get("grid_size", 2000))
    radii = params.get("radii", [0.3, 0.6, 0.25, 0.125, 0.0625, 0.03125])
    fam = modes1d.solve_family(profile, range(1, k_max + 1), 0, grid)
    report = modes1d.agmon_decay_check(fam, radii,
                                       slope_tol=float(params.get("slope_tol", 0.05)))
    fam.export_csv(outdir / "eigenvalues.csv")
    report.to_json(outdir / "decay_report.json")
    _write_csv(outdir / "blowup_ratios.csv", ["r", "slope_over_logr"],
               report.blowup_ratios())
    return report.passed, {"rows": len(report.rows)}


def _run_disk_decay(params: dict, rng, outdir: Path):
    from . import diskmodes

    n_lo = int(params.get("n_min", 15))
    n_hi = int(params.get("n_max", 60))
    r = float(params.get("r", 0.5))
    report = diskmodes.disk_decay_check(range(n_lo, n_hi + 1), r,
                                        beta=float(params.get("beta", 3.0)))
    report.to_json(outdir / "decay_report.json")
    row = report.rows[0]
    return report.passed, {"slope": row.slope, "target": row.dA_Rmax}


def _run_loc_constants(params: dict, rng, outdir: Path):
    from . import constants, geometry, modes1d

    a = float(params.get("a", 0.3))
    n_modes = int(params.get("n_modes", 30))
    basis = constants.IntervalSineBasis(n_modes, omega=(0.0, a))
    sig = constants.sigma_curve(basis)
    fs = constants.fit_k_sigma(sig)
    eig = constants.eig_curve(basis)
    fe = constants.fit_k_sigma(eig)
    Ts = np.asarray(params.get("Ts", [0.04, 0.05, 0.06, 0.07, 0.085, 0.1, 0.12, 0.16]))
    heat = constants.heat_curve(basis, Ts)
    fh = constants.fit_k_heat(heat)
    chain_i = constants.chain_check(fe, fh, fs)
    sig.export_csv(outdir / "interval_sigma.csv")
    heat.export_csv(outdir / "interval_heat.csv")

    profile = geometry.make_profile("sphere")
    fam = modes1d.solve_family(profile, range(1, int(params.get("k_max", 24)) + 1), 0, 2000)
    cap = float(params.get("cap_radius", 0.6))
    sb = constants.SphereCapBasis(fam, omega=cap)
    ssig = constants.sigma_curve(sb)
    sfs = constants.fit_k_sigma(ssig)
    seig = constants.eig_curve(sb)
    sfe = constants.fit_k_sigma(seig)
    sheat = constants.heat_curve(sb, np.asarray(params.get(
        "sphere_Ts", [0.02, 0.025, 0.03, 0.04, 0.05, 0.065, 0.08, 0.1])))
    sfh = constants.fit_k_heat(sheat)
    chain_s = constants.chain_check(sfe, sfh, sfs)
    ssig.export_csv(outdir / "sphere_sigma.csv")
    sheat.export_csv(outdir / "sphere_heat.csv")

    ok = (chain_i.ok and chain_s.ok
          and fs.constant >= 0.95 * (1.0 - a) / 2.0
          and fh.constant >= 0.9 * (1.0 - a) ** 2 / 4.0)
    _write_json(outdir / "constants.json", {
        "interval": {"K_sigma": fs.constant, "K_sigma_stderr": fs.stderr,
                     "K_eig": fe.constant, "K_heat": fh.constant,
                     "K_heat_stderr": fh.stderr, "chain_ok": chain_i.ok},
        "sphere": {"K_sigma": sfs.constant, "K_eig": sfe.constant,
                   "K_heat": sfh.constant, "chain_ok": chain_s.ok},
        "pass": ok,
    })
    return ok, {"interval_K_sigma": fs.constant, "interval_K_heat": fh.constant}


def _run_small_ball(params: dict, rng, outdir: Path):
    from . import constants

    x0 = float(params.get("x0", 0.5))
    radii = params.get("radii", [0.04, 0.02, 0.01, 0.005])
    js = params.get("js", list(range(4, 15)))
    basis = constants.IntervalSineBasis(int(max(js) + 2))
    lambdas = [(j * math.pi) ** 2 for j in js]
    rep = constants.small_ball_scaling(basis, x0, radii, lambdas)
    rows = []
    for i, lam in enumerate(rep.lambdas):
        for j, r in enumerate(rep.radii):
            rows.append([lam, r, rep.neg_log_loc[i, j]])
    _write_csv(outdir / "small_ball.csv", ["lambda", "r", "neg_log_loc"], rows)
    ok = rep.r2 >= float(params.get("r2_threshold", 0.95))
    _write_json(outdir / "scaling_fit.json",
                {"C1": rep.C1, "C2": rep.C2, "r2": rep.r2,
                 "envelope_factor": rep.envelope_factor, "pass": ok})
    return ok, {"C1": rep.C1, "C2": rep.C2, "r2": rep.r2}


def _run_carleman(params: dict, rng, outdir: Path):
    from . import carleman as K

    ok = True
    # 1D flat
    g1 = K.Grid(1, int(params.get("n1d", 257)))
    w1 = K.anchored_distance_weight(g1, -10.0, float(params.get("lambda_1d", 1.0)))
    sub1 = K.subellipticity_minima(w1, rng=rng)
    C0 = K.recommended_c0(sub1)
    tau0 = K.tau_threshold(w1, C0)
    rep1 = K.CarlemanReport(lam=w1.lam, C0=C0, tau0=tau0,
                            minB=sub1.minB, minE=sub1.minE)
    for _ in range(int(params.get("bumps_1d", 25))):
        v = K.random_bump(g1, rng)
        for mult in (1.0, 2.0, 4.0):
            rep1.rows.append(K.carleman_inequality_check(w1, v, mult * tau0, C0, tau0))
    rep1.to_json(outdir / "carleman_1d.json")
    ok &= rep1.passed

    # 2D flat + perturbed class
    g2 = K.Grid(2, int(params.get("n2d", 97)))
    anchor = (-10.0, 0.5)
    lstar = K.lambda_star(g2, anchor)
    lam2 = 2.0 * lstar
    w2 = K.anchored_distance_weight(g2, anchor, lam2)
    sub2 = K.subellipticity_minima(w2, rng=rng)
    C02 = K.recommended_c0(sub2)
    tau02 = K.tau_threshold(w2, C02)
    rep2 = K.CarlemanReport(lam=lam2, C0=C02, tau0=tau02,
                            minB=sub2.minB, minE=sub2.minE)
    for _ in range(int(params.get("bumps_2d", 15))):
        v = K.random_bump(g2, rng)
        for mult in (1.0, 2.0, 4.0):
            rep2.rows.append(K.carleman_inequality_check(w2, v, mult * tau02, C02, tau02))
    ok &= rep2.passed

    worst_min = math.inf
    for _ in range(int(params.get("n_metrics", 20))):
        m = K.sample_metric(g2, rng)
        wm = K.anchored_distance_weight(g2, anchor, lam2, metric=m)
        subm = K.subellipticity_minima(wm, rng=rng, directions=6)
        worst_min = min(worst_min, min(subm.minB, subm.minE))
        v = K.random_bump(g2, rng)
        for mult in (1.0, 2.0, 4.0):
            row = K.carleman_inequality_check(wm, v, mult * tau02, C02 / 2.0)
            rep2.rows.append(row)
            ok &= row.margin >= 0.0 or row.inconclusive
    uniform_ok = worst_min >= 0.5 * min(sub2.minB, sub2.minE)
    ok &= uniform_ok and rep2.passed
    rep2.to_json(outdir / "carleman_2d.json")

    ratios = {}
    for dim, pair in (("1d", (257, 513)), ("2d", (129, 257))):
        res = []
        for n in pair:
            gg = K.Grid(int(dim[0]), n)
            ww = K.anchored_distance_weight(
                gg, -10.0 if dim == "1d" else (-10.0, 0.5), 1.0 if dim == "1d" else 0.5)
            if dim == "1d":
                uu = K.smooth_bump(gg, 0.5, 0.3) * np.sin(2 * np.pi * gg.axes[0])
            else:
                X, Y = gg.meshgrid()
                uu = K.smooth_bump(gg, (0.5, 0.5), 0.3) * np.sin(2 * np.pi * X) * np.cos(np.pi * Y)
            res.append(K.conjugation_identity_residual(ww, uu, 1.0))
        ratios[dim] = res[0] / res[1]
        ok &= 3.5 <= ratios[dim] <= 4.5
    _write_json(outdir / "conjugation.json", {"refinement_ratios": ratios})
    return ok, {"worst_metric_min": worst_min, "ratios": ratios}


def _run_heatpos(params: dict, rng, outdir: Path):
    from . import heatpos as H

    geom = H.interval_geometry(int(params.get("n", 400)))
    x = geom.x
    u0 = 0.05 + np.exp(-((x - 0.7) / 0.08) ** 2)
    traj = H.solve_heat(geom, u0, float(params.get("T_liyau", 0.12)), 5e-4)
    mass0 = geom.total_mass(traj.values[0])
    drift = max(abs(geom.total_mass(v) - mass0) / mass0 for v in traj.values)
    positive = float(traj.values.min()) >= 0.0
    viol, worst = H.li_yau_random_suite(traj, int(params.get("n_liyau", 1000)), rng)

    obs = {}
    ok = positive and drift <= 1e-10 and viol == 0
    u0 = 0.01 + np.exp(-((x - 0.9) / 0.05) ** 2)
    for T in params.get("Ts", [0.05, 0.1]):
        tr = H.solve_heat(geom, u0, float(T), 2.5e-4)
        r1 = H.positive_observability_check(tr, float(T), eps=0.3, omega=(0.0, 0.2))
        r2 = H.positive_observability_check(tr, float(T), eps=0.3, z0=0.5)
        obs[f"T={T}"] = {"l2": r1.as_dict(), "pointwise": r2.as_dict()}
        ok &= r1.passed and r2.passed
    control = H.negative_control_example()
    ok &= control["control_behaves"]
    traj.export_csv(outdir / "trajectory.csv", stride=20)
    _write_json(outdir / "heatpos_report.json", {
        "mass_drift": drift, "positive": positive,
        "liyau_violations": viol, "liyau_worst_rel": worst,
        "observability": obs, "negative_control": control, "pass": ok,
    })
    return ok, {"liyau_violations": viol, "mass_drift": drift}


EXPERIMENTS = {
    "sphere-exact": (_run_sphere_exact,
                     "closed-form polar-cap norms of equatorial sphere modes vs quadrature"),
    "revolve-decay": (_run_revolve_decay,
                      "radial-mode decay slopes vs the Agmon distance on a revolution surface"),
    "disk-decay": (_run_disk_decay,
                   "whispering-gallery decay slopes vs the disk Agmon distance"),
    "loc-constants": (_run_loc_constants,
                      "localization curves, fitted tunneling constants, and their chain"),
    "small-ball": (_run_small_ball,
                   "log-radius scaling of localization on shrinking balls"),
    "carleman": (_run_carleman,
                 "convexified-weight subellipticity and weighted inequality margins"),
    "heatpos": (_run_heatpos,
                "positivity-preserving heat flow and observability of positive data"),
}


def run(config: dict, out_root=None, seed=None) -> int:
    tag = config.get("experiment")
    if tag not in EXPERIMENTS:
        sys.stderr.write(f"unknown experiment {tag!r}; available: "
                         f"{', '.join(sorted(EXPERIMENTS))}\n")
        return 1
    seed = int(seed if seed is not None else config.get("seed", 0))
    params = dict(config.get("params", {}))
    out_root = Path(out_root or config.get("out", "lab-out"))
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    outdir = out_root / tag / stamp
    k = 0
    while outdir.exists():
        k += 1
        outdir = out_root / tag / f"{stamp}-{k}"
    outdir.mkdir(parents=True)

    rng = np.random.default_rng(seed)
    start = time.time()
    try:
        ok, summary = EXPERIMENTS[tag][0](params, rng, outdir)
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    manifest = {
        "experiment": tag,
        "seed": seed,
        "params": params,
        "versions": _versions(),
        "wall_time_s": time.time() - start,
        "pass": ok,
        "summary": summary,
    }
    _write_json(outdir / "manifest.json", manifest)
    print(f"{tag}: {'PASS' if ok else 'FAIL'} ({outdir})")
    return 0 if ok else 2


def _versions() -> dict:
    import mpmath
    import scipy

    return {
        "obslab": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
    }


def list_experiments(as_json: bool = False) -> str:
    if as_json:
        return json.dumps({k: v[1] for k, v in sorted(EXPERIMENTS.items())}, indent=2)
    lines = [f"  {k:<15} {v[1]}" for k, v in sorted(EXPERIMENTS.items())]
    return "available experiments:\n" + "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_list = sub.add_parser("list", help="list the experiment catalog")
    p_list.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)

    if args.command == "list":
        print(list_experiments(args.json))
        return 0
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"cannot read config: {exc}\n")
        return 1
    if not isinstance(config, dict) or "experiment" not in config:
        sys.stderr.write("config must be a JSON object with an 'experiment' key\n")
        return 1
    return run(config, out_root=args.out, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
