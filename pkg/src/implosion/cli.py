"""Command-line pipeline: profile | verify | spectrum | simulate | portrait.

Stages hand over through files in the output directory.  ``profile``
writes profile.csv/profile.json; the later stages read profile.json and
rebuild the curve from the stored speed, which is deterministic.

Exit codes
    0   success
    1   parameter error
    2   no root in the shooting bracket
    3   crossing or continuation failure
    4   repulsivity margins not positive
    5   spectral assembly or eigensolver failure
    6   simulation stopped early (vacuum, blowup, step underflow)
    7   stationarity bound exceeded
    8   other profile error
    64  missing or corrupted input file
    78  invalid configuration
"""

import argparse
import copy
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io, params as params_mod, profile as prof, repulsivity, simulate as sim, spectral, emden
from .profile import ProfileCurve

log = logging.getLogger("implosion")

EXIT = dict(ok=0, parameter=1, no_root=2, crossing=3, margins=4, spectrum=5,
            stopped=6, stationarity=7, profile=8, input=64, config=78)

DEFAULTS = {
    "params": {"d": 3, "gamma": 2.0, "mu": 0.0, "mu_prime": 0.0, "regime": "Euler"},
    "profile": {"r_lo": 1.01, "r_hi": None, "bracket": None, "tol_r": 1e-12, "per_unit": 8,
                "s_max": 12.0, "Z_max_factor": 1e6, "n_P": 2.0, "tau": 0.0},
    "verify": {"n": 4000, "outer_factor": 1e3},
    "spectrum": {"a": spectral.A_DEFAULT, "N": 128, "threshold": spectral.THRESHOLD, "rel": 1e-4,
                 "invariance": True, "seed": 0},
    "simulate": {"n": 1000, "Z_out": None, "tau_end": 1.0, "cadence": 0.1, "snapshot_cadence": 0.5,
                 "cfl": sim.CFL, "dampened": False, "perturbation": None,
                 "convention": "derived", "stationarity_bound": None, "norms": False,
                 "rates": False, "check": None},
    "portrait": {"r": None, "window": [-0.5, 1.5, 0.0, 1.5], "n": 41},
}

# keys whose values must be strictly positive when set
POSITIVE = {"tol_r", "per_unit", "s_max", "Z_max_factor", "n", "outer_factor", "N", "threshold",
            "rel", "tau_end", "cadence", "snapshot_cadence", "cfl", "stationarity_bound", "a",
            "n_P", "Z_out"}


class ConfigError(ValueError):
    pass


class InputError(IOError):
    pass


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and out[k]:
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path):
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise InputError(f"config file {path} not found")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config blocks: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if "ell" in raw.get("params", {}) and "gamma" not in raw.get("params", {}):
        cfg["params"].pop("gamma")
    validate(cfg)
    return cfg


def validate(cfg):
    for block, vals in cfg.items():
        if not isinstance(vals, dict):
            continue
        for k, v in vals.items():
            if k in POSITIVE and v is not None:
                if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                    raise ConfigError(f"{block}.{k} must be a positive number, got {v!r}")
    br = cfg["profile"]["bracket"]
    if br is not None and (len(br) != 2 or not br[0] < br[1]):
        raise ConfigError("profile.bracket must be [r_lo, r_hi] with r_lo < r_hi")
    if cfg["simulate"]["convention"] not in sim.TIME_CONVENTIONS:
        raise ConfigError(f"simulate.convention must be one of {sorted(sim.TIME_CONVENTIONS)}")
    if len(cfg["portrait"]["window"]) != 4:
        raise ConfigError("portrait.window must be [w_min, w_max, sigma_min, sigma_max]")


def prepare_out(out):
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}")
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def make_params(cfg, r=None):
    rec = dict(cfg["params"])
    if r is not None:
        rec["r"] = r
    return params_mod.from_record(rec)


# ---------------------------------------------------------------- profile

PROFILE_COLUMNS = ["Z", "w", "sigma", "lam_w", "lam_sigma", "rho_P", "dPsi_P", "Q", "Psi_P"]


def cmd_profile(cfg, out, threads=1):
    p = make_params(cfg)
    pc = cfg["profile"]
    if pc["bracket"] is not None:
        res = prof.shoot_speed(p, tuple(pc["bracket"]), pc["tol_r"])
        curve = prof.build_curve(p.with_speed(res.r), Z_max_factor=pc["Z_max_factor"])
        curve.crossing["shoot"] = dict(r=res.r, miss=res.miss, bracket=list(res.bracket),
                                       evaluations=res.evaluations)
    else:
        curve = prof.find_profile(p, pc["r_lo"], pc["r_hi"], pc["tol_r"], pc["per_unit"], pc["s_max"],
                                  workers=threads, Z_max_factor=pc["Z_max_factor"], log=log.info)
    pr = curve.params
    log.info("r = %.15g, Z2 = %.15g", curve.r, curve.Z2)
    phys = prof.reconstruct_physical(curve, include_origin=False)
    if np.any(phys.rho_P <= 0):
        raise prof.ProfileError("density not positive on the grid")
    damp = prof.dampen(phys, pc["n_P"], pc["tau"])
    h = io.config_hash(cfg)
    f = curve.fields(curve.grid)
    io.write_csv(out / "profile.csv", PROFILE_COLUMNS,
                 dict(Z=curve.grid, w=curve.w, sigma=curve.sigma, lam_w=curve.lam_w,
                      lam_sigma=curve.lam_sigma, rho_P=phys.rho_P, dPsi_P=phys.dPsi_P, Q=phys.Q,
                      Psi_P=f.psi), h)
    io.write_csv(out / "dampened.csv", ["x", "rho_D", "u_D"],
                 dict(x=damp.x, rho_D=damp.rho_D, u_D=damp.u_D), h)
    crossing = {k: v for k, v in curve.crossing.items() if not k.startswith("series_")}
    meta = dict(params=pr.record(), r=curve.r, Z2=curve.Z2, c_w=curve.c_w, c_sigma=curve.c_sigma,
                Z_max=curve.Z_max, tail_slope=curve.tail_slope, c_P=phys.c_P, c_Psi=phys.c_Psi,
                r_star=pr.r_star, r_plus=pr.r_plus, crossing=crossing, rows=len(curve.grid),
                dampening=dict(n_P=damp.n_P, tau=damp.tau, cutoff=list(damp.cutoff),
                               tail_gap=damp.tail_gap),
                max_abs_lam_w=float(np.max(np.abs(curve.lam_w))))
    io.write_json(out / "profile.json", meta, h)
    return EXIT["ok"]


def load_profile(out, need_csv=True):
    """(metadata, tabulated curve or None); raises InputError on missing/corrupt files."""
    try:
        meta = io.read_json(out / "profile.json")
    except FileNotFoundError:
        raise InputError(f"{out / 'profile.json'} not found; run the profile stage first")
    except io.CorruptFile as exc:
        raise InputError(str(exc))
    for k in ("params", "r", "Z2", "c_w", "c_sigma"):
        if meta.get(k) is None:
            raise InputError(f"profile.json lacks {k}")
    if not need_csv:
        return meta, None
    try:
        cmeta, cols = io.read_csv(out / "profile.csv")
    except FileNotFoundError:
        raise InputError(f"{out / 'profile.csv'} not found")
    except (io.CorruptFile, OSError, UnicodeDecodeError) as exc:
        raise InputError(f"corrupted profile.csv: {exc}")
    missing = [c for c in PROFILE_COLUMNS if c not in cols]
    if missing:
        raise InputError(f"profile.csv lacks columns {missing}")
    if cmeta.get("config_hash") != meta.get("config_hash"):
        raise InputError("profile.csv and profile.json come from different runs")
    if len(cols["Z"]) != meta.get("rows") or np.any(np.diff(cols["Z"]) <= 0):
        raise InputError("profile.csv rows are truncated or unsorted")
    p = params_mod.from_record(meta["params"])
    curve = ProfileCurve(meta["r"], cols["Z"], cols["w"], cols["sigma"], cols["lam_w"],
                         cols["lam_sigma"], meta["Z2"], meta["c_w"], meta["c_sigma"],
                         meta.get("crossing", {}), meta.get("Z_max"), meta.get("tail_slope"),
                         None, p)
    return meta, curve


def rebuild_curve(meta, cfg):
    """Curve with evaluator from the speed stored in profile.json."""
    p = params_mod.from_record(meta["params"])
    curve = prof.build_curve(p, Z_max_factor=cfg["profile"]["Z_max_factor"])
    if abs(curve.Z2 - meta["Z2"]) > 1e-9 * meta["Z2"]:
        raise InputError(f"rebuilt Z2={curve.Z2!r} disagrees with stored {meta['Z2']!r}")
    return curve


# ---------------------------------------------------------------- verify

def _halved(curve):
    """Every other row, keeping the sonic row."""
    keep = np.zeros(len(curve.grid), bool)
    keep[::2] = True
    keep[int(np.argmin(np.abs(curve.grid - curve.Z2)))] = True
    keep[-1] = True
    return ProfileCurve(curve.r, curve.grid[keep], curve.w[keep], curve.sigma[keep], curve.lam_w[keep],
                        curve.lam_sigma[keep], curve.Z2, curve.c_w, curve.c_sigma, curve.crossing,
                        curve.Z_max, curve.tail_slope, None, curve.params)


def cmd_verify(cfg, out, threads=1):
    meta, curve = load_profile(out)
    vc = cfg["verify"]
    rep = repulsivity.margins(curve, curve.params, outer_factor=vc["outer_factor"])
    half = repulsivity.margins(_halved(curve), curve.params, outer_factor=vc["outer_factor"])
    stab = {k: abs(rep.margins[k] - half.margins[k]) for k in rep.margins}
    doc = rep.to_json()
    doc.update(params=curve.params.record(), halving_change=stab,
               regime=curve.params.regime, d=curve.params.d)
    if curve.params.regime == "NavierStokes":
        doc["verdicts"]["compatibility"] = bool(curve.params.e > 0)
        doc["verdicts"]["pass"] = bool(doc["verdicts"]["pass"] and curve.params.e > 0)
    h = io.config_hash(cfg)
    io.write_csv(out / "repulsivity.csv", ["Z", "F", "q_inside_1", "q_inside_2", "q_outside"],
                 dict(Z=rep.grid, F=rep.F, q_inside_1=rep.q_inside_1, q_inside_2=rep.q_inside_2,
                      q_outside=rep.q_outside), h)
    io.write_json(out / "repulsivity.json", doc, h)
    log.info("margins %s", rep.margins)
    return EXIT["ok"] if doc["verdicts"]["pass"] else EXIT["margins"]


# ---------------------------------------------------------------- spectrum

def cmd_spectrum(cfg, out, threads=1):
    meta, _ = load_profile(out, need_csv=False)
    curve = rebuild_curve(meta, cfg)
    sc = cfg["spectrum"]
    rep_n, rep_2n, asm = spectral.spectrum_study(curve, curve.params, sc["a"], int(sc["N"]),
                                                 sc["threshold"], sc["rel"])
    doc = dict(params=curve.params.record(), a=sc["a"], N=int(sc["N"]),
               report_N=rep_n.to_json(), report_2N=rep_2n.to_json(),
               lambda_max=spectral.lambda_max(rep_n),
               unstable_count=rep_n.unstable_count,
               consistent=rep_n.resolution["consistent"])
    if sc["invariance"]:
        doc["invariance"] = spectral.invariance_errors(asm[int(sc["N"])], seed=sc["seed"])
    h = io.config_hash(cfg)
    rows = dict(N=[], re=[], im=[], resolved=[])
    for rep in (rep_n, rep_2n):
        for z, ok in zip(rep.eigenvalues, rep.resolved):
            rows["N"].append(str(rep.resolution["N"]))
            rows["re"].append(z.real)
            rows["im"].append(z.imag)
            rows["resolved"].append(str(int(ok)))
    io.write_csv(out / "spectrum.csv", ["N", "re", "im", "resolved"], rows, h)
    io.write_json(out / "spectrum.json", doc, h)
    if rep_n.flags or rep_2n.flags:
        log.warning("spectral flags: %s", rep_n.flags + rep_2n.flags)
    log.info("unstable count %d (N) / %d (2N)", rep_n.unstable_count, rep_2n.unstable_count)
    return EXIT["ok"]


# ---------------------------------------------------------------- simulate

def cmd_simulate(cfg, out, threads=1):
    meta, _ = load_profile(out, need_csv=False)
    curve = rebuild_curve(meta, cfg)
    p = curve.params
    sc = cfg["simulate"]
    phys = prof.reconstruct_physical(curve, include_origin=False)
    if sc["dampened"]:
        source = prof.dampen(phys, cfg["profile"]["n_P"], cfg["profile"]["tau"])
    else:
        source = curve
    state = sim.init(source, sc["perturbation"], sc["Z_out"], int(sc["n"]))
    ref = sim.profile_reference(source, state.grid, curve.Z2)
    traj, diag = sim.run(state, state.tau + sc["tau_end"], sc["cfl"], sc["cadence"], ref,
                         dampened=source if sc["dampened"] else None,
                         snapshot_cadence=sc["snapshot_cadence"], convention=sc["convention"],
                         norms=sc["norms"] and sc["dampened"])
    h = io.config_hash(cfg)
    doc = dict(params=p.record(), h=state.h, n=int(sc["n"]), Z_out=float(state.grid[-1]),
               diagnostics=diag.to_json(), final_deviation=diag.deviation[-1])
    bound = sc["stationarity_bound"]
    if bound is not None:
        doc["stationary"] = bool(diag.deviation[-1] < bound)
    if sc["rates"]:
        doc["rates"] = sim.physical_rates(phys, p).to_json()
    if sc["check"]:
        ck = dict(t0=0.0, t1=0.2, x_lo=0.5, x_hi=2.5, ns=[100, 200, 400], T=1.0)
        ck.update(sc["check"])
        res, ratios = sim.convergence_study(phys, p, ck["t0"], ck["t1"], ck["x_lo"], ck["x_hi"],
                                            tuple(ck["ns"]), ck["T"])
        doc["check"] = dict(config=ck, ratios=ratios,
                            runs=[dict(n=c.n, h=c.h, steps=c.steps, L1=c.L1, Linf=c.Linf,
                                       mass_defect=c.mass_defect) for c in res])
    rows = dict(tau=[], Z=[], rho_T=[], u_T=[])
    for tau, Z, rho, u in traj.snapshots:
        rows["tau"].extend([tau] * len(Z))
        rows["Z"].extend(Z)
        rows["rho_T"].extend(rho)
        rows["u_T"].extend(u)
    io.write_csv(out / "trajectory.csv", ["tau", "Z", "rho_T", "u_T"], rows, h)
    io.write_json(out / "simulation.json", doc, h)
    log.info("status %s, final deviation %.3e", diag.status, diag.deviation[-1])
    if diag.status != "done":
        log.error("simulation stopped early: %s", diag.status)
        return EXIT["stopped"]
    if bound is not None and not doc["stationary"]:
        log.error("final deviation %.3e exceeds the stationarity bound %.3e", diag.deviation[-1], bound)
        return EXIT["stationarity"]
    return EXIT["ok"]


# ---------------------------------------------------------------- portrait

def sonic_crossings(sample, params):
    """Points where a Delta1 = 0 polyline crosses the sonic branch sigma = 1 - w.

    A contour-based estimate, independent of the closed-form sonic roots.
    """
    pts = []
    for seg in sample["loci"]["delta1"]:
        g = (1.0 - seg[:, 0]) - seg[:, 1]
        for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
            t = g[i] / (g[i] - g[i + 1])
            q = seg[i] + t * (seg[i + 1] - seg[i])
            if 0.0 < q[0] < 1.0:
                pts.append([float(q[0]), float(q[1])])
    return sorted(pts)


def cmd_portrait(cfg, out, threads=1):
    pc = cfg["portrait"]
    r = pc["r"]
    if r is None:
        meta, _ = load_profile(out, need_csv=False)
        r = meta["r"]
    p = make_params(cfg, r)
    sample = emden.portrait_sample(p, tuple(pc["window"]), int(pc["n"]))
    rows = emden.portrait_rows(sample)
    h = io.config_hash(cfg)
    cols = ["w", "sigma", "fw", "fsigma", "locus"]
    io.write_csv(out / "portrait.csv", cols, {c: [row[i] for row in rows] for i, c in enumerate(cols)}, h)
    crit = [dict(kind=c.kind, w=c.w, sigma=c.sigma,
                 eigenvalues=None if c.eigenvalues is None else [[complex(x).real, complex(x).imag]
                                                                 for x in c.eigenvalues])
            for c in sample["critical"]]
    crossings = sonic_crossings(sample, p)
    cand = [[c["w"], c["sigma"]] for c in crit if c["kind"] == "P2"]
    tol = 2.0 * max(sample["cell"])
    matched = len(crossings) == len(cand) and all(
        min(math.hypot(a[0] - b[0], a[1] - b[1]) for b in crossings) < tol for a in cand)
    doc = dict(params=p.record(), window=list(pc["window"]), n=int(pc["n"]), critical=crit,
               loci={k: len(v) for k, v in sample["loci"].items()},
               sonic_delta1_crossings=crossings, topology_matches_P2=bool(matched),
               regime_below_r_star=bool(1.0 < r < p.r_star))
    io.write_json(out / "portrait.json", doc, h)
    return EXIT["ok"]


# ---------------------------------------------------------------- entry point

COMMANDS = dict(profile=cmd_profile, verify=cmd_verify, spectrum=cmd_spectrum,
                simulate=cmd_simulate, portrait=cmd_portrait)


def error_code(exc):
    if isinstance(exc, (ConfigError,)):
        return EXIT["config"]
    if isinstance(exc, InputError):
        return EXIT["input"]
    if isinstance(exc, params_mod.ParameterError):
        return EXIT["parameter"]
    if isinstance(exc, prof.NoRootInBracket):
        return EXIT["no_root"]
    if isinstance(exc, (prof.CrossingFailed, prof.WrongBranch)):
        return EXIT["crossing"]
    if isinstance(exc, (spectral.AssemblyFailed, spectral.RootNotBracketed)):
        return EXIT["spectrum"]
    if isinstance(exc, sim.SimulationError):
        return EXIT["stopped"]
    if isinstance(exc, prof.ProfileError):
        return EXIT["profile"]
    return None


def build_parser():
    ap = argparse.ArgumentParser(prog="implosion", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="JSON run configuration")
    ap.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    ap.add_argument("--threads", metavar="N", type=int, default=1, help="worker processes for the speed scan")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        out = prepare_out(args.out)
        return COMMANDS[args.command](cfg, out, args.threads)
    except Exception as exc:
        code = error_code(exc)
        if code is None:
            raise
        print(f"implosion {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
