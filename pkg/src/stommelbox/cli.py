"""Command-line interface.

Every command reads one JSON config (all fields defaulted, all overridable),
runs deterministically under a fixed seed, writes headered CSV/JSON outputs
with 17-significant-digit floats, and finishes by atomically writing a
``run_manifest.json`` capturing the config echo, seed, code version, input
digests, wall-clock time and output list.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__, calibrate, core, defaults, dynamics, experiments, obs
from .core import MONTH_SECONDS, OceanState, seconds_to_year, year_to_seconds
from .errors import StommelError

MANIFEST_NAME = "run_manifest.json"


def default_config():
    """Full config with the package defaults (see ``defaults``)."""
    f = defaults.forcing()
    return {
        "constants": {
            "rho0": 1027.0,
            "T0": 10.0,
            "S0": 35.0,
            "rho0_alphaT": 0.15,
            "rho0_alphaS": 0.78,
        },
        "geometry": {"dx_m": 7274.0e3, "dy_p_m": 324.0e3, "dy_e_m": 2262.0e3, "dz_m": 3148.0},
        "params": {"kT": 3.7e-6, "kS": 1.2e-6, "gamma": 2.0},
        "initial_state": {"Te": 5.4, "Tp": 1.23, "Se": 35.15, "Sp": 34.82},
        "forcing": {
            name: [h.c0, h.c_cos, h.c_sin]
            for name, h in (
                ("Te_a", f.Te_a),
                ("Tp_a", f.Tp_a),
                ("Se_a", f.Se_a),
                ("Sp_a", f.Sp_a),
            )
        },
        "obs_error_std": {"Tp": 0.3, "Te": 0.5, "Sp": 0.07, "Se": 0.07},
        "scenario": {
            "enabled": False,
            "onset_year": 2022.0,
            "warm_e": 0.03,
            "warm_p": 0.06,
            "ice_volume_km3": 2.9e6,
            "melt_period_yr": 10000.0,
        },
        "experiment": {
            "M": 100,
            "seed": 0,
            "start_year": 2004.0,
            "da_end_year": 2022.0,
            "end_year": 2104.0,
            "da_enabled": True,
            "log_param_std": defaults.LOG_PARAM_STD,
        },
        "simulate": {"start_year": 2004.0, "end_year": 2104.0, "dt_months": 1.0},
        "sweep": {
            "melt_periods_yr": list(defaults.SWEEP_MELT_PERIODS_YR),
            "warming_eq": list(defaults.SWEEP_WARMING_EQ),
        },
        "calibration": {"Q_target_sv": 18.0, "Q_sigma_sv": 2.5},
        "obs_process": {
            "lat_bounds": list(obs.LAT_BOUNDS),
            "lon_bounds": list(obs.LON_BOUNDS),
            "min_total_depth_m": 1500.0,
            "truncation_depth_m": 3500.0,
        },
    }


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ValueError(f"unknown config key: {key!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be an object")
            for sub, sval in value.items():
                if sub not in out[key]:
                    raise ValueError(f"unknown config key: {key}.{sub}")
                out[key][sub] = sval
        else:
            out[key] = value
    return out


def load_config(path):
    if path is None:
        return default_config()
    with open(path) as fh:
        user = json.load(fh)
    if not isinstance(user, dict):
        raise ValueError("config root must be a JSON object")
    return _merge(default_config(), user)


def build_constants(cfg):
    c = cfg["constants"]
    return core.PhysicalConstants(
        rho0=c["rho0"],
        T0=c["T0"],
        S0=c["S0"],
        alphaT=c["rho0_alphaT"] / c["rho0"],
        alphaS=c["rho0_alphaS"] / c["rho0"],
    )


def build_geometry(cfg):
    g = cfg["geometry"]
    return core.BoxGeometry(dx=g["dx_m"], dy_p=g["dy_p_m"], dy_e=g["dy_e_m"], dz=g["dz_m"])


def build_params(cfg):
    p = cfg["params"]
    return core.ModelParams(kT=p["kT"], kS=p["kS"], gamma=p["gamma"])


def build_forcing(cfg):
    f = cfg["forcing"]
    return core.SurfaceForcing(
        **{name: core.Harmonic(*f[name]) for name in ("Te_a", "Tp_a", "Se_a", "Sp_a")}
    )


def build_scenario(cfg):
    s = cfg["scenario"]
    return core.ClimateScenario(
        enabled=s["enabled"],
        onset_year=s["onset_year"],
        warm_e=s["warm_e"],
        warm_p=s["warm_p"],
        ice_volume=s["ice_volume_km3"] * 1.0e9,
        melt_period_yr=s["melt_period_yr"],
    )


def build_initial_state(cfg):
    i = cfg["initial_state"]
    return OceanState(Te=i["Te"], Tp=i["Tp"], Se=i["Se"], Sp=i["Sp"])


def build_context(cfg):
    return core.ModelContext(
        params=build_params(cfg),
        geometry=build_geometry(cfg),
        constants=build_constants(cfg),
        forcing=build_forcing(cfg),
        scenario=build_scenario(cfg),
    )


def build_experiment(cfg, seed=None):
    e = cfg["experiment"]
    std = cfg["obs_error_std"]
    return experiments.ExperimentConfig(
        constants=build_constants(cfg),
        geometry=build_geometry(cfg),
        params=build_params(cfg),
        forcing=build_forcing(cfg),
        scenario=build_scenario(cfg),
        initial_state=build_initial_state(cfg),
        obs_error_std=(std["Tp"], std["Te"], std["Sp"], std["Se"]),
        M=e["M"],
        seed=e["seed"] if seed is None else seed,
        start_year=e["start_year"],
        da_end_year=e["da_end_year"],
        end_year=e["end_year"],
        da_enabled=e["da_enabled"],
        log_param_std=e["log_param_std"],
    )


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir, command, config, seed, inputs, outputs, started):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "wall_clock_s": time.time() - started,
    }
    tmp = os.path.join(out_dir, MANIFEST_NAME + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(out_dir, MANIFEST_NAME))


def _member_rows(result):
    g, c = result.config.geometry, result.config.constants
    kT = np.exp(result.log_params[:, :, 0])
    gam = np.exp(result.log_params[:, :, 2])
    ct = g.dz * gam * c.alphaT / (g.dy_bar * kT)
    cs = g.dz * gam * c.alphaS / (g.dy_bar * kT)
    dT = result.states[:, :, 0] - result.states[:, :, 1]
    dS = result.states[:, :, 2] - result.states[:, :, 3]
    for k, t in enumerate(result.times):
        year = seconds_to_year(t)
        for m in range(result.M):
            yield (
                t,
                year,
                m,
                dT[k, m],
                dS[k, m],
                result.psi[k, m] / core.SV,
                ct[k, m] * dT[k, m],
                cs[k, m] * dS[k, m],
            )


def _write_run_outputs(result, out_dir):
    outputs = []

    path = os.path.join(out_dir, "members.csv")
    _write_csv(
        path,
        ["time_s", "year", "member", "dT_degC", "dS_ppt", "psi_sv", "T_nd", "S_nd"],
        _member_rows(result),
    )
    outputs.append("members.csv")

    mode_rows = []
    g, c = result.config.geometry, result.config.constants
    for k, t in enumerate(result.times):
        Te, Tp, Se, Sp = result.mode_ocean[k]
        kT, kS, gam = result.mode_params[k]
        psi = core.transport(
            OceanState(Te, Tp, Se, Sp), core.ModelParams(kT, kS, gam), g, c
        )
        mode_rows.append((t, seconds_to_year(t), Te, Tp, Se, Sp, kT, kS, gam, psi / core.SV))
    path = os.path.join(out_dir, "mode.csv")
    _write_csv(
        path,
        ["time_s", "year", "Te", "Tp", "Se", "Sp", "kT", "kS", "gamma", "psi_sv"],
        mode_rows,
    )
    outputs.append("mode.csv")

    diag = result.diagnostics
    fields = ["Te", "Tp", "Se", "Sp", "log_kT", "log_kS", "log_gamma"]
    header = ["time_s", "year"] + [f"spread_{f}" for f in fields]
    if diag.rmse is not None:
        header += [f"rmse_{f}" for f in fields]
    rows = []
    for k, t in enumerate(diag.times):
        row = [t, seconds_to_year(t)] + list(diag.spread[k])
        if diag.rmse is not None:
            row += list(diag.rmse[k])
        rows.append(row)
    path = os.path.join(out_dir, "diagnostics.csv")
    _write_csv(path, header, rows)
    outputs.append("diagnostics.csv")

    path = os.path.join(out_dir, "events.csv")
    _write_csv(
        path,
        ["member", "time_s", "year"],
        [(m, t, seconds_to_year(t)) for m, t in result.flip_events],
    )
    outputs.append("events.csv")

    if result.innovations is not None:
        path = os.path.join(out_dir, "innovations.csv")
        _write_csv(
            path,
            ["update", "dTp", "dTe", "dSp", "dSe"],
            [(k, *row) for k, row in enumerate(result.innovations)],
        )
        outputs.append("innovations.csv")
    return outputs


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    started = time.time()
    cfg = load_config(args.config)
    ctx = build_context(cfg)
    sim = cfg["simulate"]
    t0 = year_to_seconds(sim["start_year"])
    t1 = year_to_seconds(sim["end_year"])
    dt = sim["dt_months"] * MONTH_SECONDS
    traj = core.integrate(build_initial_state(cfg), t0, t1, dt, ctx)

    os.makedirs(args.out, exist_ok=True)
    rows = []
    for k, t in enumerate(traj.times):
        state = traj.state(k)
        psi = core.transport(state, ctx.params, ctx.geometry, ctx.constants)
        rows.append(
            (t, seconds_to_year(t), state.Te, state.Tp, state.Se, state.Sp, psi / core.SV)
        )
    _write_csv(
        os.path.join(args.out, "trajectory.csv"),
        ["time_s", "year", "Te", "Tp", "Se", "Sp", "psi_sv"],
        rows,
    )
    tend = core.tendencies(traj.times[-1], traj.final_state, ctx)
    print(f"terminal tendency max-abs: {max(abs(v) for v in tend):.3e} (degC/s, ppt/s)")
    inputs = [args.config] if args.config else []
    _write_manifest(args.out, "simulate", cfg, None, inputs, ["trajectory.csv"], started)
    return 0


def cmd_bifurcation(args):
    started = time.time()
    if args.eta1 <= 0 or args.eta3 <= 0:
        raise ValueError("eta1 and eta3 must be positive")
    diagram = dynamics.bifurcation_diagram(
        args.eta1, args.eta3, (args.eta2_min, args.eta2_max), resolution=args.resolution
    )
    os.makedirs(args.out, exist_ok=True)
    sn_psi, sn_eta2 = diagram.saddle if diagram.saddle else ("", "")
    rows = [
        ("TH", psi, eta2, stab, diagram.nsf_eta2, sn_psi, sn_eta2)
        for psi, eta2, stab in zip(diagram.th_psi, diagram.th_eta2, diagram.th_stability)
    ] + [
        ("SA", psi, eta2, stab, diagram.nsf_eta2, sn_psi, sn_eta2)
        for psi, eta2, stab in zip(diagram.sa_psi, diagram.sa_eta2, diagram.sa_stability)
    ]
    _write_csv(
        os.path.join(args.out, "bifurcation.csv"),
        ["branch", "psi", "eta2", "stability", "nsf_eta2", "sn_psi", "sn_eta2"],
        rows,
    )
    config = {
        "eta1": args.eta1,
        "eta3": args.eta3,
        "eta2_range": [args.eta2_min, args.eta2_max],
        "resolution": args.resolution,
    }
    _write_manifest(args.out, "bifurcation", config, None, [], ["bifurcation.csv"], started)
    return 0


def cmd_twin(args):
    started = time.time()
    cfg = load_config(args.config)
    exp = build_experiment(cfg, seed=args.seed)
    result = experiments.twin_experiment(exp)
    os.makedirs(args.out, exist_ok=True)
    outputs = _write_run_outputs(result, args.out)
    inputs = [args.config] if args.config else []
    _write_manifest(args.out, "twin", cfg, exp.seed, inputs, outputs, started)
    print(f"twin run complete: {result.M} members, flip fraction "
          f"{experiments.flip_fraction(result):.3f}")
    return 0


def cmd_assimilate(args):
    started = time.time()
    cfg = load_config(args.config)
    exp = build_experiment(cfg, seed=args.seed)
    series = obs.read_obs_series(args.obs)
    forcing = None
    if args.forcing:
        with open(args.forcing) as fh:
            payload = json.load(fh)
        forcing = core.SurfaceForcing(
            **{
                name: core.Harmonic(
                    c0=payload[name]["c0"],
                    c_cos=payload[name]["c_cos"],
                    c_sin=payload[name]["c_sin"],
                )
                for name in ("Te_a", "Tp_a", "Se_a", "Sp_a")
            }
        )
    result = experiments.real_experiment(exp, series, forcing=forcing)
    os.makedirs(args.out, exist_ok=True)
    outputs = _write_run_outputs(result, args.out)
    inputs = [p for p in (args.config, args.obs, args.forcing) if p]
    _write_manifest(args.out, "assimilate", cfg, exp.seed, inputs, outputs, started)
    print(f"assimilation complete: {len(series)} observation months, flip fraction "
          f"{experiments.flip_fraction(result):.3f}")
    return 0


def cmd_sweep(args):
    started = time.time()
    cfg = load_config(args.config)
    if args.melt_period_years:
        cfg["sweep"]["melt_periods_yr"] = args.melt_period_years
    if args.warming_eq:
        cfg["sweep"]["warming_eq"] = args.warming_eq
    exp = build_experiment(cfg, seed=args.seed)
    series = obs.read_obs_series(args.obs) if args.obs else None
    grid = experiments.scenario_sweep(
        exp, cfg["sweep"]["melt_periods_yr"], cfg["sweep"]["warming_eq"], obs_series=series
    )
    os.makedirs(args.out, exist_ok=True)
    header = ["melt_period_yr"] + [_fmt(w) for w in grid.warming_rates_eq]
    rows = [
        [mp] + list(grid.flip_fraction[i])
        for i, mp in enumerate(grid.melt_periods_yr)
    ]
    _write_csv(os.path.join(args.out, "sweep.csv"), header, rows)
    inputs = [p for p in (args.config, args.obs) if p]
    _write_manifest(args.out, "sweep", cfg, exp.seed, inputs, ["sweep.csv"], started)
    if grid.failures:
        print(f"{len(grid.failures)} cells failed:", *grid.failures, sep="\n  ")
    return 0


def cmd_calibrate(args):
    started = time.time()
    cfg = load_config(args.config)
    init = build_initial_state(cfg)
    std = cfg["obs_error_std"]
    target = calibrate.CalibrationTarget(
        dT_star=init.Te - init.Tp,
        dS_star=init.Se - init.Sp,
        sigma_T_e=std["Te"],
        sigma_T_p=std["Tp"],
        sigma_S_e=std["Se"],
        sigma_S_p=std["Sp"],
        Q_target_sv=cfg["calibration"]["Q_target_sv"],
        Q_sigma_sv=cfg["calibration"]["Q_sigma_sv"],
    )
    params = calibrate.initial_param_fit(
        target, build_geometry(cfg), build_constants(cfg), build_forcing(cfg)
    )
    os.makedirs(args.out, exist_ok=True)
    _write_json(
        os.path.join(args.out, "params.json"),
        {"kT": params.kT, "kS": params.kS, "gamma": params.gamma},
    )
    inputs = [args.config] if args.config else []
    _write_manifest(args.out, "calibrate", cfg, None, inputs, ["params.json"], started)
    print(f"calibrated params: kT={params.kT:.6g} kS={params.kS:.6g} gamma={params.gamma:.6g}")
    return 0


def cmd_obs_process(args):
    started = time.time()
    cfg = load_config(args.config)
    op = cfg["obs_process"]
    frame = obs.read_profiles(args.profiles)
    selected = obs.select_profiles(
        frame,
        lat_bounds=tuple(op["lat_bounds"]),
        lon_bounds=tuple(op["lon_bounds"]),
        min_total_depth=op["min_total_depth_m"],
        truncation_depth=op["truncation_depth_m"],
    )
    assignment = obs.assign_boxes(selected)
    geometry = obs.compute_geometry(selected, assignment)
    series = obs.build_obs_series(selected, assignment)
    forcing = obs.fit_surface_forcing(series)

    os.makedirs(args.out, exist_ok=True)
    obs.write_obs_series(series, os.path.join(args.out, "obs_series.csv"))
    _write_json(
        os.path.join(args.out, "forcing.json"),
        {
            name: {"c0": h.c0, "c_cos": h.c_cos, "c_sin": h.c_sin}
            for name, h in (
                ("Te_a", forcing.Te_a),
                ("Tp_a", forcing.Tp_a),
                ("Se_a", forcing.Se_a),
                ("Sp_a", forcing.Sp_a),
            )
        },
    )
    _write_json(
        os.path.join(args.out, "geometry.json"),
        {"dx_m": geometry.dx, "dy_p_m": geometry.dy_p, "dy_e_m": geometry.dy_e, "dz_m": geometry.dz},
    )
    outputs = ["obs_series.csv", "forcing.json", "geometry.json"]
    _write_manifest(args.out, "obs-process", cfg, None, [args.profiles], outputs, started)
    print(
        f"processed {len(selected)} rows into {len(series)} monthly observations; "
        f"boxes: {len(assignment.columns(obs.POLAR))} polar / "
        f"{len(assignment.columns(obs.EQUATORIAL))} equatorial columns"
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stommelbox",
        description="Stommel 2-box AMOC model: simulation, assimilation, tipping sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_seed=True):
        p.add_argument("--config", help="JSON config overriding the defaults")
        p.add_argument("--out", default=".", help="output directory")
        if with_seed:
            p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("simulate", help="single deterministic model run")
    add_common(p, with_seed=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bifurcation", help="equilibrium branches over an eta2 window")
    p.add_argument("--eta1", type=float, required=True)
    p.add_argument("--eta3", type=float, required=True)
    p.add_argument("--eta2-min", type=float, default=0.0)
    p.add_argument("--eta2-max", type=float, default=3.0)
    p.add_argument("--resolution", type=int, default=400)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("twin", help="twin experiment with synthetic truth")
    add_common(p)
    p.set_defaults(func=cmd_twin)

    p = sub.add_parser("assimilate", help="assimilate an observation series")
    add_common(p)
    p.add_argument("--obs", required=True, help="observation series CSV")
    p.add_argument("--forcing", help="surface forcing JSON (from obs-process)")
    p.set_defaults(func=cmd_assimilate)

    p = sub.add_parser("sweep", help="tipping-probability sweep over scenarios")
    add_common(p)
    p.add_argument("--obs", help="observation series CSV (twin observations if omitted)")
    p.add_argument("--melt-period-years", type=float, nargs="+", default=None)
    p.add_argument("--warming-eq", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="initial parameter fit")
    add_common(p, with_seed=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("obs-process", help="profiles CSV -> observation series + fits")
    add_common(p, with_seed=False)
    p.add_argument("--profiles", required=True, help="profile table CSV")
    p.set_defaults(func=cmd_obs_process)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (StommelError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
