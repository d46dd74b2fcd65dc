"""Command line front end: config parsing, run drivers and file reports.

Every subcommand resolves a full configuration (file plus flag overrides),
runs the requested computation and writes a self-describing bundle into the
output directory: manifest.json with the resolved inputs, delimited series
files, rendered figures and a report.json of summary numbers.  Reruns with
the same inputs produce byte-identical bundles, so nothing time- or
host-dependent is ever written.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 a requested
check failed its tolerance, 4 output could not be written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .qcore import BeamSplitter, SystemModel, beam_splitter
from .pulse import PulseShape
from .filters import (
    ALL_SCHEMES, SCHEME_HP, SCHEME_ME, SCHEME_PP, SCHEME_QP, SCHEME_QQ,
    SCHEME_SH, MeasurementConfig, min_eig,
)
from .ensemble import (
    SimulationConfig, duality_scan, exceedance_fraction, oracle_compare,
    run_ensemble, solve_master, _integrate_batch,
)
from . import figures

__all__ = ["main", "parse_config", "build_simulation", "emit_csv", "ConfigError"]

ENV_OUTDIR = "PHOTONFILTERS_OUTDIR"

ORACLE_SUP_TOL = 0.02
DUALITY_TOL = 1e-12

SCHEME_ALIASES = {
    "qp": SCHEME_QP,
    "q-p": SCHEME_QP,
    "qq": SCHEME_QQ,
    "q-q": SCHEME_QQ,
    "hp": SCHEME_HP,
    "homodyne+counting": SCHEME_HP,
    "pp": SCHEME_PP,
    "counting": SCHEME_PP,
    "two-counting": SCHEME_PP,
    "sh": SCHEME_SH,
    "single-homodyne": SCHEME_SH,
    "me": SCHEME_ME,
    "master": SCHEME_ME,
}

_SECTIONS = {
    "model": ("kappa", "S", "H"),
    "pulse": ("kind", "omega", "t0", "gamma", "t1", "rising", "csv_path"),
    "measurement": ("scheme", "r", "theta", "angles"),
    "run": ("dt", "T", "seed", "trajectories", "thresholds"),
    "output": ("directory", "thin"),
}

# bare top-level keys accepted as shorthand for their section entry
_FLAT_KEYS = {
    "kappa": ("model", "kappa"),
    "S": ("model", "S"),
    "H": ("model", "H"),
    "kind": ("pulse", "kind"),
    "omega": ("pulse", "omega"),
    "t0": ("pulse", "t0"),
    "gamma": ("pulse", "gamma"),
    "t1": ("pulse", "t1"),
    "rising": ("pulse", "rising"),
    "csv_path": ("pulse", "csv_path"),
    "scheme": ("measurement", "scheme"),
    "r": ("measurement", "r"),
    "theta": ("measurement", "theta"),
    "angles": ("measurement", "angles"),
    "dt": ("run", "dt"),
    "T": ("run", "T"),
    "seed": ("run", "seed"),
    "trajectories": ("run", "trajectories"),
    "thresholds": ("run", "thresholds"),
    "directory": ("output", "directory"),
    "thin": ("output", "thin"),
}


class ConfigError(ValueError):
    """Configuration problem; the message names the offending key path."""


def _default_config() -> dict:
    return {
        "model": {"kappa": 1.0, "S": None, "H": None},
        "pulse": {"kind": "gaussian", "omega": 1.5, "t0": 3.0,
                  "gamma": 1.0, "t1": 8.0, "rising": True, "csv_path": None},
        "measurement": {"scheme": SCHEME_QP, "r": 0.25, "theta": None,
                        "angles": None},
        "run": {"dt": 1e-3, "T": 10.0, "seed": 7, "trajectories": 64,
                "thresholds": [0.9]},
        "output": {"directory": None, "thin": 0},
    }


def _require_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _parse_matrix(value, path: str) -> np.ndarray:
    """2x2 matrix from JSON: entries are numbers or [re, im] pairs."""
    if not (isinstance(value, list) and len(value) == 2
            and all(isinstance(row, list) and len(row) == 2 for row in value)):
        raise ConfigError(f"{path}: expected a 2x2 nested list")
    out = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            ent = value[i][j]
            if isinstance(ent, list):
                if len(ent) != 2:
                    raise ConfigError(f"{path}[{i}][{j}]: complex entries are [re, im]")
                out[i, j] = complex(_require_number(ent[0], f"{path}[{i}][{j}]"),
                                    _require_number(ent[1], f"{path}[{i}][{j}]"))
            else:
                out[i, j] = _require_number(ent, f"{path}[{i}][{j}]")
    return out


def _matrix_to_json(m: np.ndarray) -> list:
    out = []
    for i in range(2):
        row = []
        for j in range(2):
            z = complex(m[i, j])
            row.append(z.real if z.imag == 0.0 else [z.real, z.imag])
        out.append(row)
    return out


def parse_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve defaults, optional JSON file and flag overrides into one dict.

    Overrides are keyed by (section, key).  Unknown keys anywhere raise
    ConfigError naming the full key path.
    """
    resolved = _default_config()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for key, value in raw.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"{key}: expected an object")
                for sub, subval in value.items():
                    if sub not in _SECTIONS[key]:
                        raise ConfigError(f"unknown config key {key}.{sub}")
                    resolved[key][sub] = subval
            elif key in _FLAT_KEYS:
                sec, sub = _FLAT_KEYS[key]
                resolved[sec][sub] = value
            else:
                raise ConfigError(f"unknown config key {key}")
    for (sec, sub), value in (overrides or {}).items():
        resolved[sec][sub] = value
    return resolved


def _splitter_from(measurement: dict) -> BeamSplitter:
    angles = measurement.get("angles")
    theta = measurement.get("theta")
    r = measurement.get("r")
    if angles is not None:
        if not (isinstance(angles, (list, tuple)) and len(angles) == 4):
            raise ConfigError("measurement.angles: expected four numbers")
        vals = tuple(_require_number(a, "measurement.angles") for a in angles)
        return beam_splitter(angles=vals)
    rv = _require_number(r if r is not None else 0.25, "measurement.r")
    if not 0.0 <= rv <= 1.0:
        raise ConfigError(f"measurement.r: must lie in [0, 1], got {rv}")
    if theta is not None:
        tv = _require_number(theta, "measurement.theta")
        return beam_splitter(spec=(rv, tv))
    return beam_splitter(spec=rv)


def _pulse_from(pulse: dict) -> PulseShape:
    kind = pulse.get("kind")
    if kind == "gaussian":
        return PulseShape.gaussian(
            omega=_require_number(pulse["omega"], "pulse.omega"),
            t0=_require_number(pulse["t0"], "pulse.t0"))
    if kind == "exponential":
        rising = pulse.get("rising")
        if not isinstance(rising, bool):
            raise ConfigError("pulse.rising: expected true or false")
        return PulseShape.exponential(
            gamma=_require_number(pulse["gamma"], "pulse.gamma"),
            t1=_require_number(pulse["t1"], "pulse.t1"), rising=rising)
    if kind == "tabulated":
        csv_path = pulse.get("csv_path")
        if not isinstance(csv_path, str):
            raise ConfigError("pulse.csv_path: required for tabulated pulses")
        return PulseShape.from_csv(csv_path)
    raise ConfigError(
        f"pulse.kind: expected gaussian, exponential or tabulated, got {kind!r}")


def build_simulation(resolved: dict) -> SimulationConfig:
    """Validate a resolved config dict and construct the run description."""
    model_sec = resolved["model"]
    kappa = _require_number(model_sec.get("kappa", 1.0), "model.kappa")
    smat = model_sec.get("S")
    hmat = model_sec.get("H")
    kwargs = {"kappa": kappa}
    if smat is not None:
        kwargs["S"] = _parse_matrix(smat, "model.S")
    if hmat is not None:
        kwargs["H"] = _parse_matrix(hmat, "model.H")
    try:
        model = SystemModel(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    raw_scheme = resolved["measurement"].get("scheme")
    if not isinstance(raw_scheme, str):
        raise ConfigError(f"measurement.scheme: expected a string, got {raw_scheme!r}")
    scheme = SCHEME_ALIASES.get(raw_scheme.lower(), raw_scheme)
    if scheme not in ALL_SCHEMES:
        raise ConfigError(
            f"measurement.scheme: unknown scheme {raw_scheme!r}; "
            f"expected one of {sorted(SCHEME_ALIASES)}")
    try:
        measurement = MeasurementConfig(scheme=scheme,
                                        splitter=_splitter_from(resolved["measurement"]))
    except ValueError as exc:
        raise ConfigError(f"measurement: {exc}") from exc

    try:
        pulse = _pulse_from(resolved["pulse"])
    except KeyError as exc:
        raise ConfigError(f"pulse.{exc.args[0]}: required for kind "
                          f"{resolved['pulse'].get('kind')!r}") from exc

    run = resolved["run"]
    thresholds = run.get("thresholds", [0.9])
    if isinstance(thresholds, (int, float)):
        thresholds = [thresholds]
    if not (isinstance(thresholds, (list, tuple)) and thresholds
            and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                    and 0.0 < x < 1.0 for x in thresholds)):
        raise ConfigError("run.thresholds: expected thresholds strictly inside (0, 1)")
    seed = run.get("seed", 7)
    n_traj = run.get("trajectories", 64)
    for name, val in (("seed", seed), ("trajectories", n_traj)):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"run.{name}: expected an integer, got {val!r}")
    try:
        return SimulationConfig(
            model=model, pulse=pulse, measurement=measurement,
            dt=_require_number(run.get("dt", 1e-3), "run.dt"),
            T=_require_number(run.get("T", 10.0), "run.T"),
            master_seed=seed, n_traj=n_traj,
            thresholds=tuple(float(x) for x in thresholds))
    except ValueError as exc:
        raise ConfigError(f"run: {exc}") from exc


def _config_to_json(resolved: dict, config: SimulationConfig) -> dict:
    """Canonical serialization of what was actually run."""
    sb = config.measurement.splitter
    return {
        "model": {
            "kappa": config.model.kappa,
            "S": _matrix_to_json(config.model.S),
            "H": _matrix_to_json(config.model.H),
        },
        "pulse": {k: resolved["pulse"][k] for k in _SECTIONS["pulse"]},
        "measurement": {
            "scheme": config.measurement.scheme,
            "splitter": _matrix_to_json(sb.matrix),
        },
        "run": {
            "dt": config.dt, "T": config.T, "seed": config.master_seed,
            "trajectories": config.n_traj,
            "thresholds": list(config.thresholds),
        },
    }


# ---------------------------------------------------------------------------
# output bundle helpers

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def emit_csv(columns: dict, path: str) -> None:
    """Write named columns as comma-separated text, 17 significant digits."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    if arrays and any(a.shape != arrays[0].shape for a in arrays):
        raise ValueError("emit_csv: all columns must have equal length")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(payload: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_outdir(args) -> str:
    directory = args.resolved["output"].get("directory")
    if directory is None:
        directory = os.environ.get(ENV_OUTDIR, "out")
    if not isinstance(directory, str):
        raise ConfigError(f"output.directory: expected a string, got {directory!r}")
    os.makedirs(directory, exist_ok=True)
    return directory


def _write_manifest(outdir: str, command: str, resolved: dict,
                    config: SimulationConfig, files: list, extra: dict | None = None) -> None:
    manifest = {
        "version": __version__,
        "command": command,
        "config": _config_to_json(resolved, config),
        "files": sorted(files),
    }
    if extra:
        manifest.update(extra)
    _write_json(manifest, os.path.join(outdir, "manifest.json"))


def _me_columns(sol, config: SimulationConfig) -> dict:
    n = sol.t.size
    return {
        "t": sol.t,
        "pe": sol.pe,
        "trace_rho11": np.real(np.trace(sol.blocks[:, 0], axis1=1, axis2=2)),
        "min_eig": min_eig(sol.blocks[:, 0]),
        "jump1": np.zeros(n, dtype=int),
        "jump2": np.zeros(n, dtype=int),
        "xi_abs2": np.abs(config.pulse.xi(sol.t)) ** 2,
    }


def _diag_report(diag: dict) -> dict:
    out = {"max_trace_drift": diag["max_trace_drift"],
           "min_eigenvalue": diag["min_eigenvalue"],
           "flags": diag["flags"]}
    if diag.get("nonfinite_at") is not None:
        out["nonfinite_at"] = diag["nonfinite_at"]
    return out


# ---------------------------------------------------------------------------
# subcommands

def _cmd_me(args) -> int:
    config = args.config
    outdir = _prepare_outdir(args)
    sol = solve_master(config)
    files = ["manifest.json", "me.csv", "me.png", "report.json"]
    _write_manifest(outdir, "me", args.resolved, config, files)
    emit_csv(_me_columns(sol, config), os.path.join(outdir, "me.csv"))
    figures.plot_master(sol.t, sol.pe, np.abs(config.pulse.xi(sol.t)) ** 2,
                        os.path.join(outdir, "me.png"))
    imax = int(np.argmax(sol.pe))
    _write_json({"max_pe": sol.max_pe, "t_at_max": float(sol.t[imax]),
                 "final_pe": float(sol.pe[-1])},
                os.path.join(outdir, "report.json"))
    print(f"max excitation probability {sol.max_pe:.6f} at t={sol.t[imax]:.3f}")
    return 0


def _cmd_traj(args) -> int:
    config = args.config
    index = args.index
    if index < 0 or index >= config.n_traj:
        raise ConfigError(f"--index: must lie in [0, {config.n_traj})")
    outdir = _prepare_outdir(args)
    sol = solve_master(config)
    t = config.grid()
    out = _integrate_batch(config, [index], store_series=True, store_increments=False)
    name = f"traj_{index}.csv"
    files = ["manifest.json", "me.csv", name, f"traj_{index}.png", "report.json"]
    _write_manifest(outdir, "traj", args.resolved, config, files,
                    extra={"trajectory_index": index})
    emit_csv(_me_columns(sol, config), os.path.join(outdir, "me.csv"))
    columns = {
        "t": t, "pe": out["pe"][0],
        "trace_rho11": out["trace"][0], "min_eig": out["mineig"][0],
        "jump1": out["jump1"][0].astype(int), "jump2": out["jump2"][0].astype(int),
    }
    emit_csv(columns, os.path.join(outdir, name))
    jumps1 = [float(v) for v in t[out["jump1"][0]]]
    jumps2 = [float(v) for v in t[out["jump2"][0]]]
    figures.plot_trajectory(
        t, out["pe"][0], sol.pe, jumps1, jumps2,
        os.path.join(outdir, f"traj_{index}.png"),
        f"Conditional excitation, trajectory {index} ({config.measurement.scheme})")
    diag = out["diagnostics"][0]
    _write_json({"index": index, "max_pe": float(np.nanmax(out["pe"][0])),
                 "jump1_times": jumps1, "jump2_times": jumps2,
                 "diagnostics": _diag_report(diag)},
                os.path.join(outdir, "report.json"))
    print(f"trajectory {index}: max conditional excitation "
          f"{float(np.nanmax(out['pe'][0])):.6f}, "
          f"{len(jumps1) + len(jumps2)} jump(s)")
    return 0


def _cmd_ensemble(args) -> int:
    config = args.config
    outdir = _prepare_outdir(args)
    thin = args.resolved["output"].get("thin", 0)
    if isinstance(thin, bool) or not isinstance(thin, int) or thin < 0:
        raise ConfigError(f"output.thin: expected a non-negative integer, got {thin!r}")
    keep = min(config.n_traj, figures._MAX_MEMBER_CURVES)
    result = run_ensemble(config, workers=args.workers, keep_members=keep)

    thinned = list(range(0, config.n_traj, thin)) if thin > 0 else []
    files = ["manifest.json", "me.csv", "ensemble.csv", "ensemble.png", "report.json"]
    files += [f"traj_{k}.csv" for k in thinned]
    _write_manifest(outdir, "ensemble", args.resolved, config, files)

    sol = solve_master(config)
    emit_csv(_me_columns(sol, config), os.path.join(outdir, "me.csv"))
    emit_csv({"t": result.t, "mean_pe": result.mean_pe, "me_pe": result.me_pe},
             os.path.join(outdir, "ensemble.csv"))
    figures.plot_ensemble(
        result.t, result.members_pe, result.mean_pe, result.me_pe,
        os.path.join(outdir, "ensemble.png"),
        f"{result.n_traj} trajectories ({config.measurement.scheme})")
    if thinned:
        out = _integrate_batch(config, thinned, store_series=True,
                               store_increments=False)
        for pos, k in enumerate(thinned):
            emit_csv({
                "t": result.t, "pe": out["pe"][pos],
                "trace_rho11": out["trace"][pos], "min_eig": out["mineig"][pos],
                "jump1": out["jump1"][pos].astype(int),
                "jump2": out["jump2"][pos].astype(int),
            }, os.path.join(outdir, f"traj_{k}.csv"))

    stats = [exceedance_fraction(result, thr) for thr in config.thresholds]
    flagged = [dict(index=d["index"], **_diag_report(d))
               for d in result.diagnostics if d["flags"]]
    report = {
        "n_trajectories": result.n_traj,
        "me_max_pe": float(np.max(result.me_pe)),
        "sup_mean_vs_me": float(np.max(np.abs(result.mean_pe - result.me_pe))),
        "exceedance": [
            {"threshold": s.threshold, "fraction": s.fraction,
             "n_exceed": s.n_exceed, "n": s.n,
             "ci_low": s.ci_low, "ci_high": s.ci_high}
            for s in stats
        ],
        "flagged_trajectories": flagged,
    }
    _write_json(report, os.path.join(outdir, "report.json"))
    for s in stats:
        print(f"exceedance(threshold={s.threshold}): {s.fraction:.4f} "
              f"[{s.ci_low:.4f}, {s.ci_high:.4f}] ({s.n_exceed}/{s.n})")
    print(f"sup |ensemble mean - unconditional| = {report['sup_mean_vs_me']:.5f}")
    return 0


def _cmd_sweep(args) -> int:
    base = args.config
    if base.measurement.scheme == SCHEME_ME:
        raise ConfigError("sweep: needs a measurement scheme, not the "
                          "unconditional reference")
    try:
        r_values = [float(tok) for tok in args.r_list.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"--r-list: {exc}") from exc
    if not r_values or not all(0.0 <= r <= 1.0 for r in r_values):
        raise ConfigError("--r-list: reflectivities must lie in [0, 1]")
    outdir = _prepare_outdir(args)
    threshold = base.thresholds[0]
    rows = []
    for r in r_values:
        measurement = MeasurementConfig(scheme=base.measurement.scheme,
                                        splitter=beam_splitter(spec=r))
        config = SimulationConfig(
            model=base.model, pulse=base.pulse, measurement=measurement,
            dt=base.dt, T=base.T, master_seed=base.master_seed,
            n_traj=base.n_traj, thresholds=base.thresholds)
        result = run_ensemble(config, workers=args.workers)
        stat = exceedance_fraction(result, threshold)
        rows.append((r, stat))
        print(f"r={r:.4f}: exceedance(threshold={threshold}) = "
              f"{stat.fraction:.4f} ({stat.n_exceed}/{stat.n})")
    files = ["manifest.json", "sweep.csv", "sweep.png", "report.json"]
    _write_manifest(outdir, "sweep", args.resolved, base, files,
                    extra={"r_values": r_values})
    emit_csv({
        "r": np.array([r for r, _ in rows]),
        "threshold": np.full(len(rows), threshold),
        "fraction": np.array([s.fraction for _, s in rows]),
        "n_exceed": np.array([s.n_exceed for _, s in rows]),
        "n": np.array([s.n for _, s in rows]),
        "ci_low": np.array([s.ci_low for _, s in rows]),
        "ci_high": np.array([s.ci_high for _, s in rows]),
    }, os.path.join(outdir, "sweep.csv"))
    figures.plot_sweep([r for r, _ in rows], [s.fraction for _, s in rows],
                       [s.ci_low for _, s in rows], [s.ci_high for _, s in rows],
                       threshold, os.path.join(outdir, "sweep.png"))
    _write_json({
        "threshold": threshold,
        "rows": [{"r": r, "fraction": s.fraction, "n_exceed": s.n_exceed,
                  "n": s.n, "ci_low": s.ci_low, "ci_high": s.ci_high}
                 for r, s in rows],
    }, os.path.join(outdir, "report.json"))
    return 0


def _cmd_oracle_check(args) -> int:
    config = args.config
    if config.measurement.scheme not in (SCHEME_QP, SCHEME_QQ):
        raise ConfigError("oracle-check: supported for the two-channel "
                          "diffusive schemes only")
    outdir = _prepare_outdir(args)
    coarse = oracle_compare(config)
    halved = SimulationConfig(
        model=config.model, pulse=config.pulse, measurement=config.measurement,
        dt=config.dt / 2.0, T=config.T, master_seed=config.master_seed,
        n_traj=config.n_traj, thresholds=config.thresholds)
    fine = oracle_compare(halved)
    decreasing = fine["sup_deviation"] < coarse["sup_deviation"]
    passed = coarse["sup_deviation"] <= ORACLE_SUP_TOL and decreasing

    files = ["manifest.json", "oracle.csv", "oracle.png", "report.json"]
    _write_manifest(outdir, "oracle-check", args.resolved, config, files)
    emit_csv({"t": coarse["t"], "pe_reduced": coarse["pe_reduced"],
              "pe_extended": coarse["pe_extended"]},
             os.path.join(outdir, "oracle.csv"))
    figures.plot_oracle(coarse["t"], coarse["pe_reduced"], coarse["pe_extended"],
                        os.path.join(outdir, "oracle.png"))
    _write_json({
        "dt": coarse["dt"], "sup_deviation": coarse["sup_deviation"],
        "dt_half": fine["dt"], "sup_deviation_half_dt": fine["sup_deviation"],
        "tolerance": ORACLE_SUP_TOL, "decreasing": decreasing, "passed": passed,
    }, os.path.join(outdir, "report.json"))
    print(f"sup deviation {coarse['sup_deviation']:.3e} at dt={coarse['dt']:g}, "
          f"{fine['sup_deviation']:.3e} at dt={fine['dt']:g} -> "
          f"{'PASS' if passed else 'FAIL'}")
    return 0 if passed else 3


def _cmd_duality_check(args) -> int:
    config = args.config
    outdir = _prepare_outdir(args)
    if args.draws < 1:
        raise ConfigError("--draws: must be a positive integer")
    scan = duality_scan(n_draws=args.draws, seed=config.master_seed, dt=config.dt)
    passed = bool(scan["max_residual"] <= DUALITY_TOL)
    files = ["manifest.json", "report.json"]
    _write_manifest(outdir, "duality-check", args.resolved, config, files,
                    extra={"draws": args.draws})
    _write_json({
        "draws": scan["draws"],
        "max_residual": scan["max_residual"],
        "per_scheme": {k: v for k, v in scan["per_scheme"].items()},
        "tolerance": DUALITY_TOL, "passed": passed,
    }, os.path.join(outdir, "report.json"))
    print(f"max duality residual {scan['max_residual']:.3e} over "
          f"{scan['draws']} draws per scheme -> {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 3


# ---------------------------------------------------------------------------
# argument wiring

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON configuration file")
    p.add_argument("--scheme", help="measurement scheme (qp, qq, hp, pp, sh, me)")
    p.add_argument("--r", type=float, help="beam splitter reflectivity in [0, 1]")
    p.add_argument("--theta", type=float, help="beam splitter phase (with --r)")
    p.add_argument("--angles", help="four comma-separated splitter angles")
    p.add_argument("--kappa", type=float, help="coupling rate")
    p.add_argument("--pulse-kind", dest="kind",
                   choices=["gaussian", "exponential", "tabulated"])
    p.add_argument("--omega", type=float, help="gaussian pulse bandwidth")
    p.add_argument("--t0", type=float, help="gaussian pulse center")
    p.add_argument("--gamma", type=float, help="exponential pulse rate")
    p.add_argument("--t1", type=float, help="exponential pulse reference time")
    rising = p.add_mutually_exclusive_group()
    rising.add_argument("--rising", dest="rising", action="store_true",
                        default=None)
    rising.add_argument("--decaying", dest="rising", action="store_false",
                        default=None)
    p.add_argument("--pulse-csv", dest="csv_path", help="tabulated pulse file")
    p.add_argument("--dt", type=float, help="integration step")
    p.add_argument("--T", type=float, help="time horizon")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trajectories", "-n", dest="trajectories", type=int,
                   help="ensemble size")
    p.add_argument("--thresholds", help="comma-separated exceedance thresholds")
    p.add_argument("--out", dest="directory", help="output directory")
    p.add_argument("--thin", type=int,
                   help="also write every k-th member trajectory as CSV")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads (results are worker-count invariant)")


def _overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for flat, (sec, sub) in _FLAT_KEYS.items():
        value = getattr(args, flat, None)
        if value is None:
            continue
        if flat == "angles":
            try:
                value = [float(tok) for tok in value.split(",")]
            except ValueError as exc:
                raise ConfigError(f"--angles: {exc}") from exc
        if flat == "thresholds":
            try:
                value = [float(tok) for tok in value.split(",")]
            except ValueError as exc:
                raise ConfigError(f"--thresholds: {exc}") from exc
        overrides[(sec, sub)] = value
    return overrides


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonfilters",
        description="Conditional dynamics of a two-level emitter driven by a "
                    "single-photon pulse, under split-and-measure detection.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("me", help="unconditional (reference) dynamics")
    _add_common(p)
    p.set_defaults(func=_cmd_me)

    p = sub.add_parser("traj", help="one conditional trajectory")
    _add_common(p)
    p.add_argument("--index", type=int, default=0, help="trajectory index")
    p.set_defaults(func=_cmd_traj)

    p = sub.add_parser("ensemble", help="trajectory ensemble and statistics")
    _add_common(p)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("sweep", help="exceedance fraction versus reflectivity")
    _add_common(p)
    p.add_argument("--r-list", default="0.25,0.7071067811865476,0.75",
                   help="comma-separated reflectivities")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle-check",
                       help="compare the reduced filter against the "
                            "vacuum-picture reference on one noise record")
    _add_common(p)
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("duality-check",
                       help="randomized state/observable consistency scan")
    _add_common(p)
    p.add_argument("--draws", type=int, default=100, help="draws per scheme")
    p.set_defaults(func=_cmd_duality_check)
    return parser


def main(argv: list | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args.resolved = parse_config(args.config, _overrides_from(args))
        args.config = build_simulation(args.resolved)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
