"""Command-line front end.

    tbq <subcommand> --config run.json --out DIR [--seed N] [--plot]

Exit codes: 0 success, 2 configuration error, 3 runtime error.  Outputs are
written to a scratch directory next to DIR and moved into place only when
the whole run succeeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import CHSH_THETA_A, CHSH_THETA_B, DEFAULT_WINDOW_PS, fit_fringe_power, slot_layout
from .events import run_simulation
from .pipelines import FRINGE_PAIRS, chsh_run, fringe_scan
from .presets import active_plan, certification_plan, ideal_plan, passive_plan
from .qkd import SWEEP_COLUMNS, SecurityParams, key_rate_report, optimize_z_window, skr_vs_loss_sweep, sift_streams
from .qkd.bounds import ChernoffBound, SerflingBound, asymptotic_fraction, key_length
from .qkd.sifting import Z_GRID_PS
from .quantum import entanglement_metrics
from .reporting import plot_fringe, plot_matrix, plot_series, write_kv, write_matrix, write_table
from .tomography import linear_inversion, mle_reconstruct, project_physical, simulate_tomography

log = logging.getLogger("tbq")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------ configuration

_NUM = (int, float)
_SECURITY = {"f_ec": (_NUM, 1.16), "eps_sec": (_NUM, 1e-10), "eps_cor": (_NUM, 1e-10)}
_SOURCE = {
    "preset": (str, "certification"),
    "joint_visibility": (_NUM, None),
    "mu": (_NUM, None),
    "loss_db": (_NUM, 10.0),
    "window_ps": (int, DEFAULT_WINDOW_PS),
}

SCHEMAS = {
    "fringe": {**_SOURCE, "duration_s": (_NUM, 0.01), "points": (int, 32), "theta_b": (_NUM, 0.0),
               "p_pi_mw": (_NUM, 23.5)},
    "chsh": {**_SOURCE, "duration_s": (_NUM, 0.1)},
    "tomo": {**_SOURCE, "duration_s": (_NUM, 0.05), "method": (str, "mle")},
    "qkd-passive": {"duration_s": (_NUM, 1.0), "extra_bob_loss_db": (_NUM, 0.0), "joint_visibility": (_NUM, None),
                    "p_z": (_NUM, 0.5), "mu": (_NUM, None), "block_size": (_NUM, 1e6),
                    "z_grid_ps": (list, list(Z_GRID_PS)), **_SECURITY},
    "qkd-active": {"duration_s": (_NUM, 1.0), "extra_bob_loss_db": (_NUM, 0.0), "joint_visibility": (_NUM, None),
                   "mu": (_NUM, None), "block_size": (_NUM, 1e4), "prbs_orders": (list, [7, 9]), **_SECURITY},
    "sweep-loss": {"protocol": (str, "passive"), "losses_db": (list, [0, 5, 10, 15, 20, 22]),
                   "block_size": (_NUM, 1e6), "z_half_width_ps": (int, 44), "target_test_events": (int, 300),
                   "max_duration_s": (_NUM, 20.0), "base_duration_s": (_NUM, 0.1), **_SECURITY},
    "bounds-compare": {"q_key": (_NUM, 0.0402), "q_test": (_NUM, 0.061), "test_ratio": (_NUM, 1.0),
                       "blocks": (list, [1e3, 1e4, 4e4, 1e5, 1e6, 1e7]), **_SECURITY},
}
COMMON = {"seed": (int, 0)}


def load_config(path: str, command: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    schema = {**SCHEMAS[command], **COMMON}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) for '{command}': {', '.join(unknown)}")
    cfg = {}
    for key, (typ, default) in schema.items():
        if key not in raw:
            cfg[key] = default
            continue
        val = raw[key]
        ok = isinstance(val, typ) and not isinstance(val, bool)
        if ok and typ is int and isinstance(val, float):
            ok = False
        if not ok:
            want = typ.__name__ if isinstance(typ, type) else "number"
            raise ConfigError(f"{path}: field '{key}': expected {want}, got {json.dumps(val)}")
        if isinstance(val, float) and not math.isfinite(val):
            raise ConfigError(f"{path}: field '{key}': must be finite")
        cfg[key] = val
    return cfg


def security(cfg) -> SecurityParams:
    try:
        return SecurityParams(cfg["eps_sec"], cfg["eps_cor"], cfg["f_ec"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def source_plan(cfg, duration_s):
    preset = cfg["preset"]
    if preset == "ideal":
        return ideal_plan(mu=cfg["mu"] or 0.05, duration_s=duration_s, seed=cfg["seed"])
    if preset == "certification":
        return certification_plan(mu=cfg["mu"], loss_db=cfg["loss_db"], duration_s=duration_s, seed=cfg["seed"],
                                  **_optional(cfg, "joint_visibility"))
    raise ConfigError(f"field 'preset': expected 'ideal' or 'certification', got {preset!r}")


def _optional(cfg, key):
    return {key: cfg[key]} if cfg.get(key) is not None else {}


# ------------------------------------------------------------ subcommands


def cmd_fringe(cfg, out: Path, plot: bool) -> dict:
    if cfg["points"] < 5:
        raise ConfigError("field 'points': need at least 5")
    plan = source_plan(cfg, cfg["duration_s"])
    thetas = np.linspace(0, 2 * np.pi, cfg["points"], endpoint=False)
    scan = fringe_scan(plan, thetas, cfg["theta_b"], cfg["window_ps"])
    flat = scan.counts.reshape(len(thetas), 4)
    write_table(out / "fringe.csv", ("theta",) + tuple(f"counts_{p}" for p in FRINGE_PAIRS),
                [[t, *row] for t, row in zip(thetas, flat)])
    rows = []
    power = thetas / np.pi * cfg["p_pi_mw"]
    for name, fit in scan.fits.items():
        pf = fit_fringe_power(power, scan.curves()[name], cfg["p_pi_mw"])
        rows.append([name, fit.amplitude, fit.sigma_amplitude, fit.offset, fit.sigma_offset, fit.phase,
                     fit.sigma_phase, fit.visibility, fit.sigma_visibility, pf.visibility, pf.kappa])
    write_table(out / "fit.csv", ("pair", "amplitude", "sigma_amplitude", "offset", "sigma_offset", "phase",
                                  "sigma_phase", "visibility", "sigma_visibility", "visibility_power_fit",
                                  "kappa_rad_per_mw"), rows)
    if plot:
        plot_fringe(out / "fringe.svg", thetas, scan.curves(), scan.fits)
    return {"visibility": scan.visibility, "sigma_visibility": scan.sigma_visibility,
            "bell_violation_sigma": scan.bell_sigma, "coincidences": int(flat.sum())}


def cmd_chsh(cfg, out: Path, plot: bool) -> dict:
    plan = source_plan(cfg, cfg["duration_s"])
    run = chsh_run(plan, cfg["window_ps"])
    rows = []
    for (i, j), table in sorted(run.counts.items()):
        e, se = run.correlators()[(i, j)]
        rows.append([i + 1, j + 1, CHSH_THETA_A[i], CHSH_THETA_B[j], *table.ravel(), e, se])
    write_table(out / "chsh.csv", ("setting_a", "setting_b", "theta_a", "theta_b")
                + tuple(f"counts_{p}" for p in FRINGE_PAIRS) + ("E", "sigma_E"), rows)
    if plot:
        labels = [f"{r[0]}{r[1]}" for r in rows]
        plot_series(out / "chsh.svg", range(len(rows)), {"E": [r[-2] for r in rows]},
                    "setting pair (" + ",".join(labels) + ")", "correlator E")
    return {"S": run.s, "sigma_S": run.sigma_s, "violation_sigma": (run.s - 2) / run.sigma_s}


def cmd_tomo(cfg, out: Path, plot: bool) -> dict:
    plan = source_plan(cfg, cfg["duration_s"])
    data = simulate_tomography(plan, window_ps=cfg["window_ps"])
    if cfg["method"] == "mle":
        rho = mle_reconstruct(data)
    elif cfg["method"] == "linear":
        rho = project_physical(linear_inversion(data))
    else:
        raise ConfigError("field 'method': expected 'mle' or 'linear'")
    write_table(out / "counts.csv", ("setting", "n00", "n01", "n10", "n11"),
                [[s.label, *map(int, c)] for s, c in zip(data.settings, data.counts)])
    write_matrix(out / "rho_real.csv", rho.real)
    write_matrix(out / "rho_imag.csv", rho.imag)
    metrics = entanglement_metrics(rho).as_dict()
    write_kv(out / "metrics.csv", metrics)
    if plot:
        plot_matrix(out / "rho.svg", rho)
    return {**metrics, "counts_total": int(data.counts.sum())}


def _qkd_summary(block, report, extra=None) -> dict:
    d = block.acquisition_duration_s
    out = {
        "key_basis": block.key_basis, "test_basis": block.test_basis,
        "n_key": block.n_key, "n_test": block.n_test,
        "sifted_rate_key_hz": block.n_key / d, "sifted_rate_test_hz": block.n_test / d,
        "sifting_factor": block.sifting_factor,
    }
    out.update(report.as_dict())
    out.update(extra or {})
    return out


def cmd_qkd_passive(cfg, out: Path, plot: bool) -> dict:
    params = security(cfg)
    plan = passive_plan(cfg["extra_bob_loss_db"], cfg["duration_s"], cfg["seed"], p_z=cfg["p_z"],
                        **_optional(cfg, "joint_visibility"), **_optional(cfg, "mu"))
    result = run_simulation(plan)
    zw = optimize_z_window(plan, result.streams, cfg["z_grid_ps"], params.f_ec)
    write_table(out / "z_window.csv", ("half_width_ps", "n_key", "qber_z", "score"),
                list(zip(zw.grid_ps, zw.n_key, zw.qber_z, zw.scores)))
    block = sift_streams(plan, result.streams, slot_layout(plan, z_half_width_ps=zw.half_width_ps))
    report = key_rate_report(block, params, cfg["block_size"])
    if plot:
        plot_series(out / "z_window.svg", zw.grid_ps, {"Q_Z": zw.qber_z}, "Z half-width (ps)", "QBER")
    return _qkd_summary(block, report, {"z_half_width_ps": zw.half_width_ps, "warnings": len(result.warnings)})


def cmd_qkd_active(cfg, out: Path, plot: bool) -> dict:
    params = security(cfg)
    orders = cfg["prbs_orders"]
    if len(orders) != 2 or any(o not in (7, 9) for o in orders):
        raise ConfigError("field 'prbs_orders': expected two of 7, 9")
    plan = active_plan(cfg["extra_bob_loss_db"], cfg["duration_s"], cfg["seed"], order_a=orders[0],
                       order_b=orders[1], **_optional(cfg, "joint_visibility"), **_optional(cfg, "mu"))
    result = run_simulation(plan)
    block = sift_streams(plan, result.streams, schedule=result.schedule)
    report = key_rate_report(block, params, cfg["block_size"])
    write_table(out / "bases.csv", ("basis", "n_sifted", "errors", "qber"),
                [[b, n, e, e / n if n else 0.0] for b, (n, e) in sorted(block.per_basis.items())])
    if plot:
        plot_series(out / "bases.svg", range(len(block.per_basis)),
                    {"QBER": [e / n for n, e in block.per_basis.values()]}, "basis (X, Y)", "QBER")
    log.info("joint basis period %d cycles", result.schedule.joint_period)
    return _qkd_summary(block, report, {"joint_basis_period": result.schedule.joint_period})


def cmd_sweep_loss(cfg, out: Path, plot: bool) -> dict:
    params = security(cfg)
    if cfg["protocol"] == "passive":
        template = passive_plan(duration_s=cfg["base_duration_s"], seed=cfg["seed"])
    elif cfg["protocol"] == "active":
        template = active_plan(duration_s=cfg["base_duration_s"], seed=cfg["seed"])
    else:
        raise ConfigError("field 'protocol': expected 'passive' or 'active'")
    points = skr_vs_loss_sweep(template, cfg["losses_db"], params, cfg["block_size"], cfg["z_half_width_ps"],
                               cfg["target_test_events"], max_duration_s=cfg["max_duration_s"])
    rows = [p.row() for p in points]
    write_table(out / "sweep.csv", SWEEP_COLUMNS, rows)
    if plot:
        x = [r["loss_db"] for r in rows]
        plot_series(out / "sweep_skr.svg", x, {k: [max(r[k], 1e-3) for r in rows] for k in
                                               ("skr_asym", "skr_chernoff", "skr_serfling")},
                    "added loss (dB)", "SKR (bit/s)", logy=True)
        plot_series(out / "sweep_qber.svg", x, {k: [r[k] for r in rows] for k in ("qber_key", "qber_test")},
                    "added loss (dB)", "QBER")
    positive = [r["fiber_km_equiv"] for r in rows if r["skr_asym"] > 0]
    return {"points": len(rows), "max_positive_fiber_km_equiv": max(positive) if positive else 0.0}


def bounds_table(q_key, q_test, blocks, params: SecurityParams, test_ratio: float = 1.0):
    rows = []
    asym = asymptotic_fraction(q_key, q_test, params.f_ec)
    for n in blocks:
        n = float(n)
        ser = key_length(n, n * test_ratio, q_key, q_test, params, SerflingBound())
        che = key_length(n, n * test_ratio, q_key, q_test, params, ChernoffBound())
        adv = (che.bits / ser.bits - 1) * 100 if ser.bits > 0 else math.inf
        rows.append({"block_size": n, "fraction_asym": asym, "fraction_serfling": ser.bits / n,
                     "fraction_chernoff": che.bits / n, "chernoff_advantage_pct": adv})
    return rows


def cmd_bounds_compare(cfg, out: Path, plot: bool) -> dict:
    params = security(cfg)
    blocks = sorted(float(b) for b in cfg["blocks"])
    if not blocks or blocks[0] <= 0:
        raise ConfigError("field 'blocks': expected positive block sizes")
    rows = bounds_table(cfg["q_key"], cfg["q_test"], blocks, params, cfg["test_ratio"])
    cols = ("block_size", "fraction_asym", "fraction_serfling", "fraction_chernoff", "chernoff_advantage_pct")
    write_table(out / "bounds.csv", cols, rows)
    if plot:
        plot_series(out / "bounds.svg", blocks, {k: [r[k] for r in rows] for k in cols[1:4]},
                    "block size", "key fraction", logx=True)
    ordered = all(r["fraction_chernoff"] >= r["fraction_serfling"] for r in rows)
    return {"chernoff_ge_serfling": ordered, "blocks": len(rows)}


COMMANDS = {
    "fringe": cmd_fringe,
    "chsh": cmd_chsh,
    "tomo": cmd_tomo,
    "qkd-passive": cmd_qkd_passive,
    "qkd-active": cmd_qkd_active,
    "sweep-loss": cmd_sweep_loss,
    "bounds-compare": cmd_bounds_compare,
}


# ------------------------------------------------------------ driver


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tbq", description="Time-bin entanglement and QKD simulator")
    ap.add_argument("--version", action="version", version=f"tbq {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--plot", action="store_true", help="also write SVG figures")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _publish(tmp: Path, out: Path) -> None:
    if not out.exists():
        os.replace(tmp, out)
        return
    for f in sorted(tmp.iterdir()):
        os.replace(f, out / f.name)
    tmp.rmdir()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if not 0 <= cfg["seed"] < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        config_bytes = Path(args.config).read_bytes()
    except ConfigError as exc:
        print(f"tbq: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if out.exists() and not out.is_dir():
        print(f"tbq: config error: --out {out} is not a directory", file=sys.stderr)
        return EXIT_CONFIG
    parent = out.resolve().parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=parent))
    except OSError as exc:
        print(f"tbq: config error: output directory not writable: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = COMMANDS[args.command](cfg, tmp, args.plot)
        write_kv(tmp / "summary.csv", summary)
        (tmp / "meta.txt").write_text(
            f"command={args.command}\nseed={cfg['seed']}\nversion={__version__}\n"
            f"config_sha256={hashlib.sha256(config_bytes).hexdigest()}\n"
            f"config={json.dumps(cfg, sort_keys=True)}\n",
            encoding="utf-8",
        )
        _publish(tmp, out)
    except ConfigError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        print(f"tbq: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure must leave no partial output
        shutil.rmtree(tmp, ignore_errors=True)
        log.debug("run failed", exc_info=True)
        print(f"tbq: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for k, v in summary.items():
        log.info("%s = %s", k, v)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
