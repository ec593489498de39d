"""Command-line front end.

Commands: validate | simulate | decay-report | hum | observability |
convergence.  Exit codes: 0 ok, 1 hypothesis or criterion failure,
2 configuration error, 3 solver or conjugate-gradient failure.  All
numeric output uses shortest round-trip decimals, so identical configs
and seeds produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, load_config
from .decay import (
    check_dissipation_identity,
    check_theoretical_bound,
    check_trace_estimates,
    lyapunov_trace,
)
from .discretize import (
    VARIANT_CONTROLLED,
    VARIANT_STABILIZED,
    DiscreteState,
    Grid1D,
    build_system,
)
from .hypotheses import InfeasibleRates, select_mus, validate_gains
from .hum import CgError, compute_null_control, estimate_observability
from .timestep import IntegrationError, SchemeConfig, simulate

EXIT_OK = 0
EXIT_HYPOTHESIS = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(x):
    return repr(float(x))


def _write_csv(path, header, columns):
    rows = len(columns[0])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_fmt(col[i]) for col in columns) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _manifest(cfg, extra):
    payload = {
        "config_hash": cfg.config_hash,
        "versions": {
            "sandwichbeam": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    payload.update(extra)
    return payload


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_validate(cfg, args):
    checks = []
    if cfg.delays is not None:
        try:
            report = validate_gains(cfg.params, cfg.gains, cfg.delays)
            checks.extend(c.as_dict() for c in report.conditions)
        except ValueError:
            pass  # a slope bound >= 1 is reported through the slope rows below
        cfg.delays.check_sampled(cfg.scheme.T)
    for i in range(3):
        if cfg.delays is not None:
            d = cfg.delays.slope_bound(i)
            checks.append(
                {
                    "condition_id": f"delay_slope_channel_{i + 1}",
                    "lhs": d,
                    "rhs": 1.0,
                    "margin": 1.0 - d,
                    "pass": d < 1.0,
                }
            )
        if cfg.damping is not None:
            floor = cfg.damping.floor(i)
            checks.append(
                {
                    "condition_id": f"damping_floor_channel_{i + 1}",
                    "lhs": floor,
                    "rhs": 0.0,
                    "margin": floor,
                    "pass": floor > 0.0,
                }
            )
    payload = {"conditions": checks, "all_pass": all(c["pass"] for c in checks)}
    os.makedirs(cfg.outdir, exist_ok=True)
    path = _write_json(os.path.join(cfg.outdir, "hypotheses.json"), _manifest(cfg, payload))
    _say(args, f"wrote {path}; all_pass={payload['all_pass']}")
    return EXIT_OK if payload["all_pass"] else EXIT_HYPOTHESIS


def _run_simulation(cfg):
    sys_ = cfg.build_system()
    state = cfg.build_initial(sys_)
    if cfg.variant == VARIANT_STABILIZED:
        histories = cfg.build_histories(sys_, state) if cfg.gains.any_delayed else None
        out = simulate(
            state,
            sys_,
            cfg.scheme,
            gains=cfg.gains,
            delays=cfg.delays,
            damping=cfg.damping,
            histories=histories,
        )
    else:
        out = simulate(state, sys_, cfg.scheme)
    return sys_, state, out


def _trajectory_columns(out):
    header = ["t", "E", "E_field", "trace1", "trace2", "trace3"]
    cols = [
        out.times,
        out.energy,
        out.field_energy,
        out.trace_velocities[:, 0],
        out.trace_velocities[:, 1],
        out.trace_velocities[:, 2],
    ]
    if out.delayed_traces is not None:
        header += ["z1", "z2", "z3"]
        cols += [out.delayed_traces[:, i] for i in range(3)]
    if out.displacement_traces is not None:
        header += ["u_L", "v_L", "w_L"]
        cols += [out.displacement_traces[:, i] for i in range(3)]
    return header, cols


def cmd_simulate(cfg, args):
    os.makedirs(cfg.outdir, exist_ok=True)
    try:
        sys_, state, out = _run_simulation(cfg)
    except IntegrationError as exc:
        _write_json(
            os.path.join(cfg.outdir, "manifest.json"),
            _manifest(cfg, {"status": "failed", "error": str(exc), "partial": True}),
        )
        _say(args, f"integration failed: {exc}")
        return EXIT_SOLVER
    header, cols = _trajectory_columns(out)
    csv_path = _write_csv(os.path.join(cfg.outdir, "trajectory.csv"), header, cols)
    invariants = {
        "relative_drift": out.relative_drift(),
        "max_energy_increase": out.max_energy_increase(),
        "monotone_energy": out.max_energy_increase() <= 1e-10 * max(out.energy[0], 1e-300),
        "finite": True,
    }
    man_path = _write_json(
        os.path.join(cfg.outdir, "manifest.json"),
        _manifest(cfg, {"status": "ok", "invariants": invariants, "n_steps": out.n_steps}),
    )
    _say(args, f"wrote {csv_path} and {man_path}")
    return EXIT_OK


def cmd_decay_report(cfg, args):
    if cfg.variant != VARIANT_STABILIZED:
        raise ConfigError("decay-report needs variant = stabilized_delayed")
    os.makedirs(cfg.outdir, exist_ok=True)
    try:
        rates = select_mus(cfg.params, cfg.delays, cfg.damping, cfg.gains)
    except InfeasibleRates as exc:
        _say(args, f"rate search infeasible: {exc}")
        return EXIT_HYPOTHESIS
    try:
        sys_, state, out = _run_simulation(cfg)
    except IntegrationError as exc:
        _say(args, f"integration failed: {exc}")
        return EXIT_SOLVER
    resid = check_dissipation_identity(out, cfg.params, cfg.gains, cfg.delays, cfg.damping)
    window = (cfg.fit_window[0] * cfg.scheme.T, cfg.fit_window[1] * cfg.scheme.T)
    report = check_theoretical_bound(out, rates, window=window, dissipation_residual=resid)
    lyap = lyapunov_trace(out, sys_, rates, cfg.delays, cfg.gains)
    idx = np.searchsorted(out.times, out.sample_times)
    e_samples = out.energy[idx]
    cushion = 1e-9 * np.maximum(e_samples, 1e-300)
    equivalence_ok = bool(
        np.all(lyap >= (1.0 - rates.mu4) * e_samples - cushion)
        and np.all(lyap <= (1.0 + rates.mu4) * e_samples + cushion)
    )
    traces = check_trace_estimates(out, sys_, cfg.gains, cfg.damping)
    bound = rates.zeta * np.exp(-rates.rate * out.sample_times) * out.energy[0]
    resid_at_samples = np.concatenate([[0.0], resid])[idx]
    csv_path = _write_csv(
        os.path.join(cfg.outdir, "decay_series.csv"),
        ["t", "E", "L", "bound", "residual"],
        [out.sample_times, e_samples, lyap, bound, resid_at_samples],
    )
    payload = {
        "rates": {
            "mu0": rates.mu0,
            "mu1": rates.mu1,
            "mu2": rates.mu2,
            "mu3": rates.mu3,
            "mu4": rates.mu4,
            "lambda": rates.lam,
            "zeta": rates.zeta,
            "rate": rates.rate,
            # the two printed readings of the mass-versus-layer coefficient
            # ratios coincide because the layer thickness cancels
            "rate_constant_readings": {
                "mass_coefficients": rates.rate,
                "per_layer": rates.rate,
            },
        },
        "decay_report": report.as_dict(),
        "lyapunov_equivalence": equivalence_ok,
        "monotone_energy": out.max_energy_increase() <= 1e-10 * max(out.energy[0], 1e-300),
        "trace_estimates": traces,
    }
    man_path = _write_json(os.path.join(cfg.outdir, "decay_report.json"), _manifest(cfg, payload))
    _say(args, f"wrote {csv_path} and {man_path}")
    passed = (
        payload["monotone_energy"]
        and equivalence_ok
        and report.violations == 0
        and report.fitted_rate >= 0.95 * rates.rate
        and traces["trace_bound"]["holds"]
        and traces["initial_bound"]["holds"]
    )
    return EXIT_OK if passed else EXIT_HYPOTHESIS


def cmd_hum(cfg, args):
    if cfg.variant != VARIANT_CONTROLLED:
        raise ConfigError("hum needs variant = controlled_conservative")
    os.makedirs(cfg.outdir, exist_ok=True)
    sys_ = cfg.build_system()
    state = cfg.build_initial(sys_)
    T = cfg.hum["T"]
    dt = cfg.hum["dt"] or T / (16 * cfg.n)
    run_cfg = SchemeConfig(dt=dt, T=T, stride=max(int(round(T / dt)), 1))
    try:
        sol = compute_null_control(
            state, T, sys_, run_cfg,
            tol=cfg.hum["cg_tol"], maxit=cfg.hum["maxit"], tikhonov=cfg.hum["tikhonov"],
        )
    except (CgError, IntegrationError) as exc:
        _say(args, f"control synthesis failed: {exc}")
        return EXIT_SOLVER
    tgrid = dt * np.arange(sol.controls.shape[0])
    csv_path = _write_csv(
        os.path.join(cfg.outdir, "controls.csv"),
        ["t", "f1", "f2", "f3"],
        [tgrid, sol.controls[:, 0], sol.controls[:, 1], sol.controls[:, 2]],
    )
    payload = {
        "iterations": sol.iterations,
        "converged": sol.converged,
        "residuals": [float(v) for v in sol.residuals],
        "terminal_rel_norm": sol.terminal_rel_norm,
        "control_cost": sol.control_cost,
        "rayleigh": {"min": sol.min_rayleigh, "max": sol.max_rayleigh},
        "T": T,
        "dt": dt,
    }
    man_path = _write_json(os.path.join(cfg.outdir, "hum.json"), _manifest(cfg, payload))
    _say(
        args,
        f"wrote {csv_path} and {man_path}; terminal_rel={sol.terminal_rel_norm:.3e} "
        f"after {sol.iterations} iterations",
    )
    return EXIT_OK if sol.terminal_rel_norm <= cfg.hum["terminal_tol"] else EXIT_SOLVER


def cmd_observability(cfg, args):
    if cfg.variant != VARIANT_CONTROLLED:
        raise ConfigError("observability needs variant = controlled_conservative")
    os.makedirs(cfg.outdir, exist_ok=True)
    sys_ = cfg.build_system()
    T = cfg.observability["T"]
    dt = cfg.observability["dt"] or T / (16 * cfg.n)
    run_cfg = SchemeConfig(dt=dt, T=T, stride=max(int(round(T / dt)), 1))
    qmin, qmax = estimate_observability(
        T,
        sys_,
        run_cfg,
        n_samples=cfg.observability["samples"],
        seed=cfg.observability["seed"],
        cutoff=cfg.observability["cutoff"],
    )
    payload = {
        "min_rayleigh": qmin,
        "max_rayleigh": qmax,
        "samples": cfg.observability["samples"],
        "T": T,
        "dt": dt,
        "observable": qmin > 0.0,
    }
    path = _write_json(os.path.join(cfg.outdir, "observability.json"), _manifest(cfg, payload))
    _say(args, f"wrote {path}; min={qmin:.4g} max={qmax:.4g}")
    return EXIT_OK


def _state_l2_norm(state, sys_):
    """Mass-weighted L2 norm of a state difference (no derivative weights:
    order estimates should not be polluted by marginally resolved modes)."""
    total = 0.0
    for name in ("u", "v", "w"):
        blk = sys_.block(name)
        wts = sys_.block_weights[name]
        total += float(np.dot(wts, state.q[blk] ** 2) + np.dot(wts, state.p[blk] ** 2))
    return float(np.sqrt(total))


def _restrict_state(fine_state, fine_sys, coarse_sys):
    """Restrict a fine-grid state to a nested coarse grid (factor-2 nodes)."""
    ratio = fine_sys.grid.N // coarse_sys.grid.N
    q = np.zeros(coarse_sys.ndof)
    p = np.zeros(coarse_sys.ndof)
    for name in ("u", "v", "w"):
        fi = {"u": fine_sys.layout.iu, "v": fine_sys.layout.iv, "w": fine_sys.layout.iw}[name]
        ci = {"u": coarse_sys.layout.iu, "v": coarse_sys.layout.iv, "w": coarse_sys.layout.iw}[name]
        for j in range(coarse_sys.grid.N + 1):
            if ci[j] < 0:
                continue
            q[ci[j]] = fine_state.q[fi[ratio * j]]
            p[ci[j]] = fine_state.p[fi[ratio * j]]
    return DiscreteState(q=q, p=p, t=fine_state.t)


def _final_state(out):
    return DiscreteState(q=out.states_q[-1].copy(), p=out.states_p[-1].copy(), t=out.times[-1])


def cmd_convergence(cfg, args):
    os.makedirs(cfg.outdir, exist_ok=True)
    conv = cfg.convergence
    rows = []

    def run_at(n, dt, T):
        sys_ = build_system(Grid1D(N=n, L=cfg.params.L), cfg.params, cfg.variant)
        state = cfg.build_initial(sys_)
        run_cfg = SchemeConfig(dt=dt, T=T, stride=max(int(round(T / dt)), 1))
        if cfg.variant == VARIANT_STABILIZED:
            histories = cfg.build_histories(sys_, state) if cfg.gains.any_delayed else None
            out = simulate(
                state, sys_, run_cfg,
                gains=cfg.gains, delays=cfg.delays, damping=cfg.damping, histories=histories,
            )
        else:
            out = simulate(state, sys_, run_cfg)
        return sys_, out

    if conv["mode"] in ("spatial", "both"):
        ladder = sorted(conv["resolutions"])
        if len(ladder) < 3:
            raise ConfigError("spatial convergence needs at least 3 resolutions")
        # reference four refinements past the finest measured level keeps the
        # finite-reference bias of the order estimates below 0.1
        ref_n = 4 * ladder[-1]
        ref_sys, ref_out = run_at(ref_n, conv["dt"], conv["T"])
        errors = []
        for n in ladder:
            sys_n, out_n = run_at(n, conv["dt"], conv["T"])
            restricted = _restrict_state(_final_state(ref_out), ref_sys, sys_n)
            diff = DiscreteState(
                q=_final_state(out_n).q - restricted.q,
                p=_final_state(out_n).p - restricted.p,
            )
            errors.append(_state_l2_norm(diff, sys_n))
        for i, n in enumerate(ladder):
            order = np.log2(errors[i] / errors[i + 1]) if i + 1 < len(errors) else float("nan")
            monotone = errors[i] > errors[i + 1] if i + 1 < len(errors) else True
            rows.append(("spatial", n, cfg.params.L / n, errors[i], order, int(not monotone)))

    if conv["mode"] in ("temporal", "both"):
        dts = sorted(conv["dts"], reverse=True)
        if len(dts) < 2:
            raise ConfigError("temporal convergence needs at least 2 steps")
        ref_dt = dts[-1] / conv["reference_divide"]
        _, ref_out = run_at(conv["n"], ref_dt, conv["T"])
        ref_state = _final_state(ref_out)
        sys_n = None
        errors = []
        for dt in dts:
            sys_n, out_n = run_at(conv["n"], dt, conv["T"])
            diff = DiscreteState(
                q=_final_state(out_n).q - ref_state.q, p=_final_state(out_n).p - ref_state.p
            )
            errors.append(_state_l2_norm(diff, sys_n))
        for i, dt in enumerate(dts):
            order = np.log2(errors[i] / errors[i + 1]) if i + 1 < len(errors) else float("nan")
            monotone = errors[i] > errors[i + 1] if i + 1 < len(errors) else True
            rows.append(("temporal", conv["n"], dt, errors[i], order, int(not monotone)))

    path = os.path.join(cfg.outdir, "convergence.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("study,resolution,step,error,observed_order,non_monotone\n")
        for study, n, h, err, order, flag in rows:
            fh.write(f"{study},{n},{_fmt(h)},{_fmt(err)},{_fmt(order)},{flag}\n")
    _say(args, f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "decay-report": cmd_decay_report,
    "hum": cmd_hum,
    "observability": cmd_observability,
    "convergence": cmd_convergence,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="sandwichbeam",
        description="Sandwich-beam laboratory: delayed boundary damping and boundary null control.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the scenario document")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="initial-data seed override")
    parser.add_argument("--stride", type=int, default=None, help="state decimation override")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(
            args.config,
            overrides={"seed": args.seed, "stride": args.stride, "outdir": args.out},
        )
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, CgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
