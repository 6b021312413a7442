"""Command-line front end binding model configs to the library operations.

Every subcommand takes a JSON model-config path as its first positional
argument, writes machine-readable artifacts (CSV and/or JSON) into ``--out``
(default: current directory), and drops a ``manifest.json`` alongside them
recording the command, the SHA-256 of the raw config bytes, all numeric
parameters, the seed, the library version, and the wall-clock time.  CSV
files use ``.`` as the decimal separator and print floats with 17 significant
digits, so identical invocations reproduce byte-identical output.

Exit codes
----------
0   success
2   validation failure (malformed config, structural violation, bad arguments)
3   numeric non-convergence (truncation above tolerance, iteration cap hit,
    or a Monte Carlo cross-check outside its 3-standard-error band)

Subcommands
-----------
validate           load + validate a config, report diagnostics
simulate           sample uniformized paths, one CSV row per Poisson epoch
gmatrix            survival matrices G(s, t) on requested time points
density            inter-arrival marginal density values with tail bounds
bridge             per-order integrated bridge masses (+ optional binary dump)
first-return       first-return descriptor matrix Psi
finite-time        horizon-limited return descriptor (arrival-free models)
ruin               ruin descriptor via an Erlang ramp
mc                 Monte Carlo estimates (first-return | ruin | bridge)
convergence-study  analytic vs Monte Carlo 3-SE cross-check

Binary bridge dump layout (all little-endian)
---------------------------------------------
magic ``b"FRBRIDG1"`` (8 bytes) ·  5 × uint64 dims ``(n_orders, n_up,
n_down, n_durations, n_levels)`` · 7 × float64 ``(theta1, theta2, z, u_max,
du, l_max, dl)`` · ``n_orders`` × uint64 order labels · then
``n_orders·n_up·n_down·n_durations·n_levels`` float64 density values in
row-major ``(order, i, j, duration, level)`` order.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import struct
import sys
import time

import numpy as np

from . import __version__
from .bridge import LevelDurationGrid, bridge_recursion, integrate_bridge
from .descriptors import finite_time_return, psi, ruin_descriptor
from .homogeneous import LevelGrid
from .model import (
    FluidModel,
    FluidModelError,
    config_hash,
    load_model_config,
    validate_model,
)
from .montecarlo import (
    ConvergenceError,
    mc_bridge_histogram,
    mc_first_return,
    mc_ruin,
)
from .simulate import simulate_path
from .survival import iph_marginal, survival_matrix

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3

_BRIDGE_MAGIC = b"FRBRIDG1"


def _fmt(x) -> str:
    """Floats with 17 significant digits: round-trip exact, locale-free."""
    return format(float(x), ".17g")


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("FLUIDRISK_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise FluidModelError(f"FLUIDRISK_THREADS must be an integer, got {env!r}")
    return 1


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path: str, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(args, out: str, started: float, extra: dict | None = None) -> None:
    skip = {"func", "config", "out"}
    params = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        params[key] = value
    manifest = {
        "command": args.command if "command" not in params else params.pop("command"),
        "config_hash": config_hash(args.config),
        "parameters": params,
        "seed": params.get("seed"),
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _load(args) -> FluidModel:
    return load_model_config(args.config)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    report = validate_model(model)
    out = _out_dir(args)
    summary = {
        "ok": report.ok,
        "n_samples": report.n_samples,
        "worst": report.worst,
        "messages": list(report.messages),
        "p": model.p,
        "gamma": model.gamma,
        "ascending_states": model.s_plus.tolist(),
        "descending_states": model.s_minus.tolist(),
    }
    with open(os.path.join(out, "validate.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args, out, started)
    print(
        f"config OK: {model.p} states ({model.s_plus.size} ascending, "
        f"{model.s_minus.size} descending), gamma={model.gamma:g}, "
        f"{report.n_samples} kernel samples checked"
    )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    rows = []
    for k in range(args.n_paths):
        path = simulate_path(model, args.z, args.horizon, seed=args.seed + k)
        for e in range(path.states.size):
            rows.append(
                [
                    str(k),
                    str(e),
                    _fmt(path.poisson_epochs[e]),
                    str(int(path.states[e])),
                    _fmt(path.durations[e]),
                    _fmt(path.fluid[e]),
                    _fmt(path.dividend_integral[e]),
                    _fmt(path.jump_costs[e]),
                ]
            )
    _write_csv(
        os.path.join(out, "paths.csv"),
        ["path", "epoch", "time", "state", "duration", "level", "dividends", "costs"],
        rows,
    )
    _write_manifest(args, out, started)
    print(f"wrote {len(rows)} epochs over {args.n_paths} path(s) to {out}/paths.csv")
    return EXIT_OK


def _cmd_gmatrix(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    p = model.p
    header = ["s", "t"] + [f"G_{i}_{j}" for i in range(p) for j in range(p)] + ["error_estimate"]
    rows = []
    for t in args.t:
        if t < args.s:
            raise FluidModelError(f"gmatrix needs t >= s, got t={t} < s={args.s}")
        res = survival_matrix(model.kernel, args.s, t, step=args.step)
        rows.append(
            [_fmt(args.s), _fmt(t)]
            + [_fmt(v) for v in np.asarray(res.matrix).ravel()]
            + [_fmt(res.error_estimate)]
        )
    _write_csv(os.path.join(out, "gmatrix.csv"), header, rows)
    _write_manifest(args, out, started)
    print(f"wrote {len(rows)} survival matrices to {out}/gmatrix.csv")
    return EXIT_OK


def _cmd_density(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    rows = []
    worst_tail = 0.0
    all_converged = True
    for y in args.y:
        res = iph_marginal(model, args.n, y, u_max=args.u_max, step=args.step)
        worst_tail = max(worst_tail, res.tail_bound)
        all_converged = all_converged and res.converged
        rows.append(
            [
                str(args.n),
                _fmt(y),
                _fmt(res.density),
                _fmt(res.tail_bound),
                _fmt(res.initial_mass),
            ]
        )
    _write_csv(
        os.path.join(out, "density.csv"),
        ["n", "y", "density", "tail_bound", "initial_mass"],
        rows,
    )
    _write_manifest(args, out, started)
    print(f"wrote {len(rows)} density values to {out}/density.csv")
    if not all_converged:
        print(f"non-convergence: duration-window tail bound {worst_tail:.3e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _bridge_grid(model: FluidModel, args) -> LevelDurationGrid:
    grid = LevelDurationGrid.for_model(model)
    u_max = args.u_max if args.u_max is not None else grid.u_max
    du = args.du if args.du is not None else grid.du
    l_max = args.l_max if args.l_max is not None else grid.l_max
    dl = args.dl if args.dl is not None else grid.dl
    return LevelDurationGrid(u_max=u_max, du=du, l_max=l_max, dl=dl)


def _cmd_bridge(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    grid = _bridge_grid(model, args)
    tensor = bridge_recursion(model, grid, args.theta1, args.theta2, n_max=args.n_max)
    diag = tensor.diagnostics
    header = [
        "n",
        "i",
        "j",
        "L_value",
        "holding_tail_bound",
        "level_edge_max_density",
        "duration_edge_max_density",
        "negative_clamp_magnitude",
    ]
    diag_cols = [
        _fmt(diag.get("holding_tail_bound", 0.0)),
        _fmt(diag.get("level_edge_max_density", 0.0)),
        _fmt(diag.get("duration_edge_max_density", 0.0)),
        _fmt(abs(diag.get("negative_min", 0.0))),
    ]
    rows = []
    for n in tensor.orders:
        L = integrate_bridge(tensor, n, args.z)
        for a, i in enumerate(model.s_plus):
            for b, j in enumerate(model.s_minus):
                rows.append([str(n), str(int(i)), str(int(j)), _fmt(L[a, b])] + diag_cols)
    _write_csv(os.path.join(out, "bridge.csv"), header, rows)

    if args.binary:
        orders = list(tensor.orders)
        stack = np.stack([tensor.value(n, args.z) for n in orders])
        with open(os.path.join(out, args.binary), "wb") as fh:
            fh.write(_BRIDGE_MAGIC)
            fh.write(struct.pack("<5Q", *stack.shape))
            fh.write(
                struct.pack(
                    "<7d",
                    args.theta1,
                    args.theta2,
                    args.z,
                    grid.u_max,
                    grid.du,
                    grid.l_max,
                    grid.dl,
                )
            )
            fh.write(struct.pack(f"<{len(orders)}Q", *orders))
            fh.write(np.ascontiguousarray(stack, dtype="<f8").tobytes())

    _write_manifest(args, out, started)
    print(f"wrote bridge masses for orders {list(tensor.orders)} to {out}/bridge.csv")
    return EXIT_OK


def _descriptor_rows(model: FluidModel, matrix: np.ndarray, n_used: int, tail: float):
    rows = []
    for a, i in enumerate(model.s_plus):
        for b, j in enumerate(model.s_minus):
            rows.append(
                [str(int(i)), str(int(j)), _fmt(matrix[a, b]), str(n_used), _fmt(tail)]
            )
    return rows


def _cmd_first_return(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    res = psi(
        model,
        args.theta1,
        args.theta2,
        z=args.z,
        eps=args.eps,
        n_max=args.n_max,
    )
    _write_csv(
        os.path.join(out, "first_return.csv"),
        ["i", "j", "value", "n_used", "tail_estimate"],
        _descriptor_rows(model, res.matrix, res.n_used, res.tail_estimate),
    )
    _write_manifest(args, out, started, extra={"converged": res.converged})
    print(
        f"first-return descriptor: total mass {res.matrix.sum():.6f}, "
        f"n_used={res.n_used}, tail={res.tail_estimate:.3e}"
    )
    if not res.converged:
        print("non-convergence: truncation tail above eps", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _cmd_finite_time(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    res = finite_time_return(
        model,
        args.horizon,
        theta1=args.theta1,
        theta2=args.theta2,
        z=args.z,
        m_max=args.m_max,
        eps=args.eps,
    )
    _write_csv(
        os.path.join(out, "finite_time.csv"),
        ["i", "j", "value", "n_used", "tail_estimate"],
        _descriptor_rows(model, res.value, res.n_used, res.tail_estimate),
    )
    _write_manifest(args, out, started)
    print(
        f"finite-time return by t={args.horizon:g}: total {res.value.sum():.6f}, "
        f"orders up to {res.n_used}, tail bound {res.tail_estimate:.3e}"
    )
    if res.tail_estimate > args.eps:
        print("non-convergence: epoch-count tail bound above eps", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _cmd_ruin(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    res = ruin_descriptor(
        model,
        args.u,
        args.n_stages,
        args.theta1,
        args.theta2,
        i0=args.i0,
        extrapolate=not args.no_extrapolate,
    )
    aug = res.erlangized.model
    rows = []
    for b, j in enumerate(aug.s_minus):
        rows.append([str(int(j) - args.n_stages), _fmt(res.by_state[b])])
    _write_csv(os.path.join(out, "ruin.csv"), ["j", "value"], rows)
    summary = {
        "value": res.value,
        "u": args.u,
        "n_stages": args.n_stages,
        "theta1": args.theta1,
        "theta2": args.theta2,
        "converged": res.converged,
        "extrapolated": bool(res.info.get("extrapolated")),
    }
    with open(os.path.join(out, "ruin.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args, out, started, extra={"converged": res.converged})
    print(f"ruin descriptor from u={args.u:g} with {args.n_stages} stages: {res.value:.6f}")
    if not res.converged:
        print("non-convergence: fixed point did not reach tolerance", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _mc_estimate_rows(est) -> tuple[list[str], list[list[str]]]:
    header = ["value", "std_error", "n_paths", "censored_fraction", "seed"]
    row = [
        _fmt(est.value),
        _fmt(est.std_error),
        str(est.n_paths),
        _fmt(est.censored_fraction),
        str(est.seed),
    ]
    return header, [row]


def _cmd_mc(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    threads = _resolve_threads(args)
    if args.mode == "first-return":
        est = mc_first_return(
            model,
            args.z,
            args.theta1,
            args.theta2,
            n_paths=args.n_paths,
            max_epochs=args.max_epochs,
            seed=args.seed,
            start_state=args.start_state,
            n_threads=threads,
        )
        header, rows = _mc_estimate_rows(est)
        name = "mc_first_return.csv"
        censored = est.censored_fraction
        summary = f"mc first-return: {est.value:.6f} ± {est.std_error:.2e}"
    elif args.mode == "ruin":
        if args.u is None:
            raise FluidModelError("mc ruin requires --u")
        est = mc_ruin(
            model,
            args.u,
            args.z,
            n_paths=args.n_paths,
            max_epochs=args.max_epochs,
            seed=args.seed,
            start_state=args.start_state,
            theta1=args.theta1,
            theta2=args.theta2,
            horizon=args.horizon,
            n_threads=threads,
        )
        header, rows = _mc_estimate_rows(est)
        name = "mc_ruin.csv"
        censored = est.censored_fraction
        summary = f"mc ruin: {est.value:.6f} ± {est.std_error:.2e}"
    else:  # bridge
        grid = LevelDurationGrid.for_model(model)
        hist = mc_bridge_histogram(
            model,
            args.z,
            args.n,
            grid.durations,
            grid.levels,
            n_paths=args.n_paths,
            seed=args.seed,
            start_state=args.start_state,
            n_threads=threads,
        )
        header = ["j", "value", "std_error", "n_paths", "seed"]
        rows = []
        for j in model.s_minus:
            freq = hist.n_hits[int(j)] / hist.n_paths
            se = float(np.sqrt(max(freq * (1.0 - freq), 0.0) / hist.n_paths))
            rows.append([str(int(j)), _fmt(freq), _fmt(se), str(hist.n_paths), str(hist.seed)])
        name = "mc_bridge.csv"
        censored = 0.0
        summary = f"mc bridge order {args.n}: {int(hist.n_hits.sum())} qualifying paths"
    _write_csv(os.path.join(out, name), header, rows)
    _write_manifest(args, out, started)
    print(summary)
    if censored > 0.01:
        print(
            f"warning: {censored:.1%} of paths censored at max_epochs={args.max_epochs}; "
            "the estimate is biased low",
            file=sys.stderr,
        )
    return EXIT_OK


def _cmd_convergence_study(args) -> int:
    started = time.perf_counter()
    model = _load(args)
    out = _out_dir(args)
    threads = _resolve_threads(args)

    if args.quantity == "first-return":
        base = psi(model, args.theta1, args.theta2, z=args.z)
        g = base.info["grid"]
        if model.kernel.is_constant:
            fine_grid = LevelGrid(l_max=g.l_max, dl=g.dl / 2.0)
        else:
            fine_grid = LevelDurationGrid(
                u_max=g.u_max, du=g.du / 2.0, l_max=g.l_max, dl=g.dl / 2.0
            )
        fine = psi(model, args.theta1, args.theta2, z=args.z, grid=fine_grid)
        alpha_plus = model.alpha[model.s_plus]
        if alpha_plus.sum() <= 0.0:
            raise FluidModelError(
                "convergence-study needs initial mass on ascending states"
            )
        alpha_plus = alpha_plus / alpha_plus.sum()
        raw = float(alpha_plus @ base.matrix.sum(axis=1))
        refined = float(alpha_plus @ fine.matrix.sum(axis=1))
        # The level quadrature converges at second order, so the halved grid
        # supports Richardson extrapolation; the generic duration-level
        # engine is only first-order at its support edges, where the refined
        # value itself is the best available.
        analytic = (4.0 * refined - raw) / 3.0 if model.kernel.is_constant else refined
        est = mc_first_return(
            model,
            args.z,
            args.theta1,
            args.theta2,
            n_paths=args.n_paths,
            max_epochs=args.max_epochs,
            seed=args.seed,
            n_threads=threads,
        )
    else:  # ruin
        res = ruin_descriptor(
            model, args.u, args.n_stages, args.theta1, args.theta2, i0=args.i0
        )
        analytic = res.value
        raws = res.info.get("raw_values", [analytic, analytic])
        raw, refined = float(raws[0]), float(raws[-1])
        est = mc_ruin(
            model,
            args.u,
            args.z,
            n_paths=args.n_paths,
            max_epochs=args.max_epochs,
            seed=args.seed,
            theta1=args.theta1,
            theta2=args.theta2,
            n_threads=threads,
        )

    gap = abs(analytic - est.value)
    # The analytic side carries numerical error of its own; the shift between
    # the extrapolated value and the finest computed grid value is the usual
    # conservative proxy for what remains.  Without it, a zero-variance Monte
    # Carlo sample (e.g. certain return at theta = 0) would demand exactness.
    numeric_est = abs(analytic - refined)
    band = 3.0 * est.std_error + numeric_est
    inside = gap <= band
    _write_csv(
        os.path.join(out, "convergence_study.csv"),
        [
            "quantity",
            "analytic_raw",
            "analytic_refined",
            "refinement_shift",
            "analytic",
            "numeric_error_estimate",
            "mc_value",
            "mc_std_error",
            "gap",
            "band",
            "inside",
        ],
        [
            [
                args.quantity,
                _fmt(raw),
                _fmt(refined),
                _fmt(abs(refined - raw)),
                _fmt(analytic),
                _fmt(numeric_est),
                _fmt(est.value),
                _fmt(est.std_error),
                _fmt(gap),
                _fmt(band),
                str(inside),
            ]
        ],
    )
    _write_manifest(args, out, started, extra={"inside_band": inside})
    print(
        f"{args.quantity}: analytic {analytic:.6f} vs MC {est.value:.6f} ± "
        f"{est.std_error:.2e} → gap {gap:.2e} {'inside' if inside else 'OUTSIDE'} "
        f"band {band:.2e} (3 SE + numeric estimate {numeric_est:.2e})"
    )
    if est.censored_fraction > 0.01:
        print(
            f"warning: {est.censored_fraction:.1%} of paths censored; "
            "widen --max-epochs before trusting the band",
            file=sys.stderr,
        )
    return EXIT_OK if inside else EXIT_NO_CONVERGENCE


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sub, theta: bool = True, seed: bool = False):
    sub.add_argument("config", help="path to a JSON model configuration")
    sub.add_argument("--out", default=".", help="artifact directory (default: .)")
    sub.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker cap for parallel sections (fallback: FLUIDRISK_THREADS, then 1)",
    )
    if theta:
        sub.add_argument("--theta1", type=float, default=0.0, help="dividend transform argument")
        sub.add_argument("--theta2", type=float, default=0.0, help="cost transform argument")
    if seed:
        sub.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluidrisk",
        description=(
            "Duration-modulated arrival processes driving fluid risk dynamics: "
            "validation, simulation, survival operators, bridge densities, "
            "first-return/finite-time/ruin descriptors, and Monte Carlo "
            "cross-checks."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("validate", help="load and validate a model config")
    _add_common(s, theta=False)
    s.set_defaults(func=_cmd_validate)

    s = subs.add_parser("simulate", help="sample uniformized paths to CSV")
    _add_common(s, theta=False, seed=True)
    s.add_argument("--horizon", type=float, required=True, help="calendar-time horizon")
    s.add_argument("--z", type=float, default=0.0, help="initial duration (default 0)")
    s.add_argument("--n-paths", type=int, default=1, help="number of paths (default 1)")
    s.set_defaults(func=_cmd_simulate)

    s = subs.add_parser("gmatrix", help="survival matrices G(s, t)")
    _add_common(s, theta=False)
    s.add_argument("--s", type=float, default=0.0, help="left endpoint (default 0)")
    s.add_argument(
        "--t", type=float, action="append", required=True, help="right endpoint (repeatable)"
    )
    s.add_argument("--step", type=float, default=None, help="integrator step override")
    s.set_defaults(func=_cmd_gmatrix)

    s = subs.add_parser("density", help="inter-arrival marginal density values")
    _add_common(s, theta=False)
    s.add_argument("--n", type=int, default=1, help="arrival index (default 1)")
    s.add_argument(
        "--y", type=float, action="append", required=True, help="evaluation point (repeatable)"
    )
    s.add_argument("--u-max", type=float, default=None, help="duration-window override")
    s.add_argument("--step", type=float, default=None, help="integrator step override")
    s.set_defaults(func=_cmd_density)

    s = subs.add_parser("bridge", help="integrated bridge masses per order")
    _add_common(s)
    s.add_argument("--n-max", type=int, default=8, help="deepest bridge order (default 8)")
    s.add_argument("--z", type=float, default=0.0, help="initial duration (default 0)")
    s.add_argument("--u-max", type=float, default=None, help="duration window override")
    s.add_argument("--du", type=float, default=None, help="duration spacing override")
    s.add_argument("--l-max", type=float, default=None, help="level window override")
    s.add_argument("--dl", type=float, default=None, help="level spacing override")
    s.add_argument(
        "--binary",
        default=None,
        metavar="NAME",
        help="also dump the full density tensor to this file in --out",
    )
    s.set_defaults(func=_cmd_bridge)

    s = subs.add_parser("first-return", help="first-return descriptor matrix")
    _add_common(s)
    s.add_argument("--z", type=float, default=0.0, help="initial duration (default 0)")
    s.add_argument("--eps", type=float, default=1e-5, help="truncation tail tolerance")
    s.add_argument("--n-max", type=int, default=64, help="bridge-order cap (duration kernels)")
    s.set_defaults(func=_cmd_first_return)

    s = subs.add_parser("finite-time", help="return descriptor within a horizon")
    _add_common(s)
    s.add_argument("--horizon", type=float, required=True, help="calendar-time horizon")
    s.add_argument("--z", type=float, default=0.0, help="initial duration (default 0)")
    s.add_argument("--eps", type=float, default=1e-8, help="epoch-count tail tolerance")
    s.add_argument("--m-max", type=int, default=None, help="hard cap on epoch orders")
    s.set_defaults(func=_cmd_finite_time)

    s = subs.add_parser("ruin", help="ruin descriptor via an Erlang ramp")
    _add_common(s)
    s.add_argument("--u", type=float, required=True, help="initial capital")
    s.add_argument("--n-stages", type=int, required=True, help="Erlang ramp stages")
    s.add_argument("--i0", type=int, default=None, help="entry state (default: from alpha)")
    s.add_argument(
        "--no-extrapolate",
        action="store_true",
        help="skip Richardson extrapolation over the level grid",
    )
    s.set_defaults(func=_cmd_ruin)

    s = subs.add_parser("mc", help="Monte Carlo estimates with standard errors")
    s.add_argument(
        "mode", choices=["first-return", "ruin", "bridge"], help="quantity to estimate"
    )
    _add_common(s, seed=True)
    s.add_argument("--n-paths", type=int, default=100_000, help="sample size (default 1e5)")
    s.add_argument("--max-epochs", type=int, default=10_000, help="per-path epoch cap")
    s.add_argument("--z", type=float, default=0.0, help="initial duration (default 0)")
    s.add_argument("--u", type=float, default=None, help="initial capital (ruin mode)")
    s.add_argument("--horizon", type=float, default=None, help="time horizon (ruin mode)")
    s.add_argument("--n", type=int, default=2, help="bridge order (bridge mode)")
    s.add_argument("--start-state", type=int, default=None, help="pin the starting state")
    s.set_defaults(func=_cmd_mc)

    s = subs.add_parser(
        "convergence-study", help="analytic vs Monte Carlo 3-SE cross-check"
    )
    _add_common(s, seed=True)
    s.add_argument(
        "--quantity",
        choices=["first-return", "ruin"],
        default="first-return",
        help="quantity to cross-check (default first-return)",
    )
    s.add_argument("--z", type=float, default=0.0, help="initial duration (default 0)")
    s.add_argument("--u", type=float, default=1.0, help="initial capital (ruin)")
    s.add_argument("--n-stages", type=int, default=16, help="Erlang stages (ruin)")
    s.add_argument("--i0", type=int, default=None, help="entry state (ruin)")
    s.add_argument("--n-paths", type=int, default=100_000, help="sample size (default 1e5)")
    s.add_argument("--max-epochs", type=int, default=10_000, help="per-path epoch cap")
    s.set_defaults(func=_cmd_convergence_study)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FluidModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
