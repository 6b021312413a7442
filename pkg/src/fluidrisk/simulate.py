"""Exact path simulation on the uniformized Poisson grid.

All jumps of the modulating chain are embedded into the epochs of a Poisson
process with the model's uniformization rate ``gamma``.  At each epoch the
chain moves with the duration-evaluated per-epoch matrices
``Cbar(u) = I + C(u)/gamma`` (no arrival; duration keeps running, possibly a
self-loop) or ``Dbar(u) = D(u)/gamma`` (arrival; duration resets to zero).
The fluid level, dividend integral, and arrival costs are accumulated along
the piecewise-constant state path.

The construction supports an initial duration ``z >= 0`` ("delayed" start):
until the first arrival the kernel argument is ``z`` plus the elapsed time,
afterwards it is the time since the last arrival.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EPOCH_PROB_TOL, FluidModel, FluidModelError, uniformized_kernel

__all__ = [
    "KernelConsistencyError",
    "PathRecord",
    "FirstReturnSample",
    "simulate_path",
    "simulate_until_return",
]


class KernelConsistencyError(FluidModelError):
    """Per-epoch transition probabilities failed to sum to one."""


@dataclass(frozen=True)
class PathRecord:
    """A simulated path observed on its Poisson epochs ``T_0 = 0 < T_1 < ...``.

    Attributes
    ----------
    poisson_epochs : ndarray
        Epoch times, starting at 0, strictly below the horizon.
    states : ndarray
        ``J(T_k)`` — the state entered at epoch ``k`` (constant until the
        next epoch).
    arrival_epochs : ndarray
        The sub-sequence of epochs at which arrivals occurred, starting with
        the conventional ``S_0 = 0``.
    durations : ndarray
        ``U(T_k-)``: kernel argument in force just before epoch ``k`` (the
        initial duration ``z`` at ``k = 0``).
    fluid : ndarray
        Fluid level ``F(T_k)``; piecewise linear with slope ``r(J)``.
    dividend_integral : ndarray
        Cumulative ``int_0^{T_k} sigma(J(s)) ds``.
    jump_costs : ndarray
        Cumulative arrival costs ``sum k(J(S-), J(S))`` up to ``T_k``.
    seed : object
        The RNG seed that reproduces the path.
    """

    poisson_epochs: np.ndarray
    states: np.ndarray
    arrival_epochs: np.ndarray
    durations: np.ndarray
    fluid: np.ndarray
    dividend_integral: np.ndarray
    jump_costs: np.ndarray
    seed: object


@dataclass(frozen=True)
class FirstReturnSample:
    """Outcome of running the grid until the fluid first returns to its start.

    ``weight`` is ``exp(-theta1 * dividends - theta2 * costs)`` on return and
    zero when censored at ``max_epochs`` (a conservative, downward-biased
    contribution).
    """

    returned: bool
    exit_state: int
    weight: float
    n_used: int


def _epoch_step(model: FluidModel, state: int, u_arg: float, unif: float) -> tuple[int, bool]:
    """Resolve one epoch: next state and whether it was an arrival."""
    Cbar, Dbar = uniformized_kernel(model.kernel, u_arg)
    row = np.concatenate([Cbar[state], Dbar[state]])
    total = float(row.sum())
    if abs(total - 1.0) > EPOCH_PROB_TOL:
        raise KernelConsistencyError(
            f"per-epoch transition probabilities sum to {total!r} (state {state}, "
            f"duration {u_arg!r}); kernel is inconsistent"
        )
    cum = np.cumsum(row)
    idx = int(np.searchsorted(cum, unif * total, side="right"))
    idx = min(idx, 2 * model.p - 1)
    return idx % model.p, idx >= model.p


def _draw_start(model: FluidModel, rng: np.random.Generator, start_state: int | None) -> int:
    if start_state is not None:
        return int(start_state)
    return int(rng.choice(model.p, p=model.alpha))


def simulate_path(
    model: FluidModel,
    z: float,
    horizon: float,
    seed,
    start_state: int | None = None,
) -> PathRecord:
    """Simulate ``(J, N, U, F)`` on the Poisson grid up to a time horizon.

    The path is truncated at the last epoch strictly below ``horizon``; no
    partial segment is appended.

    Parameters
    ----------
    model : FluidModel
    z : float
        Initial duration (kernel argument offset before the first arrival).
    horizon : float
        Positive time horizon.
    seed : int or numpy seed-like
        Reproducibility key: identical arguments give bit-identical paths.
    start_state : int, optional
        Fixed initial state; drawn from ``model.alpha`` when omitted.
    """
    if horizon <= 0.0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    if z < 0.0:
        raise ValueError(f"initial duration must be nonnegative, got {z!r}")
    rng = np.random.default_rng(seed)
    state = _draw_start(model, rng, start_state)
    gamma = model.gamma
    rates = model.rates

    times = [0.0]
    states = [state]
    arrivals = [0.0]
    durations = [float(z)]
    fluid = [0.0]
    dividends = [0.0]
    costs = [0.0]

    t = 0.0
    cur_dur = float(z)
    while True:
        dt = rng.exponential(1.0 / gamma)
        t_next = t + dt
        if t_next >= horizon:
            break
        u_arg = cur_dur + dt
        new_state, is_arrival = _epoch_step(model, state, u_arg, rng.random())
        times.append(t_next)
        durations.append(u_arg)
        fluid.append(fluid[-1] + rates[state] * dt)
        dividends.append(dividends[-1] + model.sigma[state] * dt)
        costs.append(costs[-1] + (model.k_cost[state, new_state] if is_arrival else 0.0))
        if is_arrival:
            arrivals.append(t_next)
            cur_dur = 0.0
        else:
            cur_dur = u_arg
        state = new_state
        states.append(state)
        t = t_next

    return PathRecord(
        poisson_epochs=np.asarray(times),
        states=np.asarray(states, dtype=int),
        arrival_epochs=np.asarray(arrivals),
        durations=np.asarray(durations),
        fluid=np.asarray(fluid),
        dividend_integral=np.asarray(dividends),
        jump_costs=np.asarray(costs),
        seed=seed,
    )


def simulate_until_return(
    model: FluidModel,
    z: float,
    theta1: float,
    theta2: float,
    max_epochs: int,
    seed,
    start_state: int | None = None,
) -> FirstReturnSample:
    """Run the grid until the fluid first drops to (or below) its initial level.

    Parameters
    ----------
    model : FluidModel
    z : float
        Initial duration.
    theta1, theta2 : float
        Transform arguments weighting accumulated dividends and arrival
        costs.
    max_epochs : int
        Censoring point; non-returned paths report ``weight = 0``.
    seed : int or numpy seed-like
    start_state : int, optional
        Must lie in the positive-rate class (a negative-rate start would
        return immediately and degenerately); drawn from ``model.alpha``
        restricted to that class when omitted.
    """
    if max_epochs < 2:
        raise ValueError(f"max_epochs must be at least 2, got {max_epochs!r}")
    if z < 0.0:
        raise ValueError(f"initial duration must be nonnegative, got {z!r}")
    rng = np.random.default_rng(seed)
    if start_state is None:
        mass = model.alpha[model.s_plus]
        if mass.sum() <= 0.0:
            raise ValueError("alpha has no mass on positive-rate states; specify start_state")
        state = int(rng.choice(model.s_plus, p=mass / mass.sum()))
    else:
        state = int(start_state)
        if model.rates[state] <= 0.0:
            raise ValueError(
                f"start state {state} has nonpositive fluid rate; first return is degenerate"
            )

    gamma = model.gamma
    rates = model.rates
    level = 0.0
    div_int = 0.0
    cost_sum = 0.0
    cur_dur = float(z)
    for n in range(1, max_epochs + 1):
        dt = rng.exponential(1.0 / gamma)
        u_arg = cur_dur + dt
        level_next = level + rates[state] * dt
        div_int += model.sigma[state] * dt
        if level_next <= 0.0:
            weight = float(np.exp(-theta1 * div_int - theta2 * cost_sum))
            return FirstReturnSample(returned=True, exit_state=state, weight=weight, n_used=n)
        new_state, is_arrival = _epoch_step(model, state, u_arg, rng.random())
        if is_arrival:
            cost_sum += model.k_cost[state, new_state]
            cur_dur = 0.0
        else:
            cur_dur = u_arg
        state = new_state
        level = level_next
    return FirstReturnSample(returned=False, exit_state=-1, weight=0.0, n_used=max_epochs)
