"""Fixed-epoch bridge densities on duration-level grids.

The n-bridge density ``Lambda^(n,z)[i,j](s, l)`` is the joint density, over
paths started in ``i`` (positive rate) with initial duration ``z``, of the
event that at the n-th Poisson epoch the pre-epoch state is ``j`` (negative
rate), the pre-epoch duration is ``s``, the net fluid displacement is ``l``,
and every intermediate epoch level stays at or above ``max(0, l)`` (the path
is a bridge over both endpoints).  Paths are weighted by
``exp(-theta1 * dividends - theta2 * arrival costs)`` accumulated before the
final epoch.

``n = 2`` has a closed form (one middle jump, either branch of the kernel
pair).  Larger ``n`` decompose by the location ``w`` of the minimal
intermediate level into three contribution classes:

* ``w = 1`` — the first epoch is the argmin; the remaining path is an
  ``(n-1)``-bridge above it,
* ``1 < w < n-1`` — two bridges glued at a negative-to-positive switch,
* ``w = n-1`` — an ``(n-1)``-bridge followed by one descending segment.

The recursion is evaluated on uniform grids; this module holds the grid and
tensor containers, the closed-form base case, the generic (duration-kernel)
contribution operators with an explicit initial-duration axis, and the
dispatcher that selects a fast path (see :mod:`.homogeneous`) when the model
allows one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    FluidModel,
    FluidModelError,
    cost_weights,
    eval_kernel_batch,
    uniformized_kernel,
)

__all__ = [
    "LevelDurationGrid",
    "BridgeTensor",
    "BridgeMemoryError",
    "bridge2",
    "bridge2_slice",
    "gamma_first",
    "gamma_middle",
    "gamma_last",
    "bridge_recursion",
    "integrate_bridge",
]

#: Entries more negative than this trigger the contamination flag.
NEGATIVE_FLAG_TOL = -1e-10

#: Default memory budget for tensor builds (bytes).
DEFAULT_MEMORY_BUDGET = 2 << 30


class BridgeMemoryError(FluidModelError):
    """A requested tensor build would exceed the memory budget."""


@dataclass(frozen=True)
class LevelDurationGrid:
    """Uniform duration and level grids carrying the bridge discretization.

    Durations run over ``0, du, ..., u_max``; levels over
    ``-l_max, ..., -dl, 0, dl, ..., +l_max`` (zero always on-grid).  Initial
    durations ``z`` are restricted to duration-grid points so that shifted
    arguments stay on-grid.
    """

    u_max: float
    du: float
    l_max: float
    dl: float
    durations: np.ndarray = field(init=False)
    levels: np.ndarray = field(init=False)
    zero_index: int = field(init=False)

    def __post_init__(self):
        if self.du <= 0 or self.dl <= 0 or self.u_max <= 0 or self.l_max <= 0:
            raise ValueError("grid spacings and extents must be positive")
        n_u = int(round(self.u_max / self.du))
        n_l = int(round(self.l_max / self.dl))
        if n_u < 2 or n_l < 1:
            raise ValueError("grid must contain at least a few cells per axis")
        if abs(n_u * self.du - self.u_max) > 1e-9 * self.u_max:
            raise ValueError("u_max must be an integer multiple of du")
        if abs(n_l * self.dl - self.l_max) > 1e-9 * self.l_max:
            raise ValueError("l_max must be an integer multiple of dl")
        durations = self.du * np.arange(n_u + 1)
        levels = self.dl * np.arange(-n_l, n_l + 1)
        durations.setflags(write=False)
        levels.setflags(write=False)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "zero_index", n_l)

    @classmethod
    def for_model(
        cls,
        model: FluidModel,
        u_max: float | None = None,
        du: float | None = None,
        l_max: float | None = None,
        dl: float | None = None,
    ) -> "LevelDurationGrid":
        """Default grid: ``u_max = 8/gamma`` split into 64 duration cells and
        a level window of twice the fastest rate times ``u_max``, with the
        level spacing matched to ``du`` times the largest |rate| so that
        per-epoch level shifts land on-grid."""
        r_max = float(np.max(np.abs(model.rates)))
        if u_max is None:
            u_max = 8.0 / model.gamma
        if du is None:
            du = u_max / 64.0
        if l_max is None:
            l_max = 2.0 * r_max * u_max
        if dl is None:
            dl = du * r_max
            l_max = dl * round(l_max / dl)
        return cls(u_max=float(u_max), du=float(du), l_max=float(l_max), dl=float(dl))

    @property
    def n_durations(self) -> int:
        return self.durations.size

    @property
    def n_levels(self) -> int:
        return self.levels.size

    def z_index(self, z: float) -> int:
        q = int(round(z / self.du))
        if q < 0 or q >= self.n_durations or abs(q * self.du - z) > 1e-9 * max(1.0, abs(z)):
            raise ValueError(
                f"initial duration {z!r} must be a duration-grid point in [0, {self.u_max!r}]"
            )
        return q

    def level_cells(self, rate: float) -> float:
        """Level cells swept per duration cell at a given fluid rate."""
        return rate * self.du / self.dl


def _shift_level(field_arr: np.ndarray, cells: float) -> np.ndarray:
    """Sample ``field`` at level argument shifted by ``cells`` grid cells.

    Returns ``out[..., m] = field[..., m - cells]`` with linear interpolation
    between neighbors and zero fill outside the window.
    """
    out = np.zeros_like(field_arr)
    base = math.floor(cells)
    frac = cells - base
    L = field_arr.shape[-1]

    for shift, weight in ((base, 1.0 - frac), (base + 1, frac)):
        if weight == 0.0:
            continue
        if shift >= L or shift <= -L:
            continue
        if shift >= 0:
            out[..., shift:] += weight * field_arr[..., : L - shift]
        else:
            out[..., :shift] += weight * field_arr[..., -shift:]
    return out


def _mask_level_nonneg(field_arr: np.ndarray, zero_index: int, halve_edge: bool = True) -> np.ndarray:
    """Restrict to levels >= 0 (trapezoid half-weight at the closed edge)."""
    out = field_arr.copy()
    out[..., :zero_index] = 0.0
    if halve_edge:
        out[..., zero_index] *= 0.5
    return out


def _mask_level_nonpos(field_arr: np.ndarray, zero_index: int, halve_edge: bool = True) -> np.ndarray:
    """Restrict to levels <= 0 (trapezoid half-weight at the closed edge)."""
    out = field_arr.copy()
    out[..., zero_index + 1 :] = 0.0
    if halve_edge:
        out[..., zero_index] *= 0.5
    return out


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    if n > 1:
        w[0] = 0.5
        w[-1] = 0.5
    return w


# ---------------------------------------------------------------------------
# Closed-form base case (n = 2)
# ---------------------------------------------------------------------------


def bridge2_slice(
    model: FluidModel,
    grid: LevelDurationGrid,
    z: float,
    theta1: float = 0.0,
    theta2: float = 0.0,
    edge_weights: bool = False,
) -> np.ndarray:
    """Closed-form 2-bridge density at one initial duration.

    Returns an array of shape ``(|S+|, |S-|, n_durations, n_levels)``.  The
    no-arrival branch pins the middle jump by the final duration
    ``s = z + h1 + h2``; the arrival branch resets the duration, so the final
    segment length equals ``s`` outright and values for ``s < z`` can be
    nonzero.

    With ``edge_weights`` the nodes lying exactly on a support boundary carry
    half the one-sided limit (the recursion engines use this internally: it
    keeps quadrature and convolution against the jump second-order accurate).
    Without it boundary nodes carry the full closed-region limit.
    """
    gamma = model.gamma
    ip, im = model.s_plus, model.s_minus
    s = grid.durations[:, None]
    lvl = grid.levels[None, :]
    kappa = np.exp(-theta2 * model.k_cost)
    tol = 1e-9 * grid.du if edge_weights else 0.0
    out = np.zeros((ip.size, im.size, grid.n_durations, grid.n_levels))

    def _edge(h):
        if not edge_weights:
            return 1.0
        return np.where(np.abs(h) <= tol, 0.5, 1.0)

    for a, i in enumerate(ip):
        ri = model.rates[i]
        si = model.sigma[i]
        for b, j in enumerate(im):
            rj = model.rates[j]
            # No-arrival middle jump: time h1 ascending at rate ri, then
            # h2 descending at rate rj, with s - z = h1 + h2.
            span = s - z
            h1 = (lvl - rj * span) / (ri - rj)
            h2 = (ri * span - lvl) / (ri - rj)
            sup_c = (h1 >= -tol) & (h2 >= -tol) & (span >= -tol)
            u_arg_c = np.where(sup_c, z + np.maximum(h1, 0.0), 0.0)
            C_at, _ = eval_kernel_batch(model.kernel, u_arg_c.ravel())
            cbar_ij = (np.eye(model.p) + C_at / gamma)[:, i, j].reshape(u_arg_c.shape)
            val_c = (
                gamma**2
                * np.exp(-gamma * np.maximum(span, 0.0))
                * np.exp(-theta1 * si * np.maximum(h1, 0.0))
                * cbar_ij
                * _edge(h1)
                * _edge(h2)
                / (ri - rj)
            )
            # Arrival middle jump: duration resets, so the final segment
            # length is s and the first segment is t1 = (l - rj s)/ri.
            t1 = (lvl - rj * s) / ri
            sup_d = (t1 >= -tol) & (s >= 0.0)
            u_arg_d = np.where(sup_d, z + np.maximum(t1, 0.0), 0.0)
            _, D_at = eval_kernel_batch(model.kernel, u_arg_d.ravel())
            dbar_ij = (D_at / gamma)[:, i, j].reshape(u_arg_d.shape)
            val_d = (
                gamma**2
                * np.exp(-gamma * (np.maximum(t1, 0.0) + s))
                * np.exp(-theta1 * si * np.maximum(t1, 0.0))
                * kappa[i, j]
                * dbar_ij
                * _edge(t1)
                / ri
            )
            out[a, b] = np.where(sup_c, val_c, 0.0) + np.where(sup_d, val_d, 0.0)
    return out


# ---------------------------------------------------------------------------
# Generic contribution operators (explicit initial-duration axis)
# ---------------------------------------------------------------------------
#
# Generic tensors have shape (nz, |S+|, |S-|, n_durations, n_levels) with the
# initial duration z on the duration grid.  These operators are direct
# quadratures of the decomposition; they are simple but O(nz * nu) per node
# and intended for duration-dependent kernels at moderate n (the dispatcher
# uses the fast split engines whenever the kernel allows).


def _uniformized_stacks(model: FluidModel, grid: LevelDurationGrid):
    """Per-duration-node uniformized matrices ``Cbar(u_k)``, ``Dbar(u_k)``."""
    C, D = eval_kernel_batch(model.kernel, grid.durations)
    gamma = model.gamma
    Cbar = np.eye(model.p)[None, :, :] + C / gamma
    Dbar = D / gamma
    diag = np.einsum("kii->ki", Cbar)
    if diag.min() < -1e-12:
        k, i = np.unravel_index(np.argmin(diag), diag.shape)
        uniformized_kernel(model.kernel, float(grid.durations[k]))  # raises with detail
        raise FluidModelError(f"uniformization rate exceeded in state {i}")
    return Cbar, Dbar


def gamma_first(
    model: FluidModel,
    grid: LevelDurationGrid,
    bridge_prev: np.ndarray,
    theta1: float = 0.0,
    theta2: float = 0.0,
) -> np.ndarray:
    """Contribution of paths whose first epoch is the minimal intermediate.

    Quadrature over the first holding time ``u`` of
    ``gamma e^{-(gamma + theta1 sigma_i) u}`` times a same-class kernel factor
    evaluated at duration ``z+u`` times the ``(n-1)``-bridge from the new
    state, displaced by ``r_i u`` and restricted to sub-bridge displacements
    ``<= 0`` (the argmin condition).  No-arrival factors continue at initial
    duration ``z+u``; arrival factors restart at ``0``.
    """
    gamma = model.gamma
    ip = model.s_plus
    nz, n_p, n_m, ns, L = bridge_prev.shape
    m0 = grid.zero_index
    du = grid.du
    kappa = cost_weights(model, theta2).pp
    Cbar, Dbar = _uniformized_stacks(model, grid)
    Cpp = Cbar[:, ip][:, :, ip]
    Dpp = Dbar[:, ip][:, :, ip]

    masked = _mask_level_nonpos(bridge_prev, m0)
    out = np.zeros_like(bridge_prev)
    w = _trapezoid_weights(ns)
    for q in range(nz):
        a_cap = ns - 1 - q  # z + u stays on the duration grid
        for a_idx in range(a_cap + 1):
            weights = w[a_idx] if a_idx < a_cap else 0.5  # trapezoid both ends
            u_val = a_idx * du
            decay = gamma * np.exp(-(gamma + theta1 * model.sigma[ip]) * u_val) * du * weights
            cont = masked[q + a_idx]
            reset = masked[0]
            for ai in range(n_p):
                shift = a_idx * grid.level_cells(model.rates[ip[ai]])
                for ak in range(n_p):
                    c_w = Cpp[q + a_idx, ai, ak]
                    d_w = kappa[ai, ak] * Dpp[q + a_idx, ai, ak]
                    if c_w != 0.0:
                        out[q, ai] += decay[ai] * c_w * _shift_level(cont[ak], shift)
                    if d_w != 0.0:
                        out[q, ai] += decay[ai] * d_w * _shift_level(reset[ak], shift)
    return out


def gamma_middle(
    model: FluidModel,
    grid: LevelDurationGrid,
    bridge_w: np.ndarray,
    bridge_rest: np.ndarray,
    theta2: float = 0.0,
) -> np.ndarray:
    """Contribution of bridges glued at an interior minimal epoch.

    Double quadrature over the switch duration ``u`` and switch level ``v``
    (from ``max(0, l)`` upward) of the ``w``-bridge ending at ``(u, v)``, a
    negative-to-positive kernel factor at duration ``u``, and the remaining
    bridge from the switch, displaced by ``v``.  No-arrival switches continue
    at initial duration ``u``; arrival switches restart at ``0``.
    """
    ip, im = model.s_plus, model.s_minus
    nz, n_p, n_m, ns, L = bridge_w.shape
    m0 = grid.zero_index
    kappa = cost_weights(model, theta2).mp
    Cbar, Dbar = _uniformized_stacks(model, grid)
    Cmp = Cbar[:, im][:, :, ip]
    Dmp = Dbar[:, im][:, :, ip]

    left = _mask_level_nonneg(bridge_w, m0)
    right = _mask_level_nonpos(bridge_rest, m0)
    w_u = _trapezoid_weights(ns) * grid.du

    # Right factors are combined per switch duration u (continue) or at the
    # reset slice (arrival); the v-integral is a level correlation done here
    # via FFT along the level axis.
    from scipy.fft import irfft, rfft

    pad = 2 * L - 1
    f_left = rfft(left, n=pad, axis=-1)
    f_right_cont = rfft(right, n=pad, axis=-1)
    f_right_reset = f_right_cont[0]

    out_f = np.zeros((nz, n_p, n_m, ns, f_left.shape[-1]), dtype=complex)
    for a_idx in range(ns):
        # weight per (j', i') at this duration node
        cw = Cmp[a_idx] * w_u[a_idx]
        dw = kappa * Dmp[a_idx] * w_u[a_idx]
        lf = f_left[:, :, :, a_idx, :]  # (nz, p+, p-, F)
        rc = f_right_cont[a_idx]  # (p+, p-, s, F)
        rz = f_right_reset
        # continue branch: sum_{j', i'} left[:, i, j', u] cw[j', i'] right[u][i', j]
        cont = np.einsum("zixf,xk,kjsf->zijsf", lf, cw, rc)
        reset = np.einsum("zixf,xk,kjsf->zijsf", lf, dw, rz)
        out_f += cont + reset
    # The correlation out(l) = sum_v left(v) right(l - v) maps in index space
    # to a convolution whose zero-level sits at index 2*m0; slice accordingly.
    full = irfft(out_f, n=pad, axis=-1)
    out = full[..., m0 : m0 + L] * grid.dl
    return np.ascontiguousarray(out)


def gamma_last(
    model: FluidModel,
    grid: LevelDurationGrid,
    bridge_prev: np.ndarray,
    theta2: float = 0.0,
) -> np.ndarray:
    """Contribution of paths whose last intermediate epoch is the minimum.

    One descending segment of length ``u`` closes the bridge.  The no-arrival
    branch evaluates the kernel at the pre-switch duration ``s - u`` and
    shifts the ``(n-1)``-bridge by ``r_j u``; the arrival branch pins the
    final segment length to ``s``, integrating the ``(n-1)``-bridge over its
    final duration.  Sub-bridge displacements are restricted to ``>= 0``.
    """
    gamma = model.gamma
    im = model.s_minus
    nz, n_p, n_m, ns, L = bridge_prev.shape
    m0 = grid.zero_index
    du = grid.du
    kappa = cost_weights(model, theta2).mm
    Cbar, Dbar = _uniformized_stacks(model, grid)
    Cmm = Cbar[:, im][:, :, im]
    Dmm = Dbar[:, im][:, :, im]

    masked = _mask_level_nonneg(bridge_prev, m0)
    out = np.zeros_like(bridge_prev)

    # No-arrival closing segment: for each segment length a*du, add the
    # level-shifted sub-bridge (final duration s - u) weighted by the kernel
    # at the pre-switch duration.  Trapezoid in u: half weight at u = 0 via
    # the loop weight and at u = s via pre-halving the sub-bridge row s = 0.
    masked_c = masked.copy()
    masked_c[..., 0, :] *= 0.5
    for a_idx in range(ns):
        u_val = a_idx * du
        decay = gamma * np.exp(-gamma * u_val) * du * (0.5 if a_idx == 0 else 1.0)
        sub = masked_c[:, :, :, : ns - a_idx, :]
        for bj in range(n_m):
            shift = a_idx * grid.level_cells(model.rates[im[bj]])
            shifted = _shift_level(sub, shift)
            kern = Cmm[: ns - a_idx, :, bj]  # (s - u) kernel argument
            contrib = np.einsum("zixsl,sx->zisl", shifted, kern)
            if a_idx == 0:
                out[:, :, bj, 1:, :] += decay * contrib[:, :, 1:, :]
            else:
                out[:, :, bj, a_idx:, :] += decay * contrib

    # Arrival closing segment: final duration = s exactly; integrate the
    # sub-bridge over its own final duration with the arrival kernel.  The
    # switch-level restriction is applied before the level shift, with the
    # midpoint value at the boundary node.
    masked_d = _mask_level_nonneg(bridge_prev, m0)
    w_u = _trapezoid_weights(ns) * du
    for bj in range(n_m):
        kern = kappa[:, bj][None, :] * Dmm[:, :, bj]  # (s_idx, j')
        reduced = np.einsum("zixsl,sx,s->zil", masked_d, kern, w_u)
        shift_cells = grid.level_cells(model.rates[im[bj]])
        for k_s in range(ns):
            lam = _shift_level(reduced, k_s * shift_cells)
            out[:, :, bj, k_s, :] += gamma * np.exp(-gamma * k_s * du) * lam
    return out


def bridge2(
    model: FluidModel,
    grid: LevelDurationGrid,
    theta1: float = 0.0,
    theta2: float = 0.0,
) -> "BridgeTensor":
    """Closed-form 2-bridge tensor over every on-grid initial duration."""
    return bridge_recursion(model, grid, theta1=theta1, theta2=theta2, n_max=2)


# ---------------------------------------------------------------------------
# Tensor container and dispatch
# ---------------------------------------------------------------------------


@dataclass
class BridgeTensor:
    """Bridge densities for ``n = 2..n_max`` with assembly metadata.

    Storage modes:

    * ``"z"`` — full tensors ``(nz, |S+|, |S-|, ns, L)`` per ``n`` (generic
      duration-dependent kernels),
    * ``"split"`` — arrival-free part ``A`` (a function of ``s - z``) and
      arrival part ``B`` (independent of ``z``), each ``(|S+|, |S-|, ns, L)``
      per ``n`` (duration-free kernels).

    ``masses[n]`` holds the grid integral over ``s`` and ``l <= 0`` at
    ``z = 0`` (the first-return contribution of the n-th epoch).
    """

    model: FluidModel
    grid: LevelDurationGrid
    theta1: float
    theta2: float
    n_max: int
    mode: str
    slices: dict
    masses: dict
    diagnostics: dict

    def value(self, n: int, z: float) -> np.ndarray:
        """Density array ``(|S+|, |S-|, ns, L)`` for order ``n`` at duration ``z``."""
        if n not in self.slices:
            raise KeyError(f"bridge order {n} not computed (have 2..{self.n_max})")
        q = self.grid.z_index(z)
        entry = self.slices[n]
        if self.mode == "z":
            return entry[q]
        A, B = entry
        return _shift_duration(A, q) + B

    def mass(self, n: int, z: float | None = None) -> np.ndarray:
        """Integrated first-return mass of order ``n``.

        With ``z`` omitted, returns the mass at initial duration zero
        integrated over the full window; for other on-grid ``z`` it
        integrates the assembled density view.
        """
        if z is None or (z == 0.0 and n in self.masses):
            return self.masses[n]
        return integrate_bridge(self, n, z)

    @property
    def orders(self) -> list[int]:
        return sorted(self.slices)


def _shift_duration(field_arr: np.ndarray, q: int) -> np.ndarray:
    """Evaluate a ``s - z`` field at ``z = q`` duration cells (zero fill)."""
    if q == 0:
        return field_arr
    out = np.zeros_like(field_arr)
    out[..., q:, :] = field_arr[..., : field_arr.shape[-2] - q, :]
    return out


def integrate_bridge(tensor: BridgeTensor, n: int, z: float = 0.0, l_hi: float = 0.0) -> np.ndarray:
    """Trapezoid mass of order ``n`` over durations and levels up to ``l_hi``.

    Returns the ``(|S+|, |S-|)`` matrix of integrals over
    ``s in [0, u_max], l in [-l_max, l_hi]``.
    """
    vals = tensor.value(n, z)
    grid = tensor.grid
    m_hi = grid.zero_index + int(round(l_hi / grid.dl))
    if not 0 <= m_hi < grid.n_levels:
        raise ValueError(f"level bound {l_hi!r} outside the grid window")
    w_s = _trapezoid_weights(grid.n_durations) * grid.du
    w_l = _trapezoid_weights(m_hi + 1) * grid.dl
    return np.einsum("ijsl,s,l->ij", vals[..., : m_hi + 1], w_s, w_l)


def _integrate_field(field_arr: np.ndarray, grid: LevelDurationGrid, m_hi: int) -> np.ndarray:
    w_s = _trapezoid_weights(grid.n_durations) * grid.du
    w_l = _trapezoid_weights(m_hi + 1) * grid.dl
    return np.einsum("...sl,s,l->...", field_arr[..., : m_hi + 1], w_s, w_l)


def _estimate_bytes(grid: LevelDurationGrid, model: FluidModel, n_max: int, mode: str) -> int:
    ns, L = grid.n_durations, grid.n_levels
    pairs = model.s_plus.size * model.s_minus.size
    per_field = pairs * ns * L * 8
    n_slots = max(n_max - 1, 1)
    if mode == "z":
        return n_slots * grid.n_durations * per_field
    # A and B fields plus cached spectra of comparable footprint.
    return n_slots * per_field * 5


def _clamp_and_flag(arr: np.ndarray, diagnostics: dict) -> np.ndarray:
    min_val = float(arr.min()) if arr.size else 0.0
    if min_val < diagnostics.get("negative_min", 0.0):
        diagnostics["negative_min"] = min_val
    if min_val < NEGATIVE_FLAG_TOL:
        diagnostics["negative_flagged"] = True
    np.maximum(arr, 0.0, out=arr)
    return arr


def bridge_recursion(
    model: FluidModel,
    grid: LevelDurationGrid,
    theta1: float = 0.0,
    theta2: float = 0.0,
    n_max: int = 8,
    method: str = "auto",
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> BridgeTensor:
    """Build bridge densities for all orders ``2..n_max``.

    ``method`` selects the engine: ``"split"`` (duration-free kernels,
    arrival-free/arrival decomposition — valid at every initial duration),
    ``"z"`` (generic, explicit initial-duration axis), or ``"auto"``.  A
    sizing check runs before any allocation.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be at least 2, got {n_max!r}")
    if theta1 < 0 or theta2 < 0:
        raise ValueError("transform arguments must be nonnegative")
    if method == "auto":
        method = "split" if model.kernel.is_constant else "z"
    if method not in ("split", "z"):
        raise ValueError(f"unknown bridge method {method!r}")
    needed = _estimate_bytes(grid, model, n_max, method)
    if needed > memory_budget:
        raise BridgeMemoryError(
            f"bridge build needs ~{needed / 1e9:.2f} GB "
            f"({method} storage, n_max={n_max}, grid {grid.n_durations}x{grid.n_levels}) "
            f"exceeding the budget {memory_budget / 1e9:.2f} GB; shrink the grid, "
            "lower n_max, or raise memory_budget"
        )

    diagnostics = {"engine": method, "negative_min": 0.0, "negative_flagged": False}
    if method == "split":
        from .homogeneous import run_split_recursion

        slices, masses = run_split_recursion(model, grid, theta1, theta2, n_max, diagnostics)
    else:
        slices, masses = _run_z_recursion(model, grid, theta1, theta2, n_max, diagnostics)

    return BridgeTensor(
        model=model,
        grid=grid,
        theta1=theta1,
        theta2=theta2,
        n_max=n_max,
        mode=method,
        slices=slices,
        masses=masses,
        diagnostics=diagnostics,
    )


def _run_z_recursion(model, grid, theta1, theta2, n_max, diagnostics):
    nz = grid.n_durations
    base = np.stack(
        [
            bridge2_slice(model, grid, float(z), theta1, theta2, edge_weights=True)
            for z in grid.durations
        ]
    )
    _clamp_and_flag(base, diagnostics)
    slices = {2: base}
    m_hi = grid.zero_index
    masses = {2: _integrate_field(base[0], grid, m_hi)}
    for n in range(3, n_max + 1):
        total = gamma_first(model, grid, slices[n - 1], theta1, theta2)
        total += gamma_last(model, grid, slices[n - 1], theta2)
        for w in range(2, n - 1):
            total += gamma_middle(model, grid, slices[w], slices[n - w], theta2)
        _clamp_and_flag(total, diagnostics)
        slices[n] = total
        masses[n] = _integrate_field(total[0], grid, m_hi)
    level_edge = max(float(np.abs(s[..., -1]).max()) for s in slices.values())
    duration_edge = max(float(np.abs(s[..., -1, :]).max()) for s in slices.values())
    diagnostics["level_edge_max_density"] = level_edge
    diagnostics["duration_edge_max_density"] = duration_edge
    if level_edge > 1e-6:
        warnings.warn(
            f"bridge density at the level-window edge is {level_edge:.2e}; "
            "the level window may be saturated — consider a larger l_max",
            stacklevel=2,
        )
    return slices, masses
