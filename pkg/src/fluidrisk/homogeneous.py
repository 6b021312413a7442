"""Fast bridge recursion for duration-free kernels.

When the kernel pair does not depend on the duration, the bridge splits
exactly into an arrival-free part ``A`` — a function of the elapsed time
``s - z`` because the duration never resets — and an arrival part ``B`` that
is independent of the initial duration ``z`` because the final duration
restarts at the last arrival.  The recursion closes on the pair ``(A, B)``
with no initial-duration axis at all.

Every recursion term is a convolution along the elapsed-time and level axes
with either another field or a line-supported kernel (a holding-time density
swept along its fluid displacement), so the engine runs on FFTs.  It also
exposes a fixed-point mode that sums the whole bridge series at once: the
series is the minimal solution of

``Lambda = Lambda_2 + first(Lambda) + middle(Lambda, Lambda) + last(Lambda)``

and monotone iteration from zero converges to it from below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, irfft2, next_fast_len, rfft, rfft2

from .model import FluidModel, StructureError, cost_weights, eval_kernel_batch
from .bridge import (
    LevelDurationGrid,
    _clamp_and_flag,
    _mask_level_nonneg,
    _mask_level_nonpos,
    _shift_level,
    _trapezoid_weights,
)

__all__ = [
    "LevelGrid",
    "run_split_recursion",
    "split_fixed_point",
    "run_level_recursion",
    "level_fixed_point",
]


# ---------------------------------------------------------------------------
# FFT workspace
# ---------------------------------------------------------------------------


class _Plans:
    """Zero-padded FFT shapes with a common level origin.

    All level data — fields and line kernels alike — live on the centered
    level lattice (index ``m0`` is level zero), so every spectral product is
    sliced at the same window ``[0:ns, m0:m0+L)``.
    """

    def __init__(self, ns: int, L: int, m0: int):
        self.ns, self.L, self.m0 = ns, L, m0
        self.shape2 = (next_fast_len(2 * ns - 1), next_fast_len(2 * L - 1))
        self.pad1 = next_fast_len(2 * L - 1)

    def f2(self, field: np.ndarray) -> np.ndarray:
        return rfft2(field, s=self.shape2)

    def i2(self, spec: np.ndarray) -> np.ndarray:
        full = irfft2(spec, s=self.shape2)
        return full[..., : self.ns, self.m0 : self.m0 + self.L]

    def f1(self, arr: np.ndarray) -> np.ndarray:
        return rfft(arr, n=self.pad1, axis=-1)

    def i1(self, spec: np.ndarray) -> np.ndarray:
        full = irfft(spec, n=self.pad1, axis=-1)
        return full[..., self.m0 : self.m0 + self.L]


def _line_kernel_2d(weights: np.ndarray, cells: float, ns: int, L: int, m0: int):
    """Dense ``(ns, L)`` kernel with weight ``weights[a]`` at ``(a, m0 + a*cells)``.

    Fractional level offsets split linearly between neighbors; offsets that
    leave the level window are dropped and their total weight is returned.
    """
    K = np.zeros((ns, L))
    lost = 0.0
    for a in range(ns):
        w = weights[a]
        if w == 0.0:
            continue
        off = m0 + a * cells
        base = int(np.floor(off))
        frac = off - base
        for idx, part in ((base, (1.0 - frac) * w), (base + 1, frac * w)):
            if part == 0.0:
                continue
            if 0 <= idx < L:
                K[a, idx] += part
            else:
                lost += abs(part)
    return K, lost


def _halve_first_row(field: np.ndarray) -> np.ndarray:
    out = field.copy()
    out[..., 0, :] *= 0.5
    return out


def _mass_weights(grid: LevelDurationGrid):
    w_s = _trapezoid_weights(grid.n_durations) * grid.du
    w_l = _trapezoid_weights(grid.zero_index + 1) * grid.dl
    return w_s, w_l


def _field_mass(field: np.ndarray, w_s, w_l, m_hi):
    return np.einsum("ijsl,s,l->ij", field[..., : m_hi + 1], w_s, w_l)


def _record_edges(fields, diagnostics: dict):
    lvl_edge = dur_edge = 0.0
    for f in fields:
        lvl_edge = max(lvl_edge, float(np.abs(f[..., 0]).max()), float(np.abs(f[..., -1]).max()))
        dur_edge = max(dur_edge, float(np.abs(f[..., -1, :]).max()))
    diagnostics["level_edge_max_density"] = max(diagnostics.get("level_edge_max_density", 0.0), lvl_edge)
    diagnostics["duration_edge_max_density"] = max(
        diagnostics.get("duration_edge_max_density", 0.0), dur_edge
    )


# ---------------------------------------------------------------------------
# Duration-free kernels: arrival-free / arrival split
# ---------------------------------------------------------------------------


class _SplitConstants:
    """Uniformized blocks, transform weights, and kernel spectra (duration-free)."""

    def __init__(self, model: FluidModel, grid: LevelDurationGrid, theta1: float, theta2: float):
        if not model.kernel.is_constant:
            raise StructureError(
                "the split recursion requires a duration-free kernel; "
                "duration-dependent kernels need the generic duration-level recursion"
            )
        self.model, self.grid = model, grid
        self.theta1, self.theta2 = theta1, theta2
        ip, im = model.s_plus, model.s_minus
        gamma = model.gamma
        C, D = eval_kernel_batch(model.kernel, np.array([0.0]))
        self.Cbar = np.eye(model.p) + C[0] / gamma
        self.Dbar = D[0] / gamma
        self.kappa = np.exp(-theta2 * model.k_cost)
        self.Cpp = self.Cbar[ip[:, None], ip[None, :]]
        self.Cmp = self.Cbar[im[:, None], ip[None, :]]
        self.Cmm = self.Cbar[im[:, None], im[None, :]]
        kD = self.kappa * self.Dbar
        self.Dpp = kD[ip[:, None], ip[None, :]]
        self.Dmp = kD[im[:, None], ip[None, :]]
        self.Dmm = kD[im[:, None], im[None, :]]

        ns, L, m0 = grid.n_durations, grid.n_levels, grid.zero_index
        self.plans = _Plans(ns, L, m0)
        du = grid.du
        t = grid.durations
        w_tr = _trapezoid_weights(ns)
        self.w_s = w_tr * du
        self.kernel_loss = 0.0

        # First-epoch holding-time lines per ascending state (slope r_i).
        self.K1_hat, self.K1L_hat = [], []
        for i in ip:
            g = gamma * np.exp(-(gamma + theta1 * model.sigma[i]) * t) * du * w_tr
            K, lost = _line_kernel_2d(g, grid.level_cells(model.rates[i]), ns, L, m0)
            self.kernel_loss = max(self.kernel_loss, lost)
            self.K1_hat.append(self.plans.f2(K))
            self.K1L_hat.append(self.plans.f1(K.sum(axis=0)))

        # Closing-segment lines per descending state (slope r_j).
        g3 = gamma * np.exp(-gamma * t) * du * w_tr
        self.K3_hat = []
        for j in im:
            K, lost = _line_kernel_2d(g3, grid.level_cells(model.rates[j]), ns, L, m0)
            self.kernel_loss = max(self.kernel_loss, lost)
            self.K3_hat.append(self.plans.f2(K))

        self.exp_s = gamma * np.exp(-gamma * t)  # closing-arrival prefactor
        self.delta_minus = [grid.level_cells(model.rates[j]) for j in im]

    def base_fields(self):
        """Closed-form two-epoch fields: arrival-free part and arrival part.

        Nodes lying exactly on a support boundary carry half the one-sided
        limit (quarter at corners), which keeps every downstream quadrature
        and convolution second-order accurate despite the density jump.
        """
        model, grid = self.model, self.grid
        ip, im = model.s_plus, model.s_minus
        gamma = model.gamma
        t = grid.durations[:, None]
        lvl = grid.levels[None, :]
        tol = 1e-9 * grid.du
        A = np.zeros((ip.size, im.size, grid.n_durations, grid.n_levels))
        B = np.zeros_like(A)
        for a_i, i in enumerate(ip):
            ri, si = model.rates[i], model.sigma[i]
            for b_j, j in enumerate(im):
                rj = model.rates[j]
                h1 = (lvl - rj * t) / (ri - rj)
                h2 = (ri * t - lvl) / (ri - rj)
                sup = (h1 >= -tol) & (h2 >= -tol)
                w_edge = np.where(np.abs(h1) <= tol, 0.5, 1.0) * np.where(
                    np.abs(h2) <= tol, 0.5, 1.0
                )
                A[a_i, b_j] = np.where(
                    sup,
                    gamma**2
                    * np.exp(-gamma * t)
                    * np.exp(-self.theta1 * si * np.maximum(h1, 0.0))
                    * self.Cbar[i, j]
                    * w_edge
                    / (ri - rj),
                    0.0,
                )
                t1 = (lvl - rj * t) / ri
                B[a_i, b_j] = np.where(
                    t1 >= -tol,
                    gamma**2
                    * np.exp(-gamma * (np.maximum(t1, 0.0) + t))
                    * np.exp(-self.theta1 * si * np.maximum(t1, 0.0))
                    * self.kappa[i, j]
                    * self.Dbar[i, j]
                    * np.where(np.abs(t1) <= tol, 0.5, 1.0)
                    / ri,
                    0.0,
                )
        return A, B


class _SplitLevel:
    """Masked variants, reductions, and spectra of one order's ``(A, B)`` pair."""

    __slots__ = ("SL_A", "SL_B", "SRt_A", "ab_hat", "SR1", "chat")

    def __init__(self, A: np.ndarray, B: np.ndarray, c: _SplitConstants):
        p, m0 = c.plans, c.grid.zero_index
        ML_A = _mask_level_nonneg(A, m0)
        ML_B = _mask_level_nonneg(B, m0)
        MR_A = _mask_level_nonpos(A, m0)
        MR_B = _mask_level_nonpos(B, m0)
        self.SL_A = p.f2(_halve_first_row(ML_A))
        self.SL_B = p.f2(_halve_first_row(ML_B))
        self.SRt_A = p.f2(np.einsum("xk,kjtl->xjtl", c.Cmp, _halve_first_row(MR_A)))
        ahat = np.einsum("ixtl,t->ixl", ML_A, c.w_s)
        bhat = np.einsum("ixtl,t->ixl", ML_B, c.w_s)
        self.ab_hat = p.f1(ahat + bhat)
        self.SR1 = p.f1(
            np.einsum("xk,kjtl->xjtl", c.Cmp, MR_B)
            + np.einsum("xk,kjtl->xjtl", c.Dmp, MR_A + MR_B)
        )
        self.chat = np.einsum("ixtl,t->ixl", _mask_level_nonneg(A + B, m0), c.w_s)


def _split_step(prev_level: _SplitLevel, pair_sums, c: _SplitConstants, prev_fields):
    """Assemble one order's ``(A, B)`` from the previous order's fields and
    the accumulated interior-split spectra ``pair_sums``."""
    p, m0 = c.plans, c.grid.zero_index
    A_prev, B_prev = prev_fields
    MR_A = _mask_level_nonpos(A_prev, m0)
    MR_B = _mask_level_nonpos(B_prev, m0)
    ML_A = _mask_level_nonneg(A_prev, m0)
    ML_B = _mask_level_nonneg(B_prev, m0)

    K1 = np.stack(c.K1_hat)  # (p+, ft, fl)
    K3 = np.stack(c.K3_hat)  # (p-, ft, fl)

    # Arrival-free target: first-epoch line, interior split, closing line.
    freq_A = K1[:, None] * p.f2(np.einsum("ik,kjtl->ijtl", c.Cpp, _halve_first_row(MR_A)))
    freq_A += K3[None, :] * p.f2(np.einsum("ixtl,xj->ijtl", _halve_first_row(ML_A), c.Cmm))
    if pair_sums is not None:
        freq_A += pair_sums[0]
    A_new = p.i2(freq_A)

    # Arrival target, 2-D pieces: interior splits whose right factor is
    # arrival-free, and the no-arrival closing line over the arrival part.
    freq_B2 = K3[None, :] * p.f2(np.einsum("ixtl,xj->ijtl", _halve_first_row(ML_B), c.Cmm))
    if pair_sums is not None:
        freq_B2 += pair_sums[1]
    B_new = p.i2(freq_B2)

    # Arrival target, level-only pieces: first epoch over a later-arrival
    # bridge (no-arrival step continues on B; arrival step restarts on A+B),
    # plus interior splits whose right factor carries the arrival.
    YB = np.einsum("ik,kjtl->ijtl", c.Cpp, MR_B) + np.einsum(
        "ik,kjtl->ijtl", c.Dpp, MR_A + MR_B
    )
    K1L = np.stack(c.K1L_hat)  # (p+, fl)
    freq_B1 = K1L[:, None, None, :] * p.f1(YB)
    if pair_sums is not None:
        freq_B1 += pair_sums[2]
    B_new += p.i1(freq_B1)

    # Closing arrival: pointwise in the final duration, looking up the
    # duration-integrated sub-bridge at the switch level (masked before the
    # shift; the boundary node carries the midpoint value).
    cc = np.einsum("ixl,xj->ijl", prev_level.chat, c.Dmm)
    for b_j, cells in enumerate(c.delta_minus):
        for k_s in range(p.ns):
            lam = _shift_level(cc[:, b_j], k_s * cells)
            B_new[:, b_j, k_s, :] += c.exp_s[k_s] * lam
    return A_new, B_new


def _pair_spectra(levels: dict, n: int, du: float, dl: float):
    """Interior-split spectra summed over split points for order ``n``.

    The 2-D terms integrate over both the switch time and the switch level
    (``du * dl``); the level-only terms already carry the duration weight in
    their reductions (``dl`` only).
    """
    if n < 4:
        return None
    acc = None
    for w in range(2, n - 1):
        lw, rm = levels[w], levels[n - w]
        term = (
            np.einsum("ixab,xjab->ijab", lw.SL_A, rm.SRt_A),
            np.einsum("ixab,xjab->ijab", lw.SL_B, rm.SRt_A),
            np.einsum("ixf,xjsf->ijsf", lw.ab_hat, rm.SR1),
        )
        acc = term if acc is None else tuple(a + t for a, t in zip(acc, term))
    return (acc[0] * du * dl, acc[1] * du * dl, acc[2] * dl)


def run_split_recursion(model, grid, theta1, theta2, n_max, diagnostics):
    """Per-order bridge fields for duration-free kernels."""
    c = _SplitConstants(model, grid, theta1, theta2)
    A, B = c.base_fields()
    _clamp_and_flag(A, diagnostics)
    _clamp_and_flag(B, diagnostics)
    slices = {2: (A, B)}
    levels = {2: _SplitLevel(A, B, c)}
    w_s, w_l = _mass_weights(grid)
    m0 = grid.zero_index
    masses = {2: _field_mass(A + B, w_s, w_l, m0)}
    for n in range(3, n_max + 1):
        pair = _pair_spectra(levels, n, grid.du, grid.dl)
        A_n, B_n = _split_step(levels[n - 1], pair, c, slices[n - 1])
        _clamp_and_flag(A_n, diagnostics)
        _clamp_and_flag(B_n, diagnostics)
        slices[n] = (A_n, B_n)
        levels[n] = _SplitLevel(A_n, B_n, c)
        masses[n] = _field_mass(A_n + B_n, w_s, w_l, m0)
    for entry in slices.values():
        _record_edges(entry, diagnostics)
    diagnostics["holding_tail_bound"] = float(np.exp(-model.gamma * grid.u_max))
    diagnostics["kernel_window_loss"] = c.kernel_loss
    return slices, masses


def split_fixed_point(
    model,
    grid,
    theta1: float = 0.0,
    theta2: float = 0.0,
    eps: float = 1e-7,
    max_iter: int = 400,
    diagnostics: dict | None = None,
):
    """Whole-series bridge sum for duration-free kernels.

    Iterates the series fixed-point equation from the two-epoch fields; each
    sweep applies the three contribution operators to the current aggregate.
    Returns ``(A_total, B_total, info)`` where the fields sum the bridge
    densities of every order.
    """
    diagnostics = {} if diagnostics is None else diagnostics
    c = _SplitConstants(model, grid, theta1, theta2)
    A0, B0 = c.base_fields()
    A, B = A0.copy(), B0.copy()
    w_s, w_l = _mass_weights(grid)
    m0 = grid.zero_index
    mass = _field_mass(A + B, w_s, w_l, m0)
    history = [mass]
    converged = False
    for _ in range(max_iter):
        lvl = _SplitLevel(A, B, c)
        pair = (
            np.einsum("ixab,xjab->ijab", lvl.SL_A, lvl.SRt_A) * grid.du * grid.dl,
            np.einsum("ixab,xjab->ijab", lvl.SL_B, lvl.SRt_A) * grid.du * grid.dl,
            np.einsum("ixf,xjsf->ijsf", lvl.ab_hat, lvl.SR1) * grid.dl,
        )
        A_new, B_new = _split_step(lvl, pair, c, (A, B))
        A_new += A0
        B_new += B0
        _clamp_and_flag(A_new, diagnostics)
        _clamp_and_flag(B_new, diagnostics)
        new_mass = _field_mass(A_new + B_new, w_s, w_l, m0)
        history.append(new_mass)
        delta = float(np.max(np.abs(new_mass - mass)))
        A, B, mass = A_new, B_new, new_mass
        if delta < eps:
            converged = True
            break
    _record_edges((A, B), diagnostics)
    info = {
        "iterations": len(history) - 1,
        "converged": converged,
        "mass": mass,
        "mass_history": np.array(history),
        "holding_tail_bound": float(np.exp(-model.gamma * grid.u_max)),
        "kernel_window_loss": c.kernel_loss,
    }
    info.update(diagnostics)
    return A, B, info


# ---------------------------------------------------------------------------
# Duration-free kernels: level-only (duration-integrated) engine
# ---------------------------------------------------------------------------
#
# First-return descriptors integrate the bridge density over the final
# duration, and for duration-free kernels every recursion operator commutes
# with that integral: holding-time factors turn into closed-form exponential
# kernels along the fluid displacement, and the recursion closes on fields of
# the level alone.  This removes the duration axis — and with it the
# duration-window truncation, which dominates the error near criticality
# where first-return times are heavy-tailed.


@dataclass(frozen=True)
class LevelGrid:
    """Centered uniform level lattice ``[-l_max, l_max]`` with spacing ``dl``."""

    l_max: float
    dl: float

    def __post_init__(self):
        if self.l_max <= 0 or self.dl <= 0:
            raise ValueError("l_max and dl must be positive")
        cells = self.l_max / self.dl
        if abs(cells - round(cells)) > 1e-9:
            raise ValueError(
                f"l_max={self.l_max!r} must be an integer multiple of dl={self.dl!r}"
            )

    @property
    def zero_index(self) -> int:
        return int(round(self.l_max / self.dl))

    @property
    def n_levels(self) -> int:
        return 2 * self.zero_index + 1

    @property
    def levels(self) -> np.ndarray:
        return (np.arange(self.n_levels) - self.zero_index) * self.dl

    @classmethod
    def for_model(cls, model: FluidModel, l_max: float | None = None, dl: float | None = None):
        """Default lattice: resolve the fastest holding-time level scale with
        eight cells and extend far enough that near-critical excursion heights
        are negligible at the window edge."""
        rates = np.abs(model.rates[model.rates != 0.0])
        r_min, r_max = float(rates.min()), float(rates.max())
        if dl is None:
            dl = r_min / (16.0 * model.gamma)
        if l_max is None:
            l_max = 512.0 * r_max / model.gamma
        l_max = round(l_max / dl) * dl
        return cls(l_max=float(l_max), dl=float(dl))


def _level_kernels(model: FluidModel, grid: LevelGrid, theta1: float):
    """Closed-form displacement kernels of single uniformized segments.

    Ascending state ``i``: holding time ``Exp(gamma)`` tilted by the dividend
    weight gives density ``(gamma/r_i) exp(-(gamma + theta1 sigma_i) l / r_i)``
    on ``l >= 0``.  Descending state ``j``: ``(gamma/|r_j|) exp(-gamma l/r_j)``
    on ``l <= 0``.  The jump node at zero carries the midpoint value.
    """
    lev = grid.levels
    m0 = grid.zero_index
    gamma = model.gamma
    K1 = np.zeros((model.s_plus.size, grid.n_levels))
    for a_i, i in enumerate(model.s_plus):
        r = model.rates[i]
        rate = (gamma + theta1 * model.sigma[i]) / r
        K1[a_i, m0:] = (gamma / r) * np.exp(-rate * lev[m0:])
        K1[a_i, m0] *= 0.5
    K3 = np.zeros((model.s_minus.size, grid.n_levels))
    for b_j, j in enumerate(model.s_minus):
        r = model.rates[j]
        K3[b_j, : m0 + 1] = (gamma / -r) * np.exp(-(gamma / r) * lev[: m0 + 1])
        K3[b_j, m0] *= 0.5
    return K1, K3


class _LevelConstants:
    """Blocks and kernel spectra for the duration-integrated recursion."""

    def __init__(self, model: FluidModel, grid: LevelGrid, theta1: float, theta2: float):
        if not model.kernel.is_constant:
            raise StructureError(
                "the duration-integrated engine requires a duration-free kernel; "
                "duration-dependent kernels need the duration-level recursion"
            )
        self.model, self.grid = model, grid
        ip, im = model.s_plus, model.s_minus
        gamma = model.gamma
        C, D = eval_kernel_batch(model.kernel, np.array([0.0]))
        Cbar = np.eye(model.p) + C[0] / gamma
        kD = np.exp(-theta2 * model.k_cost) * (D[0] / gamma)
        self.Cpp = Cbar[ip[:, None], ip[None, :]]
        self.Cpm = Cbar[ip[:, None], im[None, :]]
        self.Cmp = Cbar[im[:, None], ip[None, :]]
        self.Cmm = Cbar[im[:, None], im[None, :]]
        self.Dpp = kD[ip[:, None], ip[None, :]]
        self.Dpm = kD[ip[:, None], im[None, :]]
        self.Dmp = kD[im[:, None], ip[None, :]]
        self.Dmm = kD[im[:, None], im[None, :]]

        self.m0 = grid.zero_index
        self.dl = grid.dl
        self.plans = _Plans(1, grid.n_levels, self.m0)
        K1, K3 = _level_kernels(model, grid, theta1)
        self.F1 = self.plans.f1(K1)  # (|S+|, freq)
        self.F3 = self.plans.f1(K3)  # (|S-|, freq)
        self.kernel_tail = float(max(K1[:, -1].max(initial=0.0), K3[:, 0].max(initial=0.0)))
        self.w_mass = _trapezoid_weights(self.m0 + 1) * grid.dl

    def base(self):
        """Duration-integrated two-epoch fields: one ascending and one
        descending segment glued by either kernel branch."""
        spec = self.F1[:, None, :] * self.F3[None, :, :]
        conv = self.plans.i1(spec) * self.dl  # (|S+|, |S-|, L)
        return conv * self.Cpm[:, :, None], conv * self.Dpm[:, :, None]

    def mass(self, field: np.ndarray) -> np.ndarray:
        """Integral over nonpositive displacements, per state pair."""
        return np.einsum("ijl,l->ij", field[..., : self.m0 + 1], self.w_mass)


class _LevelOrder:
    """Masked spectra of one order's duration-integrated ``(a, b)`` pair."""

    __slots__ = ("F_LA", "F_LB", "F_RA", "F_RB1", "F_YA", "F_YB", "FZ_A", "FZ_B", "FCD")

    def __init__(self, a: np.ndarray, b: np.ndarray, c: _LevelConstants):
        f, m0 = c.plans.f1, c.m0
        ML_A = _mask_level_nonneg(a, m0)
        ML_B = _mask_level_nonneg(b, m0)
        MR_A = _mask_level_nonpos(a, m0)
        MR_B = _mask_level_nonpos(b, m0)
        MR_AB = MR_A + MR_B
        self.F_LA = f(ML_A)
        self.F_LB = f(ML_B)
        self.F_RA = f(np.einsum("xk,kjl->xjl", c.Cmp, MR_A))
        self.F_RB1 = f(
            np.einsum("xk,kjl->xjl", c.Cmp, MR_B) + np.einsum("xk,kjl->xjl", c.Dmp, MR_AB)
        )
        self.F_YA = f(np.einsum("ik,kjl->ijl", c.Cpp, MR_A))
        self.F_YB = f(
            np.einsum("ik,kjl->ijl", c.Cpp, MR_B) + np.einsum("ik,kjl->ijl", c.Dpp, MR_AB)
        )
        self.FZ_A = f(np.einsum("ixl,xj->ijl", ML_A, c.Cmm))
        self.FZ_B = f(np.einsum("ixl,xj->ijl", ML_B, c.Cmm))
        self.FCD = f(np.einsum("ixl,xj->ijl", ML_A + ML_B, c.Dmm))


def _level_freqs(prev: _LevelOrder, pair, c: _LevelConstants):
    """Spectral assembly of one recursion application (all three operators)."""
    freq_a = c.F1[:, None] * prev.F_YA + c.F3[None, :] * prev.FZ_A
    freq_b = c.F1[:, None] * prev.F_YB + c.F3[None, :] * (prev.FZ_B + prev.FCD)
    if pair is not None:
        freq_a = freq_a + pair[0]
        freq_b = freq_b + pair[1]
    return freq_a, freq_b


def _level_pair(left: _LevelOrder, right: _LevelOrder):
    pa = np.einsum("ixf,xjf->ijf", left.F_LA, right.F_RA)
    pb = np.einsum("ixf,xjf->ijf", left.F_LB, right.F_RA) + np.einsum(
        "ixf,xjf->ijf", left.F_LA + left.F_LB, right.F_RB1
    )
    return pa, pb


def run_level_recursion(
    model: FluidModel,
    grid: LevelGrid,
    theta1: float = 0.0,
    theta2: float = 0.0,
    n_max: int = 6,
    diagnostics: dict | None = None,
):
    """Per-order duration-integrated bridge fields and first-return masses.

    Returns ``(fields, masses, diagnostics)`` where ``fields[n]`` is the
    ``(a, b)`` pair of ``(|S+|, |S-|, L)`` displacement densities of the
    order-``n`` bridge integrated over its final duration and ``masses[n]``
    integrates them over nonpositive displacements.  There is no duration
    window: the only truncation is the level window itself.
    """
    diagnostics = {} if diagnostics is None else diagnostics
    c = _LevelConstants(model, grid, theta1, theta2)
    a, b = c.base()
    _clamp_and_flag(a, diagnostics)
    _clamp_and_flag(b, diagnostics)
    fields = {2: (a, b)}
    orders = {2: _LevelOrder(a, b, c)}
    masses = {2: c.mass(a + b)}
    for n in range(3, n_max + 1):
        pair = None
        for w in range(2, n - 1):
            term = _level_pair(orders[w], orders[n - w])
            pair = term if pair is None else (pair[0] + term[0], pair[1] + term[1])
        freq_a, freq_b = _level_freqs(orders[n - 1], pair, c)
        a_n = c.plans.i1(freq_a) * c.dl
        b_n = c.plans.i1(freq_b) * c.dl
        _clamp_and_flag(a_n, diagnostics)
        _clamp_and_flag(b_n, diagnostics)
        fields[n] = (a_n, b_n)
        orders[n] = _LevelOrder(a_n, b_n, c)
        masses[n] = c.mass(a_n + b_n)
    edge = max(
        max(float(np.abs(f[0][..., 0]).max()), float(np.abs(f[0][..., -1]).max()),
            float(np.abs(f[1][..., 0]).max()), float(np.abs(f[1][..., -1]).max()))
        for f in fields.values()
    )
    diagnostics["level_edge_max_density"] = edge
    diagnostics["kernel_window_tail"] = c.kernel_tail
    return fields, masses, diagnostics


def level_fixed_point(
    model: FluidModel,
    grid: LevelGrid,
    theta1: float = 0.0,
    theta2: float = 0.0,
    eps: float = 1e-9,
    max_iter: int = 2000,
    diagnostics: dict | None = None,
):
    """Whole-series duration-integrated bridge sum (first-return fields).

    Iterates the series fixed-point equation from the two-epoch fields.  The
    iteration is monotone from below, so the stopping rule watches the total
    mass increment.  Returns ``(a_total, b_total, info)``.
    """
    diagnostics = {} if diagnostics is None else diagnostics
    c = _LevelConstants(model, grid, theta1, theta2)
    a0, b0 = c.base()
    a, b = a0.copy(), b0.copy()
    mass = c.mass(a + b)
    history = [mass]
    converged = False
    for _ in range(max_iter):
        lvl = _LevelOrder(a, b, c)
        freq_a, freq_b = _level_freqs(lvl, _level_pair(lvl, lvl), c)
        a_new = c.plans.i1(freq_a) * c.dl + a0
        b_new = c.plans.i1(freq_b) * c.dl + b0
        _clamp_and_flag(a_new, diagnostics)
        _clamp_and_flag(b_new, diagnostics)
        new_mass = c.mass(a_new + b_new)
        history.append(new_mass)
        delta = float(np.max(np.abs(new_mass - mass)))
        a, b, mass = a_new, b_new, new_mass
        if delta < eps:
            converged = True
            break
    edge = max(
        float(np.abs(a[..., 0]).max()), float(np.abs(a[..., -1]).max()),
        float(np.abs(b[..., 0]).max()), float(np.abs(b[..., -1]).max()),
    )
    info = {
        "iterations": len(history) - 1,
        "converged": converged,
        "mass": mass,
        "mass_history": np.array(history),
        "level_edge_max_density": edge,
        "kernel_window_tail": c.kernel_tail,
    }
    info.update(diagnostics)
    return a, b, info
