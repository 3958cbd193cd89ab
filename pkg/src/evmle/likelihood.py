"""Marked point-process observation model for contrast-threshold events.

The conditional rate of an event with mark (pixel u, polarity p) is a softplus
bump over the threshold-crossing residual

    phi = L_hat(u, t) - L_last(u) - p * C_psi(u),

where L_last is the predicted log-intensity at the pixel's previous event
(two scalars of streaming state per pixel) and C_psi is a coarse-grid
bilinear threshold field.  The windowed negative log-likelihood combines the
event term with a Monte Carlo compensator integral; boundary memory and the
window's start state are treated as constants, so gradients never cross
window boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .events import EventStream
from .integrate import IntegrationError, IntegratorConfig, build_grid, integrate
from .scene import (
    DynamicsParams,
    RendererConfig,
    SceneModel,
    SensorGeometry,
    StableFocusField,
    base_center,
    render_log_intensity_map,
)

__all__ = [
    "IntensityHyper",
    "ThresholdParams",
    "BilinearPlan",
    "PerPixelMemory",
    "Window",
    "McConfig",
    "threshold_at",
    "threshold_map",
    "residual",
    "intensity",
    "intensity_dphi",
    "total_intensity_mc",
    "init_memory",
    "advance_memory",
    "build_window_plan",
    "window_nll",
    "integrate_compensator",
]

THRESHOLD_FLOOR = 1e-3  # positivity floor for the interpolated threshold field


@dataclass(frozen=True)
class IntensityHyper:
    """Fixed shape of the surrogate rate: lambda0 + softplus(beta - gamma|phi|)."""

    lambda0: float = 1e-4
    beta: float = 0.0
    gamma: float = 60.0

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass
class ThresholdParams:
    """Global offset plus an 8x8 coarse residual grid (65 free parameters)."""

    c_base: float
    grid: np.ndarray = field(default=None)  # (Hc, Wc)

    def __post_init__(self):
        if self.grid is None:
            self.grid = np.zeros((8, 8), dtype=np.float64)
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2:
            raise ValueError("threshold grid must be 2-D")

    @property
    def n_params(self) -> int:
        return 1 + self.grid.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.c_base], self.grid.ravel()])

    @classmethod
    def from_vector(cls, vec, grid_shape=(8, 8)):
        vec = np.asarray(vec, dtype=np.float64)
        return cls(float(vec[0]), vec[1:].reshape(grid_shape))

    def copy(self) -> "ThresholdParams":
        return ThresholdParams(self.c_base, self.grid.copy())


class BilinearPlan:
    """Static pixel -> (4 coarse nodes, 4 weights) tables for one geometry.

    Coarse node (i, j) sits at pixel position (j*(W-1)/(Wc-1), i*(H-1)/(Hc-1)),
    so the grid spans the full sensor and interpolation reproduces node values.
    """

    def __init__(self, geometry: SensorGeometry, grid_shape=(8, 8)):
        hc, wc = grid_shape
        if hc < 2 or wc < 2 or geometry.width < 2 or geometry.height < 2:
            raise ValueError("bilinear plan needs at least a 2x2 grid on a 2x2 sensor")
        self.geometry = geometry
        self.grid_shape = (hc, wc)
        ux = np.arange(geometry.width, dtype=np.float64)
        uy = np.arange(geometry.height, dtype=np.float64)
        gx = ux * (wc - 1) / (geometry.width - 1)
        gy = uy * (hc - 1) / (geometry.height - 1)
        ix0 = np.clip(np.floor(gx).astype(np.int64), 0, wc - 2)
        iy0 = np.clip(np.floor(gy).astype(np.int64), 0, hc - 2)
        fx = gx - ix0
        fy = gy - iy0
        iy0g, ix0g = np.meshgrid(iy0, ix0, indexing="ij")
        fyg, fxg = np.meshgrid(fy, fx, indexing="ij")
        base = iy0g * wc + ix0g
        idx = np.stack([base, base + 1, base + wc, base + wc + 1], axis=-1)
        w = np.stack(
            [(1 - fyg) * (1 - fxg), (1 - fyg) * fxg, fyg * (1 - fxg), fyg * fxg],
            axis=-1,
        )
        self.node_idx = idx.reshape(-1, 4)  # (n_pixels, 4), row-major pixels
        self.node_w = w.reshape(-1, 4)

    def interpolate(self, grid: np.ndarray) -> np.ndarray:
        """Dense (height, width) map of the coarse grid."""
        vals = (grid.ravel()[self.node_idx] * self.node_w).sum(axis=1)
        return vals.reshape(self.geometry.height, self.geometry.width)

    def scatter(self, per_pixel: np.ndarray) -> np.ndarray:
        """Adjoint of interpolate: per-pixel values -> coarse-grid gradient."""
        flat = np.bincount(
            self.node_idx.ravel(),
            weights=(per_pixel.reshape(-1, 1) * self.node_w).ravel(),
            minlength=self.grid_shape[0] * self.grid_shape[1],
        )
        return flat.reshape(self.grid_shape)


_bilinear_cache: dict = {}


def _bilinear_plan(geometry: SensorGeometry, grid_shape) -> BilinearPlan:
    key = (geometry.width, geometry.height, grid_shape)
    if key not in _bilinear_cache:
        _bilinear_cache[key] = BilinearPlan(geometry, grid_shape)
    return _bilinear_cache[key]


def threshold_map(psi: ThresholdParams, geometry: SensorGeometry) -> np.ndarray:
    """Interpolated C_psi(u) over the full sensor, shape (height, width)."""
    plan = _bilinear_plan(geometry, psi.grid.shape)
    return psi.c_base + plan.interpolate(psi.grid)


def threshold_at(psi: ThresholdParams, ux: int, uy: int, geometry: SensorGeometry) -> float:
    """C_psi at one pixel: c_base plus the convex bilinear combination."""
    plan = _bilinear_plan(geometry, psi.grid.shape)
    pix = uy * geometry.width + ux
    return float(psi.c_base + np.dot(psi.grid.ravel()[plan.node_idx[pix]], plan.node_w[pix]))


@dataclass
class PerPixelMemory:
    """Streaming state: per pixel, the last event time and predicted log-intensity."""

    t_last: np.ndarray  # (height, width)
    L_last: np.ndarray  # (height, width)

    def __post_init__(self):
        self.t_last = np.asarray(self.t_last, dtype=np.float64)
        self.L_last = np.asarray(self.L_last, dtype=np.float64)
        if self.t_last.shape != self.L_last.shape:
            raise ValueError("memory arrays must share a shape")
        if not (np.all(np.isfinite(self.t_last)) and np.all(np.isfinite(self.L_last))):
            raise ValueError("memory entries must be finite")

    def copy(self) -> "PerPixelMemory":
        return PerPixelMemory(self.t_last.copy(), self.L_last.copy())


def init_memory(scene: SceneModel, theta: DynamicsParams, z0, t0: float) -> PerPixelMemory:
    """Memory at stream start: t_last = t0, L_last = predicted frame under theta."""
    c = base_center(t0, scene.drift) + np.asarray(z0, dtype=np.float64)
    L = render_log_intensity_map(c, scene.geometry, scene.renderer)
    t = np.full((scene.geometry.height, scene.geometry.width), float(t0))
    return PerPixelMemory(t, L)


@dataclass
class Window:
    """One receding-horizon unit: events in (t_a, t_b], detached boundary state."""

    t_a: float
    t_b: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    boundary_memory: PerPixelMemory
    z_a: np.ndarray

    def __post_init__(self):
        if not self.t_a < self.t_b:
            raise ValueError("window needs t_a < t_b")
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        self.z_a = np.asarray(self.z_a, dtype=np.float64)
        if self.t.size:
            if self.t.min() <= self.t_a or self.t.max() > self.t_b:
                raise ValueError("window events must lie in (t_a, t_b]")
            if np.any(np.diff(self.t) < 0):
                raise ValueError("window events must be time-sorted")
        if np.any(self.boundary_memory.t_last > self.t_a + 1e-12):
            raise ValueError("boundary memory must predate the window start")

    @classmethod
    def from_stream(cls, stream: EventStream, t_a, t_b, memory: PerPixelMemory, z_a):
        lo, hi = stream.slice_window(t_a, t_b)
        return cls(
            float(t_a), float(t_b),
            stream.t[lo:hi], stream.x[lo:hi], stream.y[lo:hi], stream.p[lo:hi],
            memory, z_a,
        )

    def __len__(self):
        return int(self.t.size)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo pixel subsampling of the compensator's mark sum."""

    samples: int = 512
    seed: int = 0
    resample_policy: str = "fixed-per-window"  # or "fresh-per-evaluation"
    exhaustive: bool = False  # full enumeration instead of sampling

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("need at least one sampled pixel")
        if self.resample_policy not in ("fixed-per-window", "fresh-per-evaluation"):
            raise ValueError(f"unknown resample policy {self.resample_policy!r}")

    def sample_pixels(self, n_pixels: int, window_index: int = 0, draw_index: int = 0) -> np.ndarray:
        """Uniform-with-replacement pixel draw, deterministic in all indices."""
        if self.exhaustive:
            return np.arange(n_pixels, dtype=np.int64)
        if self.samples > n_pixels:
            raise ValueError("sample count exceeds pixel count")
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(window_index, draw_index))
        )
        return rng.integers(0, n_pixels, size=self.samples, dtype=np.int64)


# ---------------------------------------------------------------------------
# elementary operations


def residual(ux, uy, p, l_hat_now, memory: PerPixelMemory, psi: ThresholdParams,
             geometry: SensorGeometry) -> float:
    """Threshold-crossing residual phi = L_hat - L_last(u) - p * C_psi(u)."""
    return float(l_hat_now - memory.L_last[uy, ux] - p * threshold_at(psi, ux, uy, geometry))


def _softplus(s):
    return np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))


def _sigmoid(s):
    out = np.empty_like(np.asarray(s, dtype=np.float64))
    s = np.asarray(s, dtype=np.float64)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def intensity(phi, hyper: IntensityHyper):
    """Event rate lambda0 + softplus(beta - gamma|phi|); peaks at phi = 0."""
    phi = np.asarray(phi, dtype=np.float64)
    out = hyper.lambda0 + _softplus(hyper.beta - hyper.gamma * np.abs(phi))
    return float(out) if out.ndim == 0 else out


def intensity_dphi(phi, hyper: IntensityHyper):
    """d(intensity)/d(phi) = -gamma * sigmoid(beta - gamma|phi|) * sign(phi)."""
    phi = np.asarray(phi, dtype=np.float64)
    out = -hyper.gamma * _sigmoid(hyper.beta - hyper.gamma * np.abs(phi)) * np.sign(phi)
    return float(out) if out.ndim == 0 else out


def total_intensity_mc(t, l_hat_fn, memory: PerPixelMemory, psi: ThresholdParams,
                       hyper: IntensityHyper, mc: McConfig, geometry: SensorGeometry,
                       sample: np.ndarray | None = None) -> float:
    """Estimate of the total rate over all (pixel, polarity) marks at time t.

    l_hat_fn maps vectorized pixel coordinate arrays (x, y) to predicted
    log-intensity.  With an exhaustive sample this is the exact mark sum.
    """
    if sample is None:
        sample = mc.sample_pixels(geometry.n_pixels)
    xs = sample % geometry.width
    ys = sample // geometry.width
    l_hat = np.asarray(l_hat_fn(xs, ys), dtype=np.float64)
    cmap = threshold_map(psi, geometry)
    r = l_hat - memory.L_last[ys, xs]
    c = cmap[ys, xs]
    lam_sum = intensity(r - c, hyper) + intensity(r + c, hyper)
    return float(geometry.n_pixels / sample.size * np.sum(lam_sum))


def advance_memory(memory: PerPixelMemory, events, theta: DynamicsParams,
                   scene: SceneModel, integ_cfg: IntegratorConfig,
                   t_start: float, z_start, t_end: float | None = None):
    """Overwrite (t_last, L_last) at each event's pixel, chronologically.

    events is a (t, x, y, p) tuple of arrays with t in (t_start, t_end];
    returns the new memory and the latent state at t_end.
    """
    ev_t, ev_x, ev_y, _ = (np.asarray(a) for a in events)
    if t_end is None:
        t_end = float(ev_t[-1]) if ev_t.size else t_start
    mem = memory.copy()
    z_start = np.asarray(z_start, dtype=np.float64)
    if t_end == t_start:
        return mem, z_start
    fld = StableFocusField(theta)
    times, zs = integrate(fld.value, z_start, t_start, t_end, integ_cfg, stops=ev_t)
    if ev_t.size:
        nodes = np.searchsorted(times, ev_t)
        c = base_center(ev_t, scene.drift) + zs[nodes]
        d2 = (ev_x - c[:, 0]) ** 2 + (ev_y - c[:, 1]) ** 2
        r = scene.renderer
        l_hat = np.log(r.i_bg + r.i_amp * np.exp(-d2 / (2.0 * r.sigma**2)) + r.log_eps)
        # ascending order makes the last event at a pixel win
        mem.t_last[ev_y, ev_x] = ev_t
        mem.L_last[ev_y, ev_x] = l_hat
    return mem, zs[-1]


# ---------------------------------------------------------------------------
# window plan


@dataclass
class WindowPlan:
    """Parameter-independent precomputation for repeated window evaluations."""

    t_a: float
    t_b: float
    times: np.ndarray
    c0x: np.ndarray
    c0y: np.ndarray
    z_a: np.ndarray
    n_pixels: int
    scale: float
    # events (original window order: time, then (y, x, p) on ties)
    ev_node: np.ndarray
    ev_pix: np.ndarray
    ev_xf: np.ndarray
    ev_yf: np.ndarray
    ev_pf: np.ndarray
    ev_prev: np.ndarray
    ev_lbnd: np.ndarray
    ev_flush_ptr: np.ndarray
    ev_flush_cnt: np.ndarray
    flush_didx: np.ndarray
    # compensator
    comp_nodes: np.ndarray
    comp_wts: np.ndarray
    slot_pix: np.ndarray
    slot_xf: np.ndarray
    slot_yf: np.ndarray
    slot_v0: np.ndarray
    slot_seg_ptr: np.ndarray
    slot_seg_node: np.ndarray
    d_ptr: np.ndarray
    geometry: SensorGeometry
    renderer: RendererConfig

    @property
    def n_events(self) -> int:
        return int(self.ev_node.size)


def _render_consts(r: RendererConfig):
    inv2s2 = 1.0 / (2.0 * r.sigma**2)
    inv_s2 = 1.0 / r.sigma**2
    l_far = float(np.log((r.i_bg + 0.0) + r.log_eps))
    if r.i_amp == 0.0:
        far_d2 = -1.0  # always in the constant branch
    else:
        far_d2 = 2.0 * r.sigma**2 * (math.log(r.i_amp / (r.i_bg + r.log_eps)) + 55.0 * math.log(2.0))
    return r.i_bg, r.i_amp, inv2s2, inv_s2, r.log_eps, far_d2, l_far


def build_window_plan(w: Window, scene: SceneModel, integ_cfg: IntegratorConfig,
                      sample: np.ndarray) -> WindowPlan:
    """Grid, event wiring, memory segmentation and quadrature weights for w."""
    geom = scene.geometry
    width = geom.width
    sample = np.asarray(sample, dtype=np.int64)

    base = build_grid(w.t_a, w.t_b, integ_cfg.dt_max)
    times = np.unique(np.concatenate([base, w.t]))
    c0 = base_center(times, scene.drift)

    ev_node = np.searchsorted(times, w.t).astype(np.int64)
    ev_pix = (w.y * width + w.x).astype(np.int64)
    k_total = ev_node.size

    # predecessor (same pixel, strictly earlier node) and group ordinals
    order = np.lexsort((ev_node, ev_pix))
    ev_prev = np.full(k_total, -1, dtype=np.int64)
    grp_ord = np.zeros(k_total, dtype=np.int64)  # 1-based ordinal of the event's group at its pixel
    i = 0
    spix = ev_pix[order]
    snode = ev_node[order]
    while i < k_total:
        j = i
        prev_idx = -1
        ordn = 0
        while j < k_total and spix[j] == spix[i]:
            j2 = j
            ordn += 1
            while j2 < k_total and spix[j2] == spix[i] and snode[j2] == snode[j]:
                ev_prev[order[j2]] = prev_idx
                grp_ord[order[j2]] = ordn
                j2 += 1
            prev_idx = order[j2 - 1]
            j = j2
        i = j

    lbnd_flat = w.boundary_memory.L_last.ravel()
    ev_lbnd = lbnd_flat[ev_pix] if k_total else np.empty(0, dtype=np.float64)

    # group leaders in window order (first event of each (node, pixel) run)
    if k_total:
        lead = np.ones(k_total, dtype=bool)
        lead[1:] = (ev_node[1:] != ev_node[:-1]) | (ev_pix[1:] != ev_pix[:-1])
    else:
        lead = np.zeros(0, dtype=bool)

    # sampled-pixel membership and per-pixel group-node lists
    slot_sorted = np.sort(sample)
    in_sample = (
        np.zeros(0, dtype=bool) if not k_total else
        slot_sorted[np.clip(np.searchsorted(slot_sorted, ev_pix), 0, slot_sorted.size - 1)] == ev_pix
    )

    # per-slot memory segments: the slot pixel's group nodes, ascending
    gmask = lead & in_sample if k_total else lead
    gpix = ev_pix[order][lead[order]] if k_total else np.empty(0, np.int64)
    gnode = ev_node[order][lead[order]] if k_total else np.empty(0, np.int64)
    n_slots = sample.size
    lo = np.searchsorted(gpix, sample, side="left")
    hi = np.searchsorted(gpix, sample, side="right")
    counts = hi - lo
    slot_seg_ptr = np.zeros(n_slots + 1, dtype=np.int64)
    np.cumsum(counts, out=slot_seg_ptr[1:])
    slot_seg_node = np.concatenate(
        [gnode[a:b] for a, b in zip(lo, hi)] or [np.empty(0, np.int64)]
    ).astype(np.int64)
    d_ptr = np.zeros(n_slots + 1, dtype=np.int64)
    np.cumsum(counts + 1, out=d_ptr[1:])

    # flush lists: leader of group j at pixel u -> D indices (slot, segment j)
    ev_flush_ptr = np.zeros(k_total, dtype=np.int64)
    ev_flush_cnt = np.zeros(k_total, dtype=np.int64)
    didx_parts = []
    if k_total and n_slots:
        slot_order = np.argsort(sample, kind="stable")
        pos = 0
        leaders = np.nonzero(gmask)[0]
        for kk in leaders:
            u = ev_pix[kk]
            a = np.searchsorted(sample[slot_order], u, side="left")
            b = np.searchsorted(sample[slot_order], u, side="right")
            if a == b:
                continue
            slots = slot_order[a:b]
            ev_flush_ptr[kk] = pos
            ev_flush_cnt[kk] = b - a
            didx_parts.append(d_ptr[slots] + grp_ord[kk])
            pos += b - a
    flush_didx = (
        np.concatenate(didx_parts).astype(np.int64) if didx_parts else np.empty(0, np.int64)
    )

    # compensator knots: the base grid plus event times at sampled pixels
    if k_total:
        comp_times = np.unique(np.concatenate([base, w.t[in_sample]]))
    else:
        comp_times = base
    comp_nodes = np.searchsorted(times, comp_times).astype(np.int64)
    comp_wts = np.zeros(comp_times.size, dtype=np.float64)
    if comp_times.size > 1:
        gaps = np.diff(comp_times)
        comp_wts[:-1] += 0.5 * gaps
        comp_wts[1:] += 0.5 * gaps

    return WindowPlan(
        t_a=w.t_a, t_b=w.t_b, times=times, c0x=np.ascontiguousarray(c0[:, 0]),
        c0y=np.ascontiguousarray(c0[:, 1]), z_a=w.z_a.copy(),
        n_pixels=geom.n_pixels, scale=geom.n_pixels / n_slots,
        ev_node=ev_node, ev_pix=ev_pix,
        ev_xf=w.x.astype(np.float64), ev_yf=w.y.astype(np.float64),
        ev_pf=w.p.astype(np.float64), ev_prev=ev_prev, ev_lbnd=ev_lbnd,
        ev_flush_ptr=ev_flush_ptr, ev_flush_cnt=ev_flush_cnt, flush_didx=flush_didx,
        comp_nodes=comp_nodes, comp_wts=comp_wts,
        slot_pix=sample, slot_xf=(sample % width).astype(np.float64),
        slot_yf=(sample // width).astype(np.float64),
        slot_v0=lbnd_flat[sample].astype(np.float64),
        slot_seg_ptr=slot_seg_ptr, slot_seg_node=slot_seg_node, d_ptr=d_ptr,
        geometry=geom, renderer=scene.renderer,
    )


def _forward(plan: WindowPlan, theta: DynamicsParams, psi: ThresholdParams,
             hyper: IntensityHyper, want_grad: bool):
    """Shared forward pass; returns everything the backward sweep needs."""
    rc = _render_consts(plan.renderer)
    z = _kernels.forward_traj(plan.times, plan.z_a[0], plan.z_a[1], theta.alpha, theta.omega)
    if not np.all(np.isfinite(z)):
        bad = np.nonzero(~np.isfinite(z).all(axis=1))[0][0]
        raise IntegrationError(float(plan.times[bad]))
    cmap_flat = threshold_map(psi, plan.geometry).ravel()
    c_ev = cmap_flat[plan.ev_pix] if plan.n_events else np.empty(0, np.float64)
    c_slot = cmap_flat[plan.slot_pix]
    nll_e, lhat, phi, lam, e, glx, gly = _kernels.event_forward(
        z, plan.c0x, plan.c0y,
        plan.ev_node, plan.ev_xf, plan.ev_yf, plan.ev_pf, plan.ev_prev, plan.ev_lbnd, c_ev,
        *rc, hyper.lambda0, hyper.beta, hyper.gamma,
    )
    if want_grad:
        dgdz = np.zeros((plan.times.size, 2), dtype=np.float64)
        dc_slot = np.zeros(plan.slot_pix.size, dtype=np.float64)
        d_seg = np.zeros(int(plan.d_ptr[-1]), dtype=np.float64)
    else:
        dgdz = np.zeros((1, 2), dtype=np.float64)
        dc_slot = np.zeros(1, dtype=np.float64)
        d_seg = np.zeros(1, dtype=np.float64)
    comp = _kernels.comp_forward(
        z, plan.c0x, plan.c0y, plan.comp_nodes, plan.comp_wts,
        plan.slot_xf, plan.slot_yf, plan.slot_v0, c_slot,
        plan.slot_seg_ptr, plan.slot_seg_node, plan.d_ptr,
        plan.scale, *rc, hyper.lambda0, hyper.beta, hyper.gamma,
        want_grad, dgdz, dc_slot, d_seg,
    )
    nll = nll_e + comp
    if not np.isfinite(nll):
        raise FloatingPointError("non-finite window objective")
    return z, nll_e, comp, lhat, phi, lam, e, glx, gly, dgdz, dc_slot, d_seg


def window_nll(w: Window, theta: DynamicsParams, psi: ThresholdParams,
               hyper: IntensityHyper, mc: McConfig, integ_cfg: IntegratorConfig,
               scene: SceneModel, plan: WindowPlan | None = None,
               window_index: int = 0, draw_index: int = 0):
    """Windowed negative log-likelihood and per-event diagnostics."""
    if plan is None:
        sample = mc.sample_pixels(scene.geometry.n_pixels, window_index, draw_index)
        plan = build_window_plan(w, scene, integ_cfg, sample)
    _, nll_e, comp, _, phi, lam, _, _, _, _, _, _ = _forward(plan, theta, psi, hyper, False)
    return nll_e + comp, {
        "event_term": nll_e,
        "comp_term": comp,
        "k_win": plan.n_events,
        "phi": phi,
        "lam": lam,
    }


def integrate_compensator(theta: DynamicsParams, psi: ThresholdParams,
                          memory: PerPixelMemory, t_a: float, t_b: float,
                          sample: np.ndarray, integ_cfg: IntegratorConfig,
                          scene: SceneModel, hyper: IntensityHyper,
                          events=None, z_a=(0.0, 0.0)):
    """Compensator integral over [t_a, t_b] with the window's quadrature.

    Returns (value, times, trajectory).  `events` (t, x, y, p arrays) update
    the running memory exactly as inside window_nll; without them the memory
    is static over the span.
    """
    if t_b < t_a:
        raise ValueError("t_b must be >= t_a")
    if t_b == t_a:
        return 0.0, np.array([t_a]), np.array([z_a], dtype=np.float64)
    if events is None:
        events = (np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64))
    ev_t, ev_x, ev_y, ev_p = (np.asarray(a) for a in events)
    w = Window(t_a, t_b, ev_t, ev_x, ev_y, ev_p, memory, np.asarray(z_a, dtype=np.float64))
    plan = build_window_plan(w, scene, integ_cfg, np.asarray(sample, dtype=np.int64))
    z, _, comp, *_ = _forward(plan, theta, psi, hyper, False)
    return comp, plan.times, z
