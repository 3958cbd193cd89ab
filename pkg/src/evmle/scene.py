"""Sensor geometry, latent dynamics, and the Gaussian-blob state-to-image model.

The scene is a single Gaussian blob whose center c(t) = c0(t) + z(t) is the sum
of a known sinusoidal base drift c0(t) and a latent offset z(t) driven by a
stable-focus ODE.  The renderer maps a center position to per-pixel
log-intensity; its analytic spatial gradient is what couples the event
likelihood to the latent state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

__all__ = [
    "SensorGeometry",
    "DriftConfig",
    "DynamicsParams",
    "RendererConfig",
    "SceneModel",
    "VectorField",
    "StableFocusField",
    "base_center",
    "dynamics_field",
    "dynamics_jacobian",
    "dynamics_param_grad",
    "render_log_intensity",
    "render_log_intensity_grad",
    "render_log_intensity_map",
]


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel grid; the mark space is (pixel, polarity), size 2*width*height."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("sensor geometry must have width >= 1 and height >= 1")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def pixel_index(self, ux, uy):
        """Linear pixel id, row-major (uy * width + ux)."""
        return uy * self.width + ux


@dataclass(frozen=True)
class DriftConfig:
    """Known base-center drift: c_base + [A sin(2πt/T1), B sin(2πt/T2)]."""

    c_base: tuple[float, float] = (32.0, 32.0)
    amp_x: float = 22.0
    amp_y: float = 22.0
    period_x: float = 1.0
    period_y: float = 1.3

    def __post_init__(self):
        if self.period_x <= 0 or self.period_y <= 0:
            raise ValueError("drift periods must be positive")


@dataclass(frozen=True)
class DynamicsParams:
    """Stable-focus parameters: damping rate alpha (1/s), angular rate omega (rad/s).

    alpha may be any real during optimization; the ground truth is positive.
    """

    alpha: float
    omega: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.omega)):
            raise ValueError("dynamics parameters must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.omega], dtype=np.float64)


@dataclass(frozen=True)
class RendererConfig:
    """Gaussian-blob intensity model: I_bg + I_amp exp(-||u-c||^2 / 2 sigma^2)."""

    i_bg: float = 0.15
    i_amp: float = 0.75
    sigma: float = 2.0
    log_eps: float = 1e-3  # stabilizer inside the log; shared by data and model

    def __post_init__(self):
        if self.i_bg < 0 or self.i_amp < 0:
            raise ValueError("intensity levels must be nonnegative")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be positive")


@dataclass(frozen=True)
class SceneModel:
    """Everything fixed about the scene: sensor, drift, renderer."""

    geometry: SensorGeometry
    drift: DriftConfig
    renderer: RendererConfig


def base_center(t, cfg: DriftConfig) -> np.ndarray:
    """Known drift center at time t (scalar or array); total function."""
    t = np.asarray(t, dtype=np.float64)
    cx = cfg.c_base[0] + cfg.amp_x * np.sin(2.0 * np.pi * t / cfg.period_x)
    cy = cfg.c_base[1] + cfg.amp_y * np.sin(2.0 * np.pi * t / cfg.period_y)
    return np.stack([cx, cy], axis=-1)


class VectorField(Protocol):
    """Continuous-time vector field with the callbacks the adjoint method needs."""

    n_params: int

    def value(self, z: np.ndarray, t: float) -> np.ndarray: ...

    def jacobian(self, z: np.ndarray, t: float) -> np.ndarray:
        """d(value)/dz, shape (n, n)."""
        ...

    def param_grad(self, z: np.ndarray, t: float) -> np.ndarray:
        """d(value)/dparams, shape (n, n_params)."""
        ...


class StableFocusField:
    """Autonomous linear field  zdot = [-a x - w y,  w x - a y].

    The origin is an equilibrium; for a > 0 trajectories spiral in at rate a
    while rotating at w.
    """

    n_params = 2

    def __init__(self, params: DynamicsParams):
        self.params = params

    def value(self, z, t=0.0):
        return dynamics_field(z, t, self.params)

    def jacobian(self, z=None, t=0.0):
        return dynamics_jacobian(z, self.params)

    def param_grad(self, z, t=0.0):
        return dynamics_param_grad(z, self.params)


def dynamics_field(z, t, params: DynamicsParams) -> np.ndarray:
    """Stable-focus velocity; independent of t (autonomous)."""
    z = np.asarray(z, dtype=np.float64)
    a, w = params.alpha, params.omega
    return np.array([-a * z[0] - w * z[1], w * z[0] - a * z[1]])


def dynamics_jacobian(z, params: DynamicsParams) -> np.ndarray:
    """State Jacobian [[-a, -w], [w, -a]]; constant in z."""
    a, w = params.alpha, params.omega
    return np.array([[-a, -w], [w, -a]])


def dynamics_param_grad(z, params: DynamicsParams) -> np.ndarray:
    """Columns d(field)/d(alpha) = (-x, -y) and d(field)/d(omega) = (-y, x)."""
    z = np.asarray(z, dtype=np.float64)
    return np.array([[-z[0], -z[1]], [-z[1], z[0]]])


def render_log_intensity(u, c, cfg: RendererConfig) -> float:
    """log(I_bg + I_amp exp(-||u-c||^2 / 2 sigma^2) + eps) at one pixel."""
    u = np.asarray(u, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    d2 = float(np.sum((u - c) ** 2))
    return float(np.log(cfg.i_bg + cfg.i_amp * np.exp(-d2 / (2.0 * cfg.sigma**2)) + cfg.log_eps))


def render_log_intensity_grad(u, c, cfg: RendererConfig) -> np.ndarray:
    """Analytic d(log-intensity)/dc.

    Since c = c0(t) + z, this is also the gradient with respect to the latent
    offset z.  Points from u toward c (the blob is a radial peak).
    """
    u = np.asarray(u, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    diff = u - c
    d2 = float(np.sum(diff**2))
    g = cfg.i_amp * np.exp(-d2 / (2.0 * cfg.sigma**2))
    denom = cfg.i_bg + g + cfg.log_eps
    # dL/dc = (g / denom) * (u - c) / sigma^2
    return (g / (denom * cfg.sigma**2)) * diff


def render_log_intensity_map(c, geometry: SensorGeometry, cfg: RendererConfig) -> np.ndarray:
    """Full-frame log-intensity, shape (height, width), row index = u_y."""
    ux = np.arange(geometry.width, dtype=np.float64)
    uy = np.arange(geometry.height, dtype=np.float64)
    dx2 = (ux - c[0]) ** 2
    dy2 = (uy - c[1]) ** 2
    d2 = dy2[:, None] + dx2[None, :]
    return np.log(cfg.i_bg + cfg.i_amp * np.exp(-d2 / (2.0 * cfg.sigma**2)) + cfg.log_eps)
