"""Fixed-step explicit ODE integration with exact stop points.

Classical RK4 on a grid whose step never exceeds dt_max and whose nodes
include every requested stop time bitwise-exactly, so quantities evaluated at
event timestamps read on-grid states rather than interpolations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["IntegratorConfig", "IntegrationError", "build_grid", "integrate", "rk4_step"]


@dataclass(frozen=True)
class IntegratorConfig:
    dt_max: float
    scheme: str = "rk4"

    def __post_init__(self):
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        if self.scheme != "rk4":
            raise ValueError(f"unknown integration scheme {self.scheme!r}")


class IntegrationError(RuntimeError):
    """Raised when the state goes non-finite; carries the failing time."""

    def __init__(self, t: float):
        super().__init__(f"non-finite state encountered at t={t!r}")
        self.t = t


def build_grid(t_a: float, t_b: float, dt_max: float, stops=None) -> np.ndarray:
    """Ascending node times covering [t_a, t_b].

    Every stop appears bitwise in the result; each gap between consecutive
    knots is split uniformly into ceil(gap/dt_max) steps.
    """
    if t_b < t_a:
        raise ValueError("t_b must be >= t_a")
    knots = [t_a, t_b]
    if stops is not None:
        stops = np.asarray(stops, dtype=np.float64)
        if stops.size:
            if stops.min() < t_a or stops.max() > t_b:
                raise ValueError("stops must lie within [t_a, t_b]")
            knots.append(stops)
    knots = np.unique(np.concatenate([np.atleast_1d(np.asarray(k, dtype=np.float64)) for k in knots]))
    if knots.size == 1:
        return knots
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(np.ceil((b - a) / dt_max - 1e-12)))
        seg = a + (b - a) * (np.arange(n, dtype=np.float64) / n)
        seg[0] = a  # keep knots bitwise
        pieces.append(seg)
    pieces.append(knots[-1:])
    return np.concatenate(pieces)


def rk4_step(f, x, t, h):
    """One classical RK4 step of size h from (t, x)."""
    k1 = f(x, t)
    k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = f(x + h * k3, t + h)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(f, x0, t_a: float, t_b: float, cfg: IntegratorConfig, stops=None):
    """RK4 trajectory of dx/dt = f(x, t) sampled at all step boundaries.

    Returns (times, states); times contains t_a, t_b and every stop exactly,
    states has shape (len(times), len(x0)).
    """
    times = build_grid(t_a, t_b, cfg.dt_max, stops)
    x = np.array(x0, dtype=np.float64)
    states = np.empty((times.size, x.size), dtype=np.float64)
    states[0] = x
    for i in range(times.size - 1):
        x = rk4_step(f, x, times[i], times[i + 1] - times[i])
        if not np.all(np.isfinite(x)):
            raise IntegrationError(float(times[i + 1]))
        states[i + 1] = x
    return times, states
