"""Event-stream synthesis by the ideal contrast-threshold rule, plus CSV I/O.

A pixel holds a reference log-intensity; whenever the rendered log-intensity
moves a full threshold C(u) away from the reference, an event fires with the
sign of the change and the reference steps by that signed threshold.  Frames
are rendered at a fixed rate and crossing times are interpolated linearly
inside each frame interval, so one frame can emit several events per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrate import IntegratorConfig, integrate
from .scene import (
    DriftConfig,
    DynamicsParams,
    RendererConfig,
    SensorGeometry,
    StableFocusField,
    base_center,
    render_log_intensity_map,
)

__all__ = [
    "Event",
    "EventStream",
    "ThresholdField",
    "EventFileError",
    "true_threshold_field",
    "synthesize_events",
    "write_events",
    "read_events",
]

EVENT_HEADER = "t,x,y,p"


@dataclass(frozen=True)
class Event:
    t: float
    x: int
    y: int
    p: int  # +1 or -1


@dataclass
class EventStream:
    """Time-sorted events over [t0, t_end]; ties break by (y, x, p).

    Columns are stored as parallel arrays for cheap windowed slicing.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    geometry: SensorGeometry
    t0: float = 0.0
    t_end: float = 0.0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        self.validate()

    def validate(self):
        n = self.t.size
        if not (self.x.size == self.y.size == self.p.size == n):
            raise ValueError("event columns must have equal length")
        if n:
            if np.any(np.diff(self.t) < 0):
                raise ValueError("event timestamps must be non-decreasing")
            if self.t[0] < self.t0 or self.t[-1] > self.t_end:
                raise ValueError("event timestamps must lie within [t0, t_end]")
            if np.any((self.p != 1) & (self.p != -1)):
                raise ValueError("polarity must be +1 or -1")
            if (
                self.x.min() < 0
                or self.x.max() >= self.geometry.width
                or self.y.min() < 0
                or self.y.max() >= self.geometry.height
            ):
                raise ValueError("event pixel out of sensor bounds")

    def __len__(self) -> int:
        return int(self.t.size)

    def pixel_index(self) -> np.ndarray:
        return self.y * self.geometry.width + self.x

    def slice_window(self, t_a: float, t_b: float):
        """Indices of events with t in (t_a, t_b]."""
        lo = int(np.searchsorted(self.t, t_a, side="right"))
        hi = int(np.searchsorted(self.t, t_b, side="right"))
        return lo, hi

    def active_pixel_mask(self) -> np.ndarray:
        """(height, width) bool mask of pixels that emitted at least one event."""
        mask = np.zeros((self.geometry.height, self.geometry.width), dtype=bool)
        mask[self.y, self.x] = True
        return mask


@dataclass(frozen=True)
class ThresholdField:
    """Dense per-pixel contrast thresholds, shape (height, width), all positive."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("threshold field must be a 2-D array")
        if np.any(v <= 0):
            raise ValueError("contrast thresholds must be positive everywhere")
        object.__setattr__(self, "values", v)


def true_threshold_field(geometry: SensorGeometry, c_base: float = 0.2) -> ThresholdField:
    """Ground-truth sinusoidal threshold field used for synthesis.

    C(u) = c_base + 0.03 sin(2π u_x / W) + 0.02 cos(2π u_y / H).
    """
    ux = np.arange(geometry.width, dtype=np.float64)
    uy = np.arange(geometry.height, dtype=np.float64)
    vals = (
        c_base
        + 0.03 * np.sin(2.0 * np.pi * ux / geometry.width)[None, :]
        + 0.02 * np.cos(2.0 * np.pi * uy / geometry.height)[:, None]
    )
    return ThresholdField(vals)


def synthesize_events(
    geometry: SensorGeometry,
    drift: DriftConfig,
    renderer: RendererConfig,
    theta_true: DynamicsParams,
    z0,
    field: ThresholdField,
    fps: float,
    duration: float,
    dt_max: float | None = None,
) -> EventStream:
    """Generate the ground-truth event stream on [0, duration].

    The latent offset is integrated with RK4 (step <= dt_max, default one
    quarter of the frame interval) with frame times as stops; per frame, each
    pixel emits one event per full threshold multiple crossed, timestamped by
    linear interpolation of log-intensity inside the frame interval.
    """
    if fps <= 0 or duration <= 0:
        raise ValueError("fps and duration must be positive")
    if field.values.shape != (geometry.height, geometry.width):
        raise ValueError("threshold field shape does not match geometry")

    n_frames = int(np.floor(duration * fps))
    frame_times = np.arange(n_frames + 1, dtype=np.float64) / fps
    if dt_max is None:
        dt_max = 1.0 / (4.0 * fps)
    fld = StableFocusField(theta_true)
    times, zs = integrate(fld.value, z0, 0.0, frame_times[-1], IntegratorConfig(dt_max), stops=frame_times)
    pos = np.searchsorted(times, frame_times)
    z_frames = zs[pos]

    centers = base_center(frame_times, drift) + z_frames
    C = field.values
    inv_C = 1.0 / C

    ref = render_log_intensity_map(centers[0], geometry, renderer)
    if not np.all(np.isfinite(ref)):
        raise FloatingPointError("non-finite rendered log-intensity at t=0")

    ts_out, xs_out, ys_out, ps_out = [], [], [], []
    yy, xx = np.mgrid[0 : geometry.height, 0 : geometry.width]
    for j in range(1, n_frames + 1):
        L = render_log_intensity_map(centers[j], geometry, renderer)
        if not np.all(np.isfinite(L)):
            raise FloatingPointError(f"non-finite rendered log-intensity at frame {j}")
        delta = L - ref
        n_cross = np.floor(np.abs(delta) * inv_C).astype(np.int64)
        fired = n_cross > 0
        if not np.any(fired):
            continue
        sgn = np.sign(delta[fired])
        counts = n_cross[fired]
        c_here = C[fired]
        d_here = delta[fired]
        x_here = xx[fired]
        y_here = yy[fired]
        # event i of a pixel crosses the level i*C away from the reference;
        # linear interpolation in log-intensity gives its sub-frame timestamp
        reps = np.repeat(np.arange(counts.size), counts)
        ends = np.cumsum(counts)
        k = np.arange(1, ends[-1] + 1) - np.repeat(ends - counts, counts)
        frac = (k * c_here[reps]) / np.abs(d_here[reps])
        t_ev = np.minimum(frame_times[j - 1] + frac / fps, frame_times[j])
        ts_out.append(t_ev)
        xs_out.append(np.repeat(x_here, counts))
        ys_out.append(np.repeat(y_here, counts))
        ps_out.append(np.repeat(sgn.astype(np.int64), counts))
        ref[fired] += sgn * counts * c_here

    if ts_out:
        t = np.concatenate(ts_out)
        x = np.concatenate(xs_out)
        y = np.concatenate(ys_out)
        p = np.concatenate(ps_out)
    else:
        t = np.empty(0, np.float64)
        x = np.empty(0, np.int64)
        y = np.empty(0, np.int64)
        p = np.empty(0, np.int64)
    order = np.lexsort((p, x, y, t))
    return EventStream(t[order], x[order], y[order], p[order], geometry, t0=0.0, t_end=float(frame_times[-1]))


class EventFileError(ValueError):
    """Malformed event file; message names the offending line."""


def write_events(stream: EventStream, path) -> None:
    """CSV with header and one row per event, exact float round-trip for t."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# geometry={stream.geometry.width}x{stream.geometry.height}"
                 f" t0={stream.t0!r} t_end={stream.t_end!r}\n")
        fh.write(EVENT_HEADER + "\n")
        for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p):
            fh.write(f"{float(t)!r},{x},{y},{p}\n")


def read_events(path) -> EventStream:
    """Inverse of write_events; raises EventFileError with a line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# geometry="):
        raise EventFileError("line 1: missing geometry header")
    try:
        meta = dict(item.split("=", 1) for item in lines[0][2:].split())
        w, h = (int(v) for v in meta["geometry"].split("x"))
        t0 = float(meta["t0"])
        t_end = float(meta["t_end"])
    except (KeyError, ValueError) as exc:
        raise EventFileError(f"line 1: bad geometry header ({exc})") from exc
    if len(lines) < 2 or lines[1] != EVENT_HEADER:
        raise EventFileError(f"line 2: expected header {EVENT_HEADER!r}")
    geometry = SensorGeometry(w, h)

    ts, xs, ys, ps = [], [], [], []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFileError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            x = int(parts[1])
            y = int(parts[2])
            p = int(parts[3])
        except ValueError as exc:
            raise EventFileError(f"line {lineno}: {exc}") from exc
        if p not in (1, -1):
            raise EventFileError(f"line {lineno}: polarity must be 1 or -1, got {p}")
        if not (0 <= x < w and 0 <= y < h):
            raise EventFileError(f"line {lineno}: pixel ({x},{y}) out of {w}x{h} sensor")
        if ts and t < ts[-1]:
            raise EventFileError(f"line {lineno}: timestamps not sorted")
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)
    try:
        return EventStream(
            np.array(ts), np.array(xs, np.int64), np.array(ys, np.int64), np.array(ps, np.int64),
            geometry, t0=t0, t_end=t_end,
        )
    except ValueError as exc:
        raise EventFileError(str(exc)) from exc
