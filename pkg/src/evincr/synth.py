"""Deterministic synthetic event streams: moving rectangles plus noise.

Objects bounce around the sensor; events fire on their boundary pixels
with polarity set by whether the edge is leading or trailing relative to
the motion, plus a small fraction of uniform background noise.  The same
seed always produces the same stream, byte for byte.
"""

from __future__ import annotations

import numpy as np

from .events import EventStream

__all__ = ["generate_events"]

DEFAULT_SENSOR = (64, 64)
NOISE_FRACTION = 0.05


def _reflect(start: np.ndarray, velocity: np.ndarray, t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Position under constant velocity with elastic reflection off [lo, hi]."""
    span = hi - lo
    period = 2.0 * span
    z = np.mod(start - lo + velocity * t, period)
    return lo + np.minimum(z, period - z)


def generate_events(
    seed: int,
    duration_us: int,
    rate_hz: float,
    n_objects: int = 2,
    sensor_size: tuple[int, int] = DEFAULT_SENSOR,
) -> EventStream:
    if duration_us < 0:
        raise ValueError("duration must be >= 0")
    if rate_hz < 0:
        raise ValueError("event rate must be >= 0")
    h, w = sensor_size
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(rate_hz * duration_us * 1e-6)) if duration_us else 0
    if n == 0 or n_objects < 1:
        return EventStream(sensor_size, [], [], [], [])

    half_x = rng.uniform(3.0, 7.0, n_objects)
    half_y = rng.uniform(3.0, 7.0, n_objects)
    cx0 = rng.uniform(half_x, w - 1 - half_x)
    cy0 = rng.uniform(half_y, h - 1 - half_y)
    angle = rng.uniform(0.0, 2.0 * np.pi, n_objects)
    speed = rng.uniform(0.05, 0.2, n_objects)  # px per ms
    vx = speed * np.cos(angle) * 1e-3  # px per us
    vy = speed * np.sin(angle) * 1e-3

    ts = np.sort(rng.uniform(0.0, float(duration_us), n))
    obj = rng.integers(0, n_objects, n)
    is_noise = rng.random(n) < NOISE_FRACTION

    cx = _reflect(cx0[obj], vx[obj], ts, half_x[obj], w - 1 - half_x[obj])
    cy = _reflect(cy0[obj], vy[obj], ts, half_y[obj], h - 1 - half_y[obj])

    edge = rng.integers(0, 4, n)
    u = rng.uniform(-1.0, 1.0, n)
    ex = np.where(edge < 2, cx + u * half_x[obj], cx + np.where(edge == 2, -half_x[obj], half_x[obj]))
    ey = np.where(edge < 2, cy + np.where(edge == 0, -half_y[obj], half_y[obj]), cy + u * half_y[obj])
    # Outward normal dotted with the (reflection-adjusted) velocity sign.
    nx = np.select([edge == 2, edge == 3], [-1.0, 1.0], default=0.0)
    ny = np.select([edge == 0, edge == 1], [-1.0, 1.0], default=0.0)
    vdir_x = np.sign(_reflect(cx0[obj], vx[obj], ts + 1.0, half_x[obj], w - 1 - half_x[obj]) - cx)
    vdir_y = np.sign(_reflect(cy0[obj], vy[obj], ts + 1.0, half_y[obj], h - 1 - half_y[obj]) - cy)
    pol = np.where(nx * vdir_x + ny * vdir_y > 0, 1, -1).astype(np.int8)

    noise_n = int(is_noise.sum())
    ex[is_noise] = rng.uniform(0, w - 1, noise_n)
    ey[is_noise] = rng.uniform(0, h - 1, noise_n)
    pol[is_noise] = rng.choice(np.array([-1, 1], dtype=np.int8), noise_n)

    xs = np.clip(np.rint(ex), 0, w - 1).astype(np.uint16)
    ys = np.clip(np.rint(ey), 0, h - 1).astype(np.uint16)
    return EventStream(sensor_size, ts.astype(np.uint64), xs, ys, pol)
