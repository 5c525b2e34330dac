"""Laplace noise primitives and the geometrically decaying noise schedule.

Sampling is done by inverse-CDF transform so that every variate is a pure
function of one uniform draw.  The mechanisms rely on this: client ``i``'s
noise at round ``t`` is the ``t``-th uniform of stream ``i`` scaled by the
round's Laplace parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSchedule",
    "ClientStreams",
    "laplace_pdf",
    "laplace_quantile",
    "sample_laplace",
    "schedule_scale",
    "spawn_streams",
]


def laplace_pdf(x, b):
    """Density of the zero-mean Laplace distribution with scale `b`.

    Works elementwise on arrays.

    >>> laplace_pdf(0.0, 1.0)
    0.5
    """
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr <= 0):
        raise ValueError(f"Laplace scale must be positive, got {b!r}")
    out = np.exp(-np.abs(x) / b_arr) / (2.0 * b_arr)
    return float(out) if np.ndim(out) == 0 else out


def laplace_quantile(u, b=1.0):
    """Map ``u`` in the open interval (-1/2, 1/2) to a Laplace(0, b) variate."""
    u = np.asarray(u, dtype=float)
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _open_uniform(rng: np.random.Generator, size=None):
    # Generator.random is on [0, 1); 0 maps to u = -1/2 and log(0).  Redraw it.
    r = rng.random(size)
    if size is None:
        while r == 0.0:
            r = rng.random()
        return r - 0.5
    bad = r == 0.0
    while bad.any():
        r[bad] = rng.random(int(bad.sum()))
        bad = r == 0.0
    return r - 0.5


def sample_laplace(b, rng: np.random.Generator, size=None):
    """Draw Laplace(0, b) variates from `rng`.

    ``b == 0`` is the point mass at zero; the uniform draws are still
    consumed so that a stream stays aligned whatever the scale.
    """
    if b < 0:
        raise ValueError(f"Laplace scale must be nonnegative, got {b!r}")
    z = laplace_quantile(_open_uniform(rng, size))
    if b == 0:
        return 0.0 if size is None else np.zeros_like(z)
    return float(b * z) if size is None else b * z


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-round Laplace scale ``c * q**t``.

    ``c == 0`` is accepted and means no noise at all.
    """

    c: float
    q: float

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError(f"c must be nonnegative, got {self.c!r}")
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in the open interval (0, 1), got {self.q!r}")

    def scale_at(self, t: int) -> float:
        return schedule_scale(self, t)

    def scales(self, T: int) -> np.ndarray:
        """Scales for rounds ``0 .. T-1``."""
        return self.c * self.q ** np.arange(T, dtype=float)


def schedule_scale(sched: NoiseSchedule, t: int) -> float:
    if t < 0:
        raise ValueError(f"round index must be nonnegative, got {t}")
    return sched.c * sched.q**t


def spawn_streams(seed, n: int) -> list[np.random.Generator]:
    """Spawn ``n + 1`` independent generators from one master seed.

    `seed` may be an int, a sequence of ints or a ``SeedSequence``.  The
    last generator is a spare that the mechanisms never draw from.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n + 1)]


class ClientStreams:
    """One independent uniform stream per client.

    ``standard_noise(T)`` returns a ``(T, n)`` array whose column ``i`` holds
    the first ``T`` unit-scale Laplace draws of client ``i``.  Rounds are
    consumed in order; asking for more rounds later continues the streams.
    """

    def __init__(self, seed, n: int):
        self.n = n
        self._gens = spawn_streams(seed, n)

    @property
    def spare(self) -> np.random.Generator:
        return self._gens[-1]

    def standard_noise(self, T: int = 1) -> np.ndarray:
        out = np.empty((T, self.n))
        for i in range(self.n):
            out[:, i] = laplace_quantile(_open_uniform(self._gens[i], T))
        return out

    def noise(self, sched: NoiseSchedule, t0: int, T: int = 1) -> np.ndarray:
        """Scaled noise for rounds ``t0 .. t0+T-1``, shape ``(T, n)``."""
        z = self.standard_noise(T)
        scales = sched.c * sched.q ** np.arange(t0, t0 + T, dtype=float)
        return z * scales[:, None]
