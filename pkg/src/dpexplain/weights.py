"""Distance weights for the local loss.

An admissible weight is non-increasing in the distance to the query point and
never exceeds the envelope ``c / (2 d (d + 1))``.  Under that envelope, removing
one record moves the loss gradient by at most ``c / m``, which is what the
Gaussian noise is calibrated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

WeightKind = Literal["stable", "exponential_local", "custom_envelope"]

#: Smallest ``c`` for which ``exp(-d**2)`` stays under the envelope.  The
#: maximum of ``2 d (d + 1) exp(-d**2)`` sits near ``d = 0.8546``.
EXP_LOCAL_MIN_C = 1.5270737261541001


def radius_r(c: float) -> float:
    """Plateau radius of the stable weight, the positive root of ``2r(1 + r) = c``."""
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    # c / (sqrt(2c + 1) + 1) equals (sqrt(2c + 1) - 1) / 2 without the cancellation.
    return c / (math.sqrt(2.0 * c + 1.0) + 1.0)


def envelope(dist, c: float):
    """The sensitivity envelope ``c / (2 d (d + 1))``; infinite at ``d = 0``."""
    d = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = c / (2.0 * d * (d + 1.0))
    return float(out) if out.ndim == 0 else out


def alpha_stable(dist, c: float = 1.0):
    """Stable weight: 1 inside radius ``r``, the envelope outside it.

    Accepts a scalar or an array of distances and returns the same shape.
    """
    d = np.asarray(dist, dtype=float)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite and non-negative")
    r = radius_r(c)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(d <= r, 1.0, c / (2.0 * d * (1.0 + d)))
    return float(out) if out.ndim == 0 else out


def alpha_exponential(dist):
    """``exp(-d**2)``; admissible only for ``c >= EXP_LOCAL_MIN_C``."""
    d = np.asarray(dist, dtype=float)
    out = np.exp(-(d**2))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightSpec:
    """A weight function together with its sensitivity scale ``c``.

    ``custom_envelope`` takes a tabulated weight (``table_d``, ``table_w``),
    linearly interpolated, flat before the first knot and zero past the last.
    Non-stable kinds are validated against the envelope on construction.
    """

    c: float = 1.0
    kind: WeightKind = "stable"
    table_d: tuple[float, ...] | None = field(default=None, repr=False)
    table_w: tuple[float, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.kind not in ("stable", "exponential_local", "custom_envelope"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "custom_envelope":
            if self.table_d is None or self.table_w is None:
                raise ValueError("custom_envelope needs table_d and table_w")
            td = np.asarray(self.table_d, dtype=float)
            tw = np.asarray(self.table_w, dtype=float)
            if td.ndim != 1 or td.shape != tw.shape or td.size < 1:
                raise ValueError("table_d and table_w must be 1-d and equally long")
            if np.any(np.diff(td) <= 0) or td[0] < 0:
                raise ValueError("table_d must be non-negative and strictly increasing")
        if self.kind != "stable" and not family_check(self, samples=10_000):
            raise ValueError(
                f"{self.kind} weight leaves the sensitivity envelope for c={self.c}"
            )

    @property
    def radius(self) -> float:
        return radius_r(self.c)

    def __call__(self, dist):
        if self.kind == "stable":
            return alpha_stable(dist, self.c)
        if self.kind == "exponential_local":
            return alpha_exponential(dist)
        d = np.asarray(dist, dtype=float)
        out = np.interp(d, self.table_d, self.table_w, right=0.0)
        return float(out) if out.ndim == 0 else out


def family_check(w, samples: int = 10_000, seed: int = 0, c: float | None = None) -> bool:
    """Check a weight against the admissible family on random distances.

    ``w`` is a :class:`WeightSpec` or any callable mapping distances to
    weights (then ``c`` must be given).  Distances are drawn log-uniformly
    over ``[1e-6, 1e4]``; the check fails if any weight exceeds the envelope
    or if the weights increase anywhere along the sorted sample.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if c is None:
        c = w.c
    if isinstance(w, WeightSpec):
        fn = lambda d: _raw_weight(w, d)  # noqa: E731
    else:
        fn = w
    rng = np.random.default_rng(seed)
    d = np.sort(10.0 ** rng.uniform(-6.0, 4.0, size=samples))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(fn(d), dtype=float)
    if vals.shape != d.shape or not np.all(np.isfinite(vals)) or np.any(vals < 0):
        return False
    if np.any(vals > envelope(d, c) + 1e-12):
        return False
    return bool(np.all(np.diff(vals) <= 1e-15))


def _raw_weight(w: WeightSpec, d):
    # bypasses __call__ so validation inside __post_init__ does not recurse
    if w.kind == "stable":
        return alpha_stable(d, w.c)
    if w.kind == "exponential_local":
        return alpha_exponential(d)
    return np.interp(d, w.table_d, w.table_w, right=0.0)
