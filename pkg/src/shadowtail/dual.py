"""Smooth log map between a variable bounded on [L, H] and an unbounded dual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class DualTransform:
    """The pair (L, H) defining ``phi(y) = L - H log((H - y) / (H - L))``."""

    L: float
    H: float

    def __post_init__(self):
        if not np.isfinite(self.H):
            raise DomainError(f"upper bound H must be finite, got {self.H}")
        if not self.L < self.H:
            raise DomainError(f"need L < H, got L={self.L}, H={self.H}")
        if not self.H > 0:
            # phi'(y) = H / (H - y) is positive only for H > 0
            raise DomainError(f"upper bound H must be positive, got {self.H}")

    def phi(self, y):
        return phi(self, y)

    def inverse(self, z):
        return phi_inverse(self, z)


def phi(t: DualTransform, y):
    """Forward map [L, H) -> [L, inf). Vectorised over ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y >= t.L)) or np.any(~(y < t.H)):
        raise DomainError(f"phi is defined on [{t.L}, {t.H}); got values outside")
    # log1p near L, a difference of logs near H (H - y is exact there)
    span = t.H - t.L
    with np.errstate(divide="ignore"):
        near_l = np.log1p((t.L - y) / span)
        near_h = np.log(t.H - y) - np.log(span)
    z = t.L - t.H * np.where(y - t.L < t.H - y, near_l, near_h)
    if np.any(np.isinf(z)):
        raise DomainError("phi diverges: observation within rounding of H")
    return _out(z)


def phi_inverse(t: DualTransform, z):
    """Inverse map [L, inf) -> [L, H). Vectorised over ``z``."""
    z = np.asarray(z, dtype=float)
    if np.any(~(z >= t.L)):
        raise DomainError(f"phi_inverse is defined on [{t.L}, inf)")
    # H - (H - L) exp((L - z)/H) written as L - (H - L) expm1((L - z)/H)
    y = t.L - (t.H - t.L) * np.expm1((t.L - z) / t.H)
    y = np.minimum(y, np.nextafter(t.H, -np.inf))
    return _out(y)


def phi_derivative(t: DualTransform, y):
    """d phi / dy = H / (H - y)."""
    y = np.asarray(y, dtype=float)
    return _out(t.H / (t.H - y))
