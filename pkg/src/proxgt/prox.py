"""Closed-form proximal operators for convex regularizers.

Indicator values outside the domain are reported as :data:`PLUS_INF`, a
sentinel that absorbs addition instead of a float ``inf`` that could turn
into NaN further down a logging path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadShape, NonFinite, ParseError

DOMAIN_TOL = 1e-9


class _PlusInfinity:
    """The extended-real value ``+inf``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "PLUS_INF"

    def __str__(self):
        return "inf"

    def __float__(self):
        return math.inf

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("PLUS_INF")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __reduce__(self):
        return (_PlusInfinity, ())


PLUS_INF = _PlusInfinity()


def is_finite_value(value) -> bool:
    return value is not PLUS_INF


@dataclass(frozen=True, eq=False)
class Regularizer:
    """A proper closed convex ``h``.

    ``kind`` is one of ``zero``, ``l1``, ``box`` or ``l2ball``. ``weight`` is
    the l1 coefficient, ``lo``/``hi`` the box bounds (scalars or length-p
    arrays), ``radius``/``center`` the ball.
    """

    kind: str = "zero"
    weight: float = 0.0
    lo: object = None
    hi: object = None
    radius: float = 1.0
    center: object = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "box", "l2ball"):
            raise BadShape(f"unknown regularizer kind {self.kind!r}")
        if self.kind == "l1" and self.weight < 0:
            raise BadShape("l1 weight must be nonnegative")
        if self.kind == "box":
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if np.any(lo > hi):
                raise BadShape("box requires lo <= hi elementwise")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        if self.kind == "l2ball":
            if not self.radius > 0:
                raise BadShape("l2ball radius must be positive")
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def is_indicator(self) -> bool:
        return self.kind in ("box", "l2ball")

    def __eq__(self, other):
        if not isinstance(other, Regularizer):
            return NotImplemented
        return self.spec() == other.spec()

    def __hash__(self):
        return hash(self.spec())

    def spec(self) -> str:
        """Inverse of :func:`parse_regularizer` for scalar parameters."""
        if self.kind == "zero":
            return "zero"
        if self.kind == "l1":
            return f"l1:{self.weight!r}"
        if self.kind == "box":
            if self.lo.ndim or self.hi.ndim:
                return f"box:{self.lo.tolist()}:{self.hi.tolist()}"
            return f"box:{float(self.lo)!r}:{float(self.hi)!r}"
        if np.any(self.center != 0):
            return f"l2ball:{self.radius!r}:{self.center.tolist()}"
        return f"l2ball:{self.radius!r}"


def zero() -> Regularizer:
    return Regularizer("zero")


def l1(weight: float) -> Regularizer:
    return Regularizer("l1", weight=float(weight))


def box(lo, hi) -> Regularizer:
    return Regularizer("box", lo=lo, hi=hi)


def l2ball(radius: float, center=0.0) -> Regularizer:
    return Regularizer("l2ball", radius=float(radius), center=center)


def parse_regularizer(spec: str) -> Regularizer:
    """``zero``, ``l1:<lambda>``, ``box:<lo>:<hi>`` or ``l2ball:<r>``."""
    parts = spec.strip().split(":")
    try:
        if parts == ["zero"]:
            return zero()
        if parts[0] == "l1" and len(parts) == 2:
            return l1(float(parts[1]))
        if parts[0] == "box" and len(parts) == 3:
            return box(float(parts[1]), float(parts[2]))
        if parts[0] == "l2ball" and len(parts) == 2:
            return l2ball(float(parts[1]))
    except ValueError as exc:
        raise ParseError(f"bad regularizer spec {spec!r}") from exc
    raise ParseError(f"bad regularizer spec {spec!r}")


def _check_finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFinite("non-finite input to regularizer")
    return x


def prox_eval(h: Regularizer, alpha: float, x) -> np.ndarray:
    """``argmin_u 0.5 ||u - x||^2 + alpha h(u)``.

    Works on a single vector or row-wise on an ``(n, p)`` stack.
    """
    if not alpha > 0:
        raise ValueError(f"prox step must be positive, got {alpha}")
    x = _check_finite(x)
    if h.kind == "zero":
        return x.copy()
    if h.kind == "l1":
        thresh = alpha * h.weight
        return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)
    if h.kind == "box":
        return np.clip(x, h.lo, h.hi)
    # l2ball: radial projection
    dev = x - h.center
    norm = np.linalg.norm(dev, axis=-1, keepdims=True)
    scale = np.where(norm > h.radius, h.radius / np.where(norm > 0, norm, 1.0), 1.0)
    out = dev * scale
    # rounding can leave the projection an ulp outside; pull it back in
    for _ in range(4):
        over = np.linalg.norm(out, axis=-1, keepdims=True) > h.radius
        if not np.any(over):
            break
        out = np.where(over, out * (1.0 - 2.0 * np.finfo(float).eps), out)
    return h.center + out


def project(h: Regularizer, x) -> np.ndarray:
    """Nearest point of dom(h); identity when h is finite everywhere."""
    if not h.is_indicator:
        return np.asarray(x, dtype=float).copy()
    return prox_eval(h, 1.0, x)


def in_domain(h: Regularizer, x, tol: float = DOMAIN_TOL) -> bool:
    x = _check_finite(x)
    if h.kind == "box":
        lo_ok = x >= h.lo - tol * (1.0 + np.abs(h.lo))
        hi_ok = x <= h.hi + tol * (1.0 + np.abs(h.hi))
        return bool(np.all(lo_ok & hi_ok))
    if h.kind == "l2ball":
        norm = np.linalg.norm(x - h.center, axis=-1)
        return bool(np.all(norm <= h.radius * (1.0 + tol)))
    return True


def h_eval(h: Regularizer, x):
    """Value of ``h`` at a single vector; :data:`PLUS_INF` outside dom(h)."""
    x = _check_finite(x)
    if h.kind == "zero":
        return 0.0
    if h.kind == "l1":
        return float(h.weight * np.sum(np.abs(x)))
    return 0.0 if in_domain(h, x) else PLUS_INF


def fixed_point_residual(h: Regularizer, alpha: float, x, grad) -> float:
    """``||x - prox_{alpha h}(x - alpha grad)|| / alpha``."""
    x = np.asarray(x, dtype=float)
    step = prox_eval(h, alpha, x - alpha * np.asarray(grad, dtype=float))
    return float(np.linalg.norm(x - step) / alpha)
