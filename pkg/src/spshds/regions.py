"""Simple bounded regions in slow coordinates: finite point sets, boxes, balls.

A region serves both as a compact set (distance, closed membership) and as
an open set (strict interior membership), depending on how a certificate
uses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class Region:
    kind: str
    points: np.ndarray | None = None
    low: np.ndarray | None = None
    high: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0

    @property
    def dim(self) -> int:
        if self.kind == "points":
            return self.points.shape[1]
        if self.kind == "box":
            return self.low.size
        return self.center.size

    def distance(self, X) -> np.ndarray:
        """Euclidean distance to the closed region."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "points":
            d = np.sqrt(((X[:, None, :] - self.points[None]) ** 2).sum(axis=2))
            return d.min(axis=1)
        if self.kind == "box":
            excess = np.maximum(self.low - X, 0.0) + np.maximum(X - self.high, 0.0)
            return np.sqrt((excess ** 2).sum(axis=1))
        r = np.sqrt(((X - self.center) ** 2).sum(axis=1))
        return np.maximum(r - self.radius, 0.0)

    def contains_closed(self, X) -> np.ndarray:
        return self.distance(X) <= 0.0

    def contains_open(self, X) -> np.ndarray:
        """Membership in the interior (empty for finite point sets)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "points":
            return np.zeros(X.shape[0], dtype=bool)
        if self.kind == "box":
            return np.all((X > self.low) & (X < self.high), axis=1)
        return np.sqrt(((X - self.center) ** 2).sum(axis=1)) < self.radius

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "points":
            return self.points.min(axis=0), self.points.max(axis=0)
        if self.kind == "box":
            return self.low.copy(), self.high.copy()
        return self.center - self.radius, self.center + self.radius

    def cloud(self, spacing: float = 0.05) -> np.ndarray:
        """Finite sample of the closed region; exact for point sets."""
        if self.kind == "points":
            return self.points.copy()
        lo, hi = self.bounding_box()
        axes = [np.linspace(a, b, max(2, int(np.ceil((b - a) / spacing)) + 1)) if b > a else np.array([a])
                for a, b in zip(lo, hi)]
        pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
        return pts[self.contains_closed(pts)] if self.kind == "ball" else pts

    def same_closure(self, other: "Region") -> bool:
        """True when the closure of ``other``'s interior equals this closed region."""
        if self.kind != other.kind or self.kind == "points":
            return False
        if self.kind == "box":
            return bool(np.array_equal(self.low, other.low) and np.array_equal(self.high, other.high))
        return bool(np.array_equal(self.center, other.center) and self.radius == other.radius)

    def to_config(self) -> dict:
        if self.kind == "points":
            return {"points": self.points.tolist()}
        if self.kind == "box":
            return {"box": {"low": self.low.tolist(), "high": self.high.tolist()}}
        return {"ball": {"center": self.center.tolist(), "radius": self.radius}}


def parse_region(spec, dim: int) -> Region:
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigurationError(f"region must be one of point/points/box/ball, got {spec!r}")
    (kind, arg), = spec.items()
    try:
        if kind == "point":
            pts = np.asarray([arg], dtype=float).reshape(1, -1)
            kind = "points"
        elif kind == "points":
            pts = np.atleast_2d(np.asarray(arg, dtype=float))
        if kind == "points":
            if pts.shape[1] != dim or pts.shape[0] == 0:
                raise ConfigurationError(f"region points must have dimension {dim}")
            return Region("points", points=pts)
        if kind == "box":
            lo = np.asarray(arg["low"], dtype=float).ravel()
            hi = np.asarray(arg["high"], dtype=float).ravel()
            if lo.size != dim or hi.size != dim or np.any(hi < lo):
                raise ConfigurationError(f"region box must be ordered with dimension {dim}")
            return Region("box", low=lo, high=hi)
        if kind == "ball":
            c = np.asarray(arg["center"], dtype=float).ravel()
            r = float(arg["radius"])
            if c.size != dim or not r > 0:
                raise ConfigurationError(f"region ball needs a center of dimension {dim} and positive radius")
            return Region("ball", center=c, radius=r)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed region {spec!r}") from exc
    raise ConfigurationError(f"unknown region kind {kind!r}")
