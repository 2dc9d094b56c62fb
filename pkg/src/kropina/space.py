"""The space record shared by the engine, the solver and the model spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import MetricField, VectorField, christoffel, orthonormal_frame
from .zermelo import NavigationData


@dataclass(frozen=True)
class SpaceDefinition:
    """A chart carrying navigation data (h, W) plus optional closed forms.

    ``coord_dim`` is the length of coordinate vectors. It equals ``dim`` for
    charts and exceeds it for embedded models (the odd spheres live in
    R^(n+1)). Providers left as None fall back to numerical integration.

    ``topology`` holds one entry per coordinate: None for unbounded, else the
    period. ``cover`` disables the identifications.
    """

    name: str
    dim: int
    metric: MetricField
    wind: VectorField
    coord_dim: int = 0
    flow: Optional[Callable] = None                 # (x, t) -> x
    flow_pushforward: Optional[Callable] = None     # (x, t, v) -> v
    h_geodesic: Optional[Callable] = None           # (x0, v0, t) -> x
    h_distance: Optional[Callable] = None           # (p, q) -> float
    h_directions: Optional[Callable] = None         # (p, q, tol) -> [unit v]
    acceleration: Optional[Callable] = None         # (x, v) -> xdd
    project: Optional[Callable] = None              # (x, v) -> (x, v)
    tangent_frame: Optional[Callable] = None        # x -> columns
    chord: Optional[Callable] = None                # (a, b, s) -> x
    topology: tuple = ()
    cover: bool = False
    quasi_regular: bool = False
    flow_period: Optional[float] = None
    box: Optional[tuple] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    vectorized: bool = False

    def __post_init__(self):
        if self.coord_dim == 0:
            object.__setattr__(self, "coord_dim", self.dim)
        if not self.topology:
            object.__setattr__(self, "topology", (None,) * self.coord_dim)

    @property
    def nav(self) -> NavigationData:
        return NavigationData(self.metric, self.wind)

    @property
    def periodic(self) -> bool:
        return not self.cover and any(p is not None for p in self.topology)

    def geodesic_acceleration(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.acceleration is not None:
            return self.acceleration(x, v)
        return -np.einsum("ijk,j,k->i", christoffel(self.metric, x), v, v)

    def frame(self, x) -> np.ndarray:
        """Columns: an h-orthonormal basis of the tangent space at x."""
        if self.tangent_frame is not None:
            return self.tangent_frame(np.asarray(x, dtype=float))
        return orthonormal_frame(self.metric, x)

    def wrap_difference(self, d: np.ndarray) -> np.ndarray:
        """Reduce a coordinate difference to the nearest lift (quotient mode)."""
        if not self.periodic:
            return d
        d = np.array(d, dtype=float)
        for i, per in enumerate(self.topology):
            if per is not None:
                d[..., i] = d[..., i] - per * np.round(d[..., i] / per)
        return d

    def same_point(self, p, q, tol: float = 1e-12) -> bool:
        d = self.wrap_difference(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))
        return bool(np.max(np.abs(d)) <= tol)

    def lifts(self, q, window: int = 2) -> list:
        """Representatives of q within +-window periods (q itself if none)."""
        q = np.asarray(q, dtype=float)
        if not self.periodic:
            return [q]
        axes = [i for i, p in enumerate(self.topology) if p is not None]
        reps = [q]
        for i in axes:
            per = self.topology[i]
            new = []
            for r in reps:
                for k in range(-window, window + 1):
                    s = r.copy()
                    s[i] += k * per
                    new.append(s)
            reps = new
        return reps

    def random_tangent(self, x, rng: np.random.Generator) -> np.ndarray:
        E = self.frame(x)
        return E @ rng.normal(size=E.shape[1])


def probe_points(space: SpaceDefinition, count: int, rng: np.random.Generator,
                 radius: float = 1.0) -> list:
    """Random points of the space (unit vectors on embedded spheres)."""
    pts = []
    for _ in range(count):
        if space.kind == "sphere":
            z = rng.normal(size=space.coord_dim)
            pts.append(z / np.linalg.norm(z))
        else:
            pts.append(rng.uniform(-radius, radius, size=space.coord_dim))
    return pts


def unit_admissible(space: SpaceDefinition, x, rng: np.random.Generator,
                    margin: float = 0.05) -> np.ndarray:
    """A random y with F(x, y) = 1, kept away from the degenerate v = -W."""
    W = space.wind.eval(x)
    while True:
        v = space.random_tangent(x, rng)
        v = v / math.sqrt(float(v @ space.metric.eval(x) @ v))
        y = v + W
        if math.sqrt(float(y @ space.metric.eval(x) @ y)) > margin:
            return y


def points_as_list(pts: Sequence) -> list:
    return [np.asarray(p, dtype=float) for p in pts]
