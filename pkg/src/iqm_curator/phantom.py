"""Synthetic volumes with analytically known foreground statistics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, stats

from .foreground import ForegroundMask
from .iqm import MISSING, IqmVector
from .volume_io import Volume

__all__ = ["PhantomSpec", "generate", "expected_iqms", "median_of_square"]


@dataclass(frozen=True)
class PhantomSpec:
    """Gaussian phantom description.

    ``shape`` is ``"sphere"`` (uses ``center`` and ``radius`` in voxels) or
    ``"box"`` (uses ``origin`` and ``extent``). A voxel is inside the sphere
    when its index lies within ``radius`` of ``center``.
    """

    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shape: str = "sphere"
    center: tuple[float, float, float] | None = None
    radius: float = 20.0
    origin: tuple[int, int, int] = (0, 0, 0)
    extent: tuple[int, int, int] = (1, 1, 1)
    muF: float = 100.0
    sigmaF: float = 10.0
    muB: float = 0.0
    sigmaB: float = 2.0
    noise: str = "gaussian"
    seed: int = 0
    id: str = "phantom"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"invalid dims {self.dims}")
        if self.sigmaF < 0 or self.sigmaB < 0:
            raise ValueError("sigmas must be non-negative")
        if self.noise != "gaussian":
            raise ValueError(f"unsupported noise model {self.noise!r}")
        if self.shape == "sphere":
            c = self.center if self.center is not None else tuple((d - 1) / 2 for d in dims)
            c = tuple(float(x) for x in c)
            object.__setattr__(self, "center", c)
            if self.radius <= 0:
                raise ValueError("radius must be positive")
            for ci, d in zip(c, dims):
                if ci - self.radius < 0 or ci + self.radius > d - 1:
                    raise ValueError(f"sphere (center {c}, radius {self.radius}) exceeds dims {dims}")
        elif self.shape == "box":
            o = tuple(int(x) for x in self.origin)
            e = tuple(int(x) for x in self.extent)
            object.__setattr__(self, "origin", o)
            object.__setattr__(self, "extent", e)
            if any(x < 0 for x in o) or any(x < 1 for x in e) or any(a + b > d for a, b, d in zip(o, e, dims)):
                raise ValueError(f"box (origin {o}, extent {e}) exceeds dims {dims}")
        else:
            raise ValueError(f"unknown shape {self.shape!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phantom spec keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)

    def mask(self) -> np.ndarray:
        if self.shape == "sphere":
            grids = np.ogrid[tuple(slice(0, d) for d in self.dims)]
            r2 = sum((g - c) ** 2 for g, c in zip(grids, self.center))
            return r2 <= self.radius**2
        m = np.zeros(self.dims, dtype=bool)
        m[tuple(slice(a, a + b) for a, b in zip(self.origin, self.extent))] = True
        return m


def generate(spec: PhantomSpec) -> tuple[Volume, ForegroundMask]:
    """Draw the phantom volume and return it with its analytic mask.

    Noise comes from ``numpy.random.Generator(PCG64(seed)).standard_normal``
    over the whole grid in C order, so identical specs give identical volumes.
    """
    inside = spec.mask()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    z = rng.standard_normal(spec.dims)
    data = np.where(inside, spec.muF + spec.sigmaF * z, spec.muB + spec.sigmaB * z)
    return Volume(spec.id, data, spec.spacing), ForegroundMask(inside, spec.spacing)


def median_of_square(mu: float, sigma: float) -> float:
    """Median of X**2 for X ~ N(mu, sigma**2)."""
    if sigma == 0:
        return mu * mu
    a = abs(mu)

    def cdf(m):
        r = math.sqrt(m)
        return stats.norm.cdf((r - a) / sigma) - stats.norm.cdf((-r - a) / sigma) - 0.5

    hi = (a + 10 * sigma) ** 2
    return float(optimize.brentq(cdf, 0.0, hi, xtol=1e-14, rtol=1e-14))


def expected_iqms(spec: PhantomSpec) -> IqmVector:
    """Analytic values of the moment-based metrics; the rest stay missing."""
    dmu = abs(spec.muF - spec.muB)
    cjv = (spec.sigmaF + spec.sigmaB) / dmu if dmu > 0 else MISSING
    cv = spec.sigmaF / spec.muF if spec.muF != 0 else MISSING
    snr1 = spec.sigmaF / spec.sigmaB if spec.sigmaB > 0 else MISSING
    mb = median_of_square(spec.muB, spec.sigmaB)
    fber = median_of_square(spec.muF, spec.sigmaF) / mb if mb > 0 else MISSING
    return IqmVector(spec.id, var=spec.sigmaF**2, cv=cv, snr1=snr1, cjv=cjv, fber=fber)
